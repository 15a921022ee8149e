# core/boundary/config_serializers.py

from __future__ import annotations

from django.conf import settings
from rest_framework import serializers

from core.entity.mixture_models import (
    CENSORED,
    ETA_THETA,
    ETA_THETA_SQUARED,
    FAMILIES,
    MODES,
    TRUNCATED,
    ModelSpec,
    as_theta_array,
    build_model,
)
from core.entity.simulation import EXPLICIT, POPULATION_KINDS, TWO_TYPE, UNIFORM_MIX, ExperimentConfig, PopulationSpec
from core.exceptions import GmleError

# Families whose parameter is a (pi or lambda, p) pair, which the generated populations produce.
PAIR_FAMILIES = ("binom", "poisson")
FIT_FAMILIES = ("binom", "poisson", "bernoulli")


def _gmle(key):
    return lambda: settings.GMLE[key]


def _simulation(key):
    return lambda: settings.SIMULATION[key]


class RangeField(serializers.Field):
    """`lo:hi` on the way in, a (lo, hi) tuple inside."""

    default_error_messages = {"invalid": "Expected 'lo:hi' with lo < hi."}

    def to_internal_value(self, data):
        try:
            if isinstance(data, str):
                lo, hi = (float(v) for v in data.split(":"))
            else:
                lo, hi = (float(v) for v in data)
        except (TypeError, ValueError):
            self.fail("invalid")
        if not lo < hi:
            self.fail("invalid")
        return (lo, hi)

    def to_representation(self, value):
        return f"{value[0]}:{value[1]}"


class PointsField(serializers.Field):
    """`a,b;c,d` on the way in, a tuple of parameter tuples inside."""

    default_error_messages = {"invalid": "Expected points as 'a,b;c,d'."}

    def to_internal_value(self, data):
        try:
            if isinstance(data, str):
                points = tuple(tuple(float(v) for v in chunk.split(",")) for chunk in data.split(";") if chunk.strip())
            else:
                points = tuple(tuple(float(v) for v in p) for p in data)
        except (TypeError, ValueError):
            self.fail("invalid")
        if not points or len({len(p) for p in points}) != 1:
            self.fail("invalid")
        return points

    def to_representation(self, value):
        return ";".join(",".join(str(v) for v in p) for p in value)


class ModelFieldsMixin(serializers.Serializer):
    kappa = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    max_attempts = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    categories = serializers.IntegerField(min_value=2, required=False, allow_null=True)
    lambda_max = serializers.FloatField(required=False, default=_gmle("POISSON_LAMBDA_MAX"))
    bernoulli_eta = serializers.ChoiceField(choices=[ETA_THETA, ETA_THETA_SQUARED], required=False, default=ETA_THETA)

    REQUIRED_CONSTANTS = {
        "binom": ("kappa",),
        "geom": ("max_attempts", "categories"),
        "poisson": ("lambda_max",),
        "bernoulli": ("bernoulli_eta",),
    }

    def build_model(self, attrs) -> ModelSpec:
        family = attrs["family"]
        missing = {k: "This field is required for the %s family." % family
                   for k in self.REQUIRED_CONSTANTS[family] if attrs.get(k) is None}
        if missing:
            raise serializers.ValidationError(missing)
        constants = {
            "binom": lambda: {"kappa": attrs["kappa"]},
            "geom": lambda: {"max_attempts": attrs["max_attempts"], "categories": attrs["categories"]},
            "poisson": lambda: {"lambda_max": attrs["lambda_max"]},
            "bernoulli": lambda: {"eta": attrs["bernoulli_eta"]},
        }[family]()
        try:
            return build_model(family, **constants)
        except GmleError as exc:
            raise serializers.ValidationError({"family": str(exc)})

    @staticmethod
    def check_mode(model: ModelSpec, mode: str) -> None:
        if mode == TRUNCATED and not model.has_nonresponse:
            raise serializers.ValidationError({"mode": f"The {model.family} family is fitted in censored mode only."})


class ExperimentConfigSerializer(ModelFieldsMixin):
    """One simulation configuration, from a flat key-value document plus CLI overrides."""

    config_id = serializers.RegexField(r"^[A-Za-z0-9_.\-]+$", max_length=80)
    family = serializers.ChoiceField(choices=sorted(FAMILIES))
    population = serializers.ChoiceField(choices=POPULATION_KINDS)
    delta = serializers.FloatField(min_value=0.0, max_value=0.4999999, required=False, allow_null=True)
    range_a = RangeField(required=False, allow_null=True)
    range_b = RangeField(required=False, allow_null=True)
    points = PointsField(required=False, allow_null=True)
    n_strata = serializers.IntegerField(min_value=1, required=False, default=1000)
    mode = serializers.ChoiceField(choices=MODES, required=False, default=CENSORED)
    grid_res = serializers.IntegerField(min_value=2, required=False, default=_gmle("GRID_RES"))
    tol = serializers.FloatField(min_value=0.0, required=False, default=_gmle("TOL"))
    max_iter = serializers.IntegerField(min_value=1, required=False, default=_gmle("MAX_ITER"))
    reps = serializers.IntegerField(min_value=1, required=False, default=_simulation("REPLICATIONS"))
    seed = serializers.IntegerField(min_value=0, required=False, default=_simulation("SEED"))

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError("tol must be > 0.")
        return value

    def validate(self, attrs):
        model = self.build_model(attrs)
        self.check_mode(model, attrs["mode"])
        kind = attrs["population"]
        if kind in (TWO_TYPE, UNIFORM_MIX) and model.family not in PAIR_FAMILIES:
            raise serializers.ValidationError(
                {"population": f"'{kind}' generates (pi, p) pairs; use 'explicit' points for {model.family}."}
            )
        needed = {TWO_TYPE: ("delta",), UNIFORM_MIX: ("range_a", "range_b"), EXPLICIT: ("points",)}[kind]
        missing = {k: f"This field is required for a {kind} population." for k in needed if attrs.get(k) is None}
        if missing:
            raise serializers.ValidationError(missing)
        if kind == EXPLICIT:
            try:
                model.check_thetas(as_theta_array(attrs["points"]))
            except GmleError as exc:
                raise serializers.ValidationError({"points": str(exc)})
        try:
            population = PopulationSpec(
                kind=kind,
                n_strata=attrs["n_strata"],
                delta=attrs.get("delta") if kind == TWO_TYPE else None,
                range_a=attrs.get("range_a") if kind == UNIFORM_MIX else None,
                range_b=attrs.get("range_b") if kind == UNIFORM_MIX else None,
                points=attrs.get("points") or () if kind == EXPLICIT else (),
            )
            attrs["experiment"] = ExperimentConfig(
                config_id=attrs["config_id"],
                model=model,
                population=population,
                mode=attrs["mode"],
                grid_res=attrs["grid_res"],
                tol=attrs["tol"],
                max_iter=attrs["max_iter"],
                replications=attrs["reps"],
                seed=attrs["seed"],
            )
        except GmleError as exc:
            raise serializers.ValidationError({"population": str(exc)})
        return attrs

    @staticmethod
    def flatten(config: ExperimentConfig) -> dict:
        """Inverse of validation: the flat document that rebuilds `config`."""
        model = config.model.describe()
        family = model.pop("family")
        flat = {"config_id": config.config_id, "family": family}
        if family == "bernoulli":
            flat["bernoulli_eta"] = model["eta"]
        else:
            flat.update(model)
        pop = config.population
        flat["population"] = pop.kind
        flat["n_strata"] = pop.n_strata
        if pop.kind == TWO_TYPE:
            flat["delta"] = pop.delta
        elif pop.kind == UNIFORM_MIX:
            flat["range_a"] = RangeField().to_representation(pop.range_a)
            flat["range_b"] = RangeField().to_representation(pop.range_b)
        else:
            flat["points"] = PointsField().to_representation(pop.points)
        flat.update(
            mode=config.mode,
            grid_res=config.grid_res,
            tol=config.tol,
            max_iter=config.max_iter,
            reps=config.replications,
            seed=config.seed,
        )
        return flat


class FitOptionsSerializer(ModelFieldsMixin):
    family = serializers.ChoiceField(choices=FIT_FAMILIES)
    mode = serializers.ChoiceField(choices=MODES, required=False, default=CENSORED)
    grid_res = serializers.IntegerField(min_value=2, required=False, default=_gmle("GRID_RES"))
    tol = serializers.FloatField(min_value=0.0, required=False, default=_gmle("TOL"))
    max_iter = serializers.IntegerField(min_value=1, required=False, default=_gmle("MAX_ITER"))
    starts = serializers.IntegerField(min_value=1, required=False, default=1)
    seed = serializers.IntegerField(min_value=0, required=False, default=_simulation("SEED"))
    threshold = serializers.FloatField(min_value=0.0, required=False, default=_gmle("REPORT_THRESHOLD"))

    def validate_tol(self, value):
        if value <= 0:
            raise serializers.ValidationError("tol must be > 0.")
        return value

    def validate(self, attrs):
        attrs["model"] = self.build_model(attrs)
        self.check_mode(attrs["model"], attrs["mode"])
        return attrs


class StratumRowSerializer(serializers.Serializer):
    """One row of `stratum_id,kappa_attempted,kappa_responded,x`; blank cells arrive as None."""

    stratum_id = serializers.CharField(max_length=120)
    kappa_attempted = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    kappa_responded = serializers.IntegerField(min_value=0)
    x = serializers.IntegerField(min_value=0, required=False, allow_null=True)

    def validate(self, attrs):
        kr = attrs["kappa_responded"]
        x = attrs.get("x")
        attempted = attrs.get("kappa_attempted")
        if kr == 0:
            if x not in (None, 0):
                raise serializers.ValidationError({"x": "A nonresponse row must leave x empty or 0."})
        elif x is None:
            raise serializers.ValidationError({"x": "x is required when kappa_responded > 0."})
        elif x > kr:
            raise serializers.ValidationError({"x": "x cannot exceed kappa_responded."})
        if attempted is not None and kr > attempted:
            raise serializers.ValidationError({"kappa_responded": "kappa_responded cannot exceed kappa_attempted."})
        return attrs


def error_text(errors) -> str:
    """Flatten serializer errors into `field: message` fragments."""
    if isinstance(errors, dict):
        parts = []
        for key, value in errors.items():
            inner = error_text(value)
            parts.append(inner if key == "non_field_errors" else f"{key}: {inner}")
        return "; ".join(parts)
    if isinstance(errors, (list, tuple)):
        return " ".join(error_text(e) for e in errors)
    return str(errors)
