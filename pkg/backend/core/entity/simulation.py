# core/entity/simulation.py
"""
Synthetic strata, seeded replications and their aggregation.

Replication r of an experiment draws everything from
default_rng(SeedSequence(seed, spawn_key=(r,))), so its results are a pure
function of (config, seed, r) and do not depend on the order, or the
process, in which replications run.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from core.entity.estimators import eta_gmle, naive, naive_population_limit, population_eta
from core.entity.gmle_solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    LikelihoodCache,
    ObservationSet,
    SupportGrid,
    default_grid,
    em_fit,
)
from core.entity.mixture_models import CENSORED, MODES, ModelSpec, Outcome, ThetaPoint, as_theta_array
from core.exceptions import ContractViolation, DomainError, GmleError, UnsupportedError

logger = logging.getLogger(__name__)

TWO_TYPE = "two_type"
UNIFORM_MIX = "uniform_mix"
EXPLICIT = "explicit"
POPULATION_KINDS = (TWO_TYPE, UNIFORM_MIX, EXPLICIT)

GMLE = "gmle"
NAIVE = "naive"


@dataclass(frozen=True)
class PopulationSpec:
    """How the per-stratum parameters theta_i are laid out.

    two_type and uniform_mix describe (pi, p) pairs; explicit points are
    tiled cyclically over the strata.
    """

    kind: str
    n_strata: int
    delta: Optional[float] = None
    range_a: Optional[Tuple[float, float]] = None
    range_b: Optional[Tuple[float, float]] = None
    points: Tuple[ThetaPoint, ...] = ()

    def __post_init__(self):
        if self.kind not in POPULATION_KINDS:
            raise DomainError(f"Unknown population kind '{self.kind}'.")
        if self.n_strata < 1:
            raise DomainError("n_strata must be >= 1.")
        if self.kind == TWO_TYPE:
            if self.delta is None or not 0.0 <= self.delta < 0.5:
                raise DomainError("two_type needs 0 <= delta < 0.5.")
            if self.n_strata % 2:
                raise DomainError("two_type splits the strata exactly in half; n_strata must be even.")
        if self.kind == UNIFORM_MIX:
            for rng_ in (self.range_a, self.range_b):
                if rng_ is None or not 0.0 < rng_[0] < rng_[1] < 1.0:
                    raise DomainError("uniform_mix ranges must satisfy 0 < lo < hi < 1.")
        if self.kind == EXPLICIT and not self.points:
            raise DomainError("An explicit population needs at least one point.")

    @property
    def is_random(self) -> bool:
        return self.kind == UNIFORM_MIX

    def as_dict(self) -> dict:
        data = {"kind": self.kind, "n_strata": self.n_strata}
        if self.kind == TWO_TYPE:
            data["delta"] = self.delta
        elif self.kind == UNIFORM_MIX:
            data["range_a"] = list(self.range_a)
            data["range_b"] = list(self.range_b)
        else:
            data["points"] = [list(p) for p in self.points]
        return data


@dataclass(frozen=True)
class ExperimentConfig:
    config_id: str
    model: ModelSpec
    population: PopulationSpec
    mode: str = CENSORED
    grid_res: int = 50
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    replications: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}.")
        if self.replications < 1:
            raise DomainError("replications must be >= 1.")

    def as_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "model": self.model.describe(),
            "population": self.population.as_dict(),
            "mode": self.mode,
            "grid_res": self.grid_res,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "replications": self.replications,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    gmle: Optional[Tuple[float, ...]]
    naive: Optional[Tuple[float, ...]]
    truth: Tuple[float, ...]
    n_nonresponse: int
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    certificate: Optional[float] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class EstimatorSummary:
    estimator: str
    mean: float
    sd: float
    n_reps: int
    n_failed: int


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    results: Tuple[ReplicationResult, ...]
    summaries: Tuple[EstimatorSummary, ...]
    naive_limit: Optional[Tuple[float, ...]] = None
    reference: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.results)

    def summary(self, estimator: str) -> EstimatorSummary:
        for s in self.summaries:
            if s.estimator == estimator:
                return s
        raise KeyError(estimator)

    def raw(self, estimator: str) -> list:
        return [getattr(r, estimator) for r in self.results]

    def as_dict(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "summaries": [asdict(s) for s in self.summaries],
            "naive_limit": None if self.naive_limit is None else list(self.naive_limit),
            "n_failed": self.n_failed,
            "n_unconverged": sum(r.converged is False for r in self.results),
            "replications": [asdict(r) for r in self.results],
            "reference": self.reference,
        }


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))


def gen_population(pspec: PopulationSpec, rng: np.random.Generator) -> np.ndarray:
    n = pspec.n_strata
    if pspec.kind == TWO_TYPE:
        half = n // 2
        low, high = 0.5 - pspec.delta, 0.5 + pspec.delta
        return np.array([[low, low]] * half + [[high, high]] * (n - half))
    if pspec.kind == UNIFORM_MIX:
        half = n // 2
        first = rng.uniform(*pspec.range_a, size=(half, 2))
        second = rng.uniform(*pspec.range_b, size=(n - half, 2))
        return np.vstack([first, second])
    points = as_theta_array(pspec.points)
    return points[np.arange(n) % len(points)]


def draw_outcomes(spec: ModelSpec, population: np.ndarray, rng: np.random.Generator) -> list[Outcome]:
    """One observed outcome per stratum, in stratum order."""
    population = as_theta_array(population)
    spec.check_thetas(population)
    return spec.sample(population, rng)


def draw_observations(spec: ModelSpec, population: np.ndarray, rng: np.random.Generator) -> ObservationSet:
    return ObservationSet.from_outcomes(draw_outcomes(spec, population, rng), mode=CENSORED)


def to_truncated(obs: ObservationSet) -> ObservationSet:
    return obs.to_truncated()


def replication_data(config: ExperimentConfig, r: int) -> Tuple[np.ndarray, list[Outcome]]:
    """Re-derive replication r's population and per-stratum outcomes."""
    rng = replication_rng(config.seed, r)
    population = gen_population(config.population, rng)
    return population, draw_outcomes(config.model, population, rng)


@lru_cache(maxsize=8)
def _fit_context(config: ExperimentConfig) -> Tuple[SupportGrid, LikelihoodCache]:
    grid = default_grid(config.model, config.grid_res)
    return grid, LikelihoodCache(config.model, grid, config.mode)


def _as_tuple(values) -> Optional[Tuple[float, ...]]:
    return None if values is None else tuple(float(v) for v in values)


def run_replication(config: ExperimentConfig, r: int) -> ReplicationResult:
    """Fit-and-estimate for replication r. Module level so worker processes can pickle it."""
    spec = config.model
    population, outcomes = replication_data(config, r)
    obs = ObservationSet.from_outcomes(outcomes, mode=CENSORED)
    truth = _as_tuple(population_eta(spec, population))
    try:
        naive_value = _as_tuple(naive(spec, obs))
    except UnsupportedError:
        naive_value = None
    try:
        grid, cache = _fit_context(config)
        fit_obs = obs if config.mode == CENSORED else obs.to_truncated()
        L = cache.matrix(fit_obs)
        sol = em_fit(L, fit_obs.counts_array(), tol=config.tol, max_iter=config.max_iter)
    except GmleError as exc:
        # a failed replication is dropped from every estimator, naive included
        logger.warning("Replication %d of %s failed: %s", r, config.config_id, exc)
        return ReplicationResult(
            index=r,
            gmle=None,
            naive=None,
            truth=truth,
            n_nonresponse=obs.n_nonresponse,
            error=f"{type(exc).__name__}: {exc}",
        )
    return ReplicationResult(
        index=r,
        gmle=_as_tuple(eta_gmle(spec, grid, sol.weights)),
        naive=naive_value,
        truth=truth,
        n_nonresponse=obs.n_nonresponse,
        iterations=sol.iterations,
        converged=sol.converged,
        certificate=sol.certificate,
    )


def estimator_names(name: str, dim: int) -> list[str]:
    if dim == 1:
        return [name]
    return [f"{name}_s{s + 1}" for s in range(dim)]


def _summarize(name: str, values: Sequence[Optional[Tuple[float, ...]]], dim: int) -> list[EstimatorSummary]:
    present = [v for v in values if v is not None]
    n_failed = len(values) - len(present)
    arr = np.array(present, dtype=float).reshape(len(present), dim)
    out = []
    for j, label in enumerate(estimator_names(name, dim)):
        column = arr[:, j]
        mean = float(column.mean()) if len(column) else float("nan")
        sd = float(column.std(ddof=1)) if len(column) > 1 else float("nan")
        out.append(EstimatorSummary(estimator=label, mean=mean, sd=sd, n_reps=len(column), n_failed=n_failed))
    return out


def summarize(config: ExperimentConfig, results: Sequence[ReplicationResult]) -> ExperimentReport:
    """Aggregate replications, already ordered by index, into per-estimator mean and sd."""
    if [r.index for r in results] != list(range(len(results))):
        raise ContractViolation("Replication results must be indexed 0..R-1 in order.")
    dim = config.model.eta_dim
    summaries = _summarize(NAIVE, [r.naive for r in results], dim) + _summarize(GMLE, [r.gmle for r in results], dim)
    if config.population.is_random:
        limits = [naive_population_limit(config.model, replication_data(config, r.index)[0]) for r in results]
        limits = [v for v in limits if v is not None]
        limit = np.mean(limits, axis=0) if limits else None
    else:
        limit = naive_population_limit(config.model, gen_population(config.population, replication_rng(config.seed, 0)))
    return ExperimentReport(
        config=config,
        results=tuple(results),
        summaries=tuple(summaries),
        naive_limit=_as_tuple(limit),
    )
