# core/entity/mixture_models.py
"""
Model families for stratum data with nonresponse.

Each family knows its outcome space, the per-parameter outcome
probabilities in the censored and truncated regimes, and the pair of
functions (h, eta) with E(h(Y) | response, theta) = eta(theta).

Parameter points are plain float tuples; grids are 2-D numpy arrays with
one row per point, so every probability is computed for a whole grid at
once. Probabilities are built in log space and returned on the linear
scale.
"""
from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar, Sequence, Tuple

import numpy as np
from scipy import special, stats

from core.exceptions import (
    ContractViolation,
    DomainError,
    SingularParameterError,
    TruncationError,
    UnsupportedError,
)

ThetaPoint = Tuple[float, ...]

CENSORED = "censored"
TRUNCATED = "truncated"
MODES = (CENSORED, TRUNCATED)

ETA_THETA = "theta"
ETA_THETA_SQUARED = "theta_squared"

SIMPLEX_TOL = 1e-12
POISSON_LEAK_TOL = 1e-12
LATTICE_EPS = 0.01


@dataclass(frozen=True, order=True)
class Outcome:
    """An observed value t(Y): a Response payload, or Nonresponse (no payload)."""

    nonresponse: bool = False
    payload: Tuple[int, ...] = ()

    @classmethod
    def response(cls, *payload: int) -> "Outcome":
        return cls(nonresponse=False, payload=tuple(int(v) for v in payload))

    @property
    def is_response(self) -> bool:
        return not self.nonresponse

    @property
    def tag(self) -> str:
        return "nonresponse" if self.nonresponse else "response"

    def __str__(self) -> str:
        if self.nonresponse:
            return "Nonresponse"
        return "Response(" + ", ".join(str(v) for v in self.payload) + ")"


NONRESPONSE = Outcome(nonresponse=True)


def as_theta_array(thetas) -> np.ndarray:
    arr = np.asarray(thetas, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def _unit_interval(values: np.ndarray) -> bool:
    return bool(np.all((values >= 0.0) & (values <= 1.0)))


class ModelSpec(ABC):
    """A model family plus its design constants."""

    family: ClassVar[str]
    has_nonresponse: ClassVar[bool] = True

    @property
    def eta_dim(self) -> int:
        return 1

    @property
    @abstractmethod
    def theta_dim(self) -> int: ...

    @abstractmethod
    def check_thetas(self, thetas: np.ndarray) -> None:
        """Raise DomainError unless every row of `thetas` is in the parameter domain."""

    @abstractmethod
    def validate_outcome(self, o: Outcome) -> None:
        """Raise DomainError unless `o` is a well-formed outcome of this family."""

    @abstractmethod
    def enumerate_outcomes(self) -> list[Outcome]: ...

    @abstractmethod
    def log_prob_response(self, thetas: np.ndarray, o: Outcome) -> np.ndarray:
        """log f(o | theta_k) for a Response outcome, one value per row."""

    @abstractmethod
    def log_prob_nonresponse(self, thetas: np.ndarray) -> np.ndarray:
        """log P_theta(A^c), one value per row."""

    @abstractmethod
    def eta_values(self, thetas: np.ndarray) -> np.ndarray:
        """eta(theta_k) as an (m, eta_dim) array."""

    @abstractmethod
    def h(self, o: Outcome) -> np.ndarray: ...

    @abstractmethod
    def lattice(self, resolution: int) -> np.ndarray:
        """The default grid at `resolution`, one row per point."""

    @abstractmethod
    def lattice_size(self, resolution: int) -> int: ...

    @abstractmethod
    def sample(self, thetas: np.ndarray, rng: np.random.Generator) -> list[Outcome]:
        """Draw one observed outcome per row of `thetas`."""

    @abstractmethod
    def constants(self) -> dict: ...

    def describe(self) -> dict:
        return {"family": self.family, **self.constants()}

    def log_prob_censored(self, thetas: np.ndarray, o: Outcome) -> np.ndarray:
        if o.nonresponse:
            if not self.has_nonresponse:
                raise DomainError(f"The {self.family} model has no Nonresponse outcome.")
            return self.log_prob_nonresponse(thetas)
        return self.log_prob_response(thetas, o)

    def response_prob(self, thetas: np.ndarray) -> np.ndarray:
        """P_theta(A) per row, computed as -expm1(log P(A^c)) to keep precision near 1."""
        return -np.expm1(self.log_prob_nonresponse(thetas))


@dataclass(frozen=True)
class BinomialModel(ModelSpec):
    """kappa attempts per stratum; kappa_resp ~ B(kappa, pi), x | kappa_resp ~ B(kappa_resp, p)."""

    kappa: int
    family: ClassVar[str] = "binom"

    def __post_init__(self):
        if self.kappa < 1:
            raise DomainError("kappa must be >= 1.")

    @property
    def theta_dim(self) -> int:
        return 2

    def check_thetas(self, thetas: np.ndarray) -> None:
        if thetas.shape[1] != 2 or not _unit_interval(thetas):
            raise DomainError("binom parameters (pi, p) must lie in [0, 1].")

    def validate_outcome(self, o: Outcome) -> None:
        if o.nonresponse:
            return
        if len(o.payload) != 2:
            raise DomainError(f"binom outcome needs (x, kappa_resp), got {o}.")
        x, kr = o.payload
        if not (0 < kr <= self.kappa and 0 <= x <= kr):
            raise DomainError(f"binom outcome {o} out of bounds for kappa={self.kappa}.")

    def enumerate_outcomes(self) -> list[Outcome]:
        out = [Outcome.response(x, kr) for kr in range(1, self.kappa + 1) for x in range(kr + 1)]
        out.append(NONRESPONSE)
        return out

    def log_prob_response(self, thetas, o):
        x, kr = o.payload
        pi, p = thetas[:, 0], thetas[:, 1]
        return stats.binom.logpmf(kr, self.kappa, pi) + stats.binom.logpmf(x, kr, p)

    def log_prob_nonresponse(self, thetas):
        return special.xlog1py(self.kappa, -thetas[:, 0])

    def eta_values(self, thetas):
        return thetas[:, 1:2].copy()

    def h(self, o):
        x, kr = o.payload
        return np.array([x / kr])

    def lattice(self, resolution):
        axis = np.linspace(LATTICE_EPS, 1.0 - LATTICE_EPS, resolution)
        return np.array(list(itertools.product(axis, axis)))

    def lattice_size(self, resolution):
        return resolution**2

    def sample(self, thetas, rng):
        kr = rng.binomial(self.kappa, thetas[:, 0])
        x = rng.binomial(kr, thetas[:, 1])
        return [Outcome.response(xi, ki) if ki > 0 else NONRESPONSE for xi, ki in zip(x, kr)]

    def constants(self):
        return {"kappa": self.kappa}


@dataclass(frozen=True)
class GeometricModel(ModelSpec):
    """Up to K attempts; the response attempt is truncated-geometric(pi), the category is multinomial(p)."""

    max_attempts: int
    categories: int
    family: ClassVar[str] = "geom"

    def __post_init__(self):
        if self.max_attempts < 1:
            raise DomainError("max_attempts (K) must be >= 1.")
        if self.categories < 2:
            raise DomainError("categories (S) must be >= 2.")

    @property
    def eta_dim(self) -> int:
        return self.categories

    @property
    def theta_dim(self) -> int:
        return 1 + self.categories

    def check_thetas(self, thetas):
        if thetas.shape[1] != self.theta_dim or not _unit_interval(thetas):
            raise DomainError("geom parameters (pi, p_1..p_S) must lie in [0, 1].")
        if np.any(np.abs(thetas[:, 1:].sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise DomainError("geom category probabilities must sum to 1.")

    def validate_outcome(self, o):
        if o.nonresponse:
            return
        if len(o.payload) != 2:
            raise DomainError(f"geom outcome needs (s, k), got {o}.")
        s, k = o.payload
        if not (1 <= s <= self.categories and 1 <= k <= self.max_attempts):
            raise DomainError(f"geom outcome {o} out of bounds for K={self.max_attempts}, S={self.categories}.")

    def enumerate_outcomes(self):
        out = [
            Outcome.response(s, k)
            for k in range(1, self.max_attempts + 1)
            for s in range(1, self.categories + 1)
        ]
        out.append(NONRESPONSE)
        return out

    def log_prob_response(self, thetas, o):
        s, k = o.payload
        pi = thetas[:, 0]
        with np.errstate(divide="ignore"):
            return np.log(pi) + special.xlog1py(k - 1, -pi) + np.log(thetas[:, s])

    def log_prob_nonresponse(self, thetas):
        return special.xlog1py(self.max_attempts, -thetas[:, 0])

    def eta_values(self, thetas):
        return thetas[:, 1:].copy()

    def h(self, o):
        s, _ = o.payload
        return np.eye(self.categories)[s - 1]

    def _simplex_lattice(self, resolution: int) -> np.ndarray:
        steps = resolution - 1
        scale = 1.0 - self.categories * LATTICE_EPS
        slots = steps + self.categories - 1
        rows = []
        # stars and bars: each choice of bar positions is one composition of `steps`
        for bars in itertools.combinations(range(slots), self.categories - 1):
            edges = (-1, *bars, slots)
            rows.append([LATTICE_EPS + scale * (b - a - 1) / steps for a, b in zip(edges, edges[1:])])
        return np.array(rows)

    def lattice(self, resolution):
        pis = np.linspace(LATTICE_EPS, 1.0 - LATTICE_EPS, resolution)
        simplex = self._simplex_lattice(resolution)
        return np.array([(pi, *ps) for pi in pis for ps in simplex])

    def lattice_size(self, resolution):
        return resolution * math.comb(resolution - 1 + self.categories - 1, self.categories - 1)

    def sample(self, thetas, rng):
        pi = thetas[:, 0]
        u = rng.random(len(thetas))
        # inverse CDF of the geometric attempt count; pi = 0 never responds
        with np.errstate(divide="ignore", invalid="ignore"):
            attempts = np.where(pi >= 1.0, 1.0, np.ceil(np.log1p(-u) / np.log1p(-pi)))
        attempts = np.where(pi <= 0.0, np.inf, np.maximum(attempts, 1.0))
        out = []
        for row, k in zip(thetas, attempts):
            if k > self.max_attempts:
                out.append(NONRESPONSE)
                continue
            probs = row[1:] / row[1:].sum()
            s = int(rng.choice(self.categories, p=probs)) + 1
            out.append(Outcome.response(s, int(k)))
        return out

    def constants(self):
        return {"max_attempts": self.max_attempts, "categories": self.categories}


@dataclass(frozen=True)
class PoissonModel(ModelSpec):
    """One unit of observation time; kappa_resp ~ Poisson(lambda), x | kappa_resp ~ B(kappa_resp, p)."""

    lambda_max: float = 10.0
    family: ClassVar[str] = "poisson"

    def __post_init__(self):
        if not self.lambda_max > 0:
            raise DomainError("lambda_max must be > 0.")
        leaked = float(stats.poisson.sf(self.cap, self.lambda_max))
        if leaked >= POISSON_LEAK_TOL:
            raise TruncationError(f"Poisson cap {self.cap} leaks {leaked:.3g} of mass.")

    @cached_property
    def cap(self) -> int:
        """Largest enumerated kappa_resp; the upper tail beyond it is below POISSON_LEAK_TOL."""
        cap = math.ceil(self.lambda_max + 10.0 * math.sqrt(self.lambda_max))
        while stats.poisson.sf(cap, self.lambda_max) >= POISSON_LEAK_TOL:
            cap += 1
        return cap

    @property
    def theta_dim(self) -> int:
        return 2

    def check_thetas(self, thetas):
        if thetas.shape[1] != 2:
            raise DomainError("poisson parameters are (lambda, p).")
        lam, p = thetas[:, 0], thetas[:, 1]
        if np.any(lam <= 0) or np.any(lam > self.lambda_max) or not _unit_interval(p):
            raise DomainError(f"poisson needs 0 < lambda <= {self.lambda_max} and p in [0, 1].")

    def validate_outcome(self, o):
        if o.nonresponse:
            return
        if len(o.payload) != 2:
            raise DomainError(f"poisson outcome needs (x, kappa_resp), got {o}.")
        x, kr = o.payload
        if not (kr >= 1 and 0 <= x <= kr):
            raise DomainError(f"poisson outcome {o} out of bounds.")

    def enumerate_outcomes(self):
        cap = self.cap
        out = [Outcome.response(x, kr) for kr in range(1, cap + 1) for x in range(kr + 1)]
        out.append(NONRESPONSE)
        return out

    def log_prob_response(self, thetas, o):
        x, kr = o.payload
        return stats.poisson.logpmf(kr, thetas[:, 0]) + stats.binom.logpmf(x, kr, thetas[:, 1])

    def log_prob_nonresponse(self, thetas):
        return -thetas[:, 0]

    def eta_values(self, thetas):
        return thetas[:, 1:2].copy()

    def h(self, o):
        x, kr = o.payload
        return np.array([x / kr])

    def lattice(self, resolution):
        lams = np.geomspace(0.05, self.lambda_max, resolution)
        ps = np.linspace(LATTICE_EPS, 1.0 - LATTICE_EPS, resolution)
        return np.array(list(itertools.product(lams, ps)))

    def lattice_size(self, resolution):
        return resolution**2

    def sample(self, thetas, rng):
        kr = rng.poisson(thetas[:, 0])
        x = rng.binomial(kr, thetas[:, 1])
        return [Outcome.response(xi, ki) if ki > 0 else NONRESPONSE for xi, ki in zip(x, kr)]

    def constants(self):
        return {"lambda_max": self.lambda_max}


@dataclass(frozen=True)
class BernoulliModel(ModelSpec):
    """Y ~ Bernoulli(theta), always observed; eta is theta or theta squared."""

    eta: str = ETA_THETA
    family: ClassVar[str] = "bernoulli"
    has_nonresponse: ClassVar[bool] = False

    def __post_init__(self):
        if self.eta not in (ETA_THETA, ETA_THETA_SQUARED):
            raise DomainError(f"bernoulli eta must be '{ETA_THETA}' or '{ETA_THETA_SQUARED}'.")

    @property
    def theta_dim(self) -> int:
        return 1

    def check_thetas(self, thetas):
        if thetas.shape[1] != 1 or not _unit_interval(thetas):
            raise DomainError("bernoulli theta must lie in [0, 1].")

    def validate_outcome(self, o):
        if o.nonresponse:
            raise DomainError("The bernoulli model has no Nonresponse outcome.")
        if o.payload not in ((0,), (1,)):
            raise DomainError(f"bernoulli outcome must be 0 or 1, got {o}.")

    def enumerate_outcomes(self):
        return [Outcome.response(0), Outcome.response(1)]

    def log_prob_response(self, thetas, o):
        (y,) = o.payload
        theta = thetas[:, 0]
        return special.xlogy(y, theta) + special.xlog1py(1 - y, -theta)

    def log_prob_nonresponse(self, thetas):
        return np.full(len(thetas), -np.inf)

    def eta_values(self, thetas):
        theta = thetas[:, 0:1]
        return theta.copy() if self.eta == ETA_THETA else theta**2

    def h(self, o):
        if self.eta != ETA_THETA:
            raise UnsupportedError("No h satisfies E(h(Y) | theta) = theta^2 for a single Bernoulli draw.")
        return np.array([float(o.payload[0])])

    def lattice(self, resolution):
        return np.linspace(LATTICE_EPS, 1.0 - LATTICE_EPS, resolution)[:, None]

    def lattice_size(self, resolution):
        return resolution

    def sample(self, thetas, rng):
        y = rng.binomial(1, thetas[:, 0])
        return [Outcome.response(v) for v in y]

    def constants(self):
        return {"eta": self.eta}


FAMILIES = {
    BinomialModel.family: BinomialModel,
    GeometricModel.family: GeometricModel,
    PoissonModel.family: PoissonModel,
    BernoulliModel.family: BernoulliModel,
}


def build_model(family: str, **constants) -> ModelSpec:
    """Factory used by the controllers: build_model("binom", kappa=4)."""
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise DomainError(f"Unknown model family '{family}'.") from None
    return cls(**constants)


def _checked(spec: ModelSpec, theta: Sequence[float]) -> np.ndarray:
    thetas = as_theta_array(theta)
    spec.check_thetas(thetas)
    return thetas


def outcome_prob_censored(spec: ModelSpec, theta: Sequence[float], o: Outcome) -> float:
    thetas = _checked(spec, theta)
    spec.validate_outcome(o)
    return float(np.exp(spec.log_prob_censored(thetas, o))[0])


def outcome_prob_truncated(spec: ModelSpec, theta: Sequence[float], o: Outcome) -> float:
    if o.nonresponse:
        raise ContractViolation("The truncated density is defined on Response outcomes only.")
    thetas = _checked(spec, theta)
    spec.validate_outcome(o)
    return float(truncated_probs(spec, thetas, o)[0])


def truncated_probs(spec: ModelSpec, thetas: np.ndarray, o: Outcome) -> np.ndarray:
    p_resp = spec.response_prob(thetas)
    if np.any(p_resp <= 0.0):
        raise SingularParameterError("P_theta(A) = 0 at some parameter point; the truncated density is undefined.")
    return np.exp(spec.log_prob_response(thetas, o)) / p_resp


def eta(spec: ModelSpec, theta: Sequence[float]) -> np.ndarray:
    return spec.eta_values(_checked(spec, theta))[0]


def h_value(spec: ModelSpec, o: Outcome) -> np.ndarray:
    if o.nonresponse:
        raise ContractViolation("h is defined on Response outcomes only.")
    spec.validate_outcome(o)
    return spec.h(o)


def enumerate_outcomes(spec: ModelSpec) -> list[Outcome]:
    return spec.enumerate_outcomes()


def outcome_matrix(spec: ModelSpec, thetas: np.ndarray, outcomes: Sequence[Outcome], mode: str) -> np.ndarray:
    """Rows = outcomes, columns = parameter points, entries = outcome probabilities under `mode`."""
    if mode not in MODES:
        raise ContractViolation(f"mode must be one of {MODES}, got '{mode}'.")
    if mode == TRUNCATED:
        if any(o.nonresponse for o in outcomes):
            raise ContractViolation("Truncated data cannot contain Nonresponse.")
        return np.vstack([truncated_probs(spec, thetas, o) for o in outcomes])
    return np.vstack([np.exp(spec.log_prob_censored(thetas, o)) for o in outcomes])
