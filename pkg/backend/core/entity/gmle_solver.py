# core/entity/gmle_solver.py
"""
Grid GMLE (Kiefer-Wolfowitz NPMLE) by EM fixed-point iteration.

The mixing distribution is restricted to a fixed SupportGrid; the estimate
is a probability vector over the grid. The EM update is the multiplicative
one,

    w_k <- w_k * (1/n) sum_d counts_d L[d, k] / f_w(d),

and the stopping rule is the first-order certificate
max_k (1/n) sum_d counts_d L[d, k] / f_w(d) - 1, which is 0 at a maximiser.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Tuple

import numpy as np

from core.entity.mixture_models import (
    CENSORED,
    MODES,
    TRUNCATED,
    ModelSpec,
    Outcome,
    ThetaPoint,
    as_theta_array,
    outcome_matrix,
)
from core.exceptions import (
    CapacityError,
    ContractViolation,
    DegenerateDataError,
    DomainError,
    ImpossibleOutcomeError,
    NumericalFailureError,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200_000
WEIGHT_FLOOR = 1e-12
MAX_GRID_POINTS = 10**6
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SupportGrid:
    """Candidate support points theta_k, one row each."""

    points: np.ndarray
    provenance: str = "explicit"

    @classmethod
    def from_points(cls, spec: ModelSpec, points, provenance: str = "explicit") -> "SupportGrid":
        arr = as_theta_array(points)
        if len(arr) < 1:
            raise DomainError("A support grid needs at least one point.")
        spec.check_thetas(arr)
        if len(np.unique(arr, axis=0)) != len(arr):
            raise DomainError("Support grid points must be pairwise distinct.")
        return cls(points=arr, provenance=provenance)

    @property
    def size(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return self.size

    def point(self, k: int) -> ThetaPoint:
        return tuple(float(v) for v in self.points[k])

    def permuted(self, order: Sequence[int]) -> "SupportGrid":
        return SupportGrid(points=self.points[np.asarray(order)], provenance=f"{self.provenance}:permuted")


@dataclass(frozen=True, eq=False)
class MixtureWeights:
    """A probability vector over the grid; the restricted estimate of G."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or len(w) == 0:
            raise DomainError("Mixture weights must be a non-empty vector.")
        if np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError("Mixture weights must be non-negative and sum to 1.")
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, m: int) -> "MixtureWeights":
        return cls(np.full(m, 1.0 / m))

    @classmethod
    def point_mass(cls, m: int, k: int) -> "MixtureWeights":
        w = np.zeros(m)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def normalized(cls, raw) -> "MixtureWeights":
        raw = np.asarray(raw, dtype=float)
        return cls(raw / raw.sum())

    def __len__(self) -> int:
        return len(self.w)

    def heaviest(self) -> int:
        # np.argmax returns the first maximum, i.e. the lowest grid index on ties
        return int(np.argmax(self.w))

    def support(self, threshold: float = 0.0) -> list[int]:
        """Indices with weight above `threshold`, heaviest first, ties by lowest index."""
        idx = np.flatnonzero(self.w > threshold)
        return sorted(idx.tolist(), key=lambda k: (-self.w[k], k))

    def floored(self, floor: float = WEIGHT_FLOOR) -> "MixtureWeights":
        w = np.where(self.w < floor, 0.0, self.w)
        return MixtureWeights.normalized(w)


@dataclass(frozen=True)
class ObservationSet:
    """Distinct observed outcomes with multiplicities."""

    distinct: Tuple[Outcome, ...]
    counts: Tuple[int, ...]
    mode: str = CENSORED

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolation(f"mode must be one of {MODES}, got '{self.mode}'.")
        if len(self.distinct) != len(self.counts):
            raise ContractViolation("distinct outcomes and counts differ in length.")
        if len(set(self.distinct)) != len(self.distinct):
            raise ContractViolation("Outcomes in an ObservationSet must be distinct.")
        if any(c <= 0 for c in self.counts):
            raise ContractViolation("Multiplicities must be positive.")
        if self.mode == TRUNCATED and any(o.nonresponse for o in self.distinct):
            raise ContractViolation("Truncated data cannot contain Nonresponse.")

    @classmethod
    def from_counts(cls, counts: Mapping[Outcome, int], mode: str = CENSORED) -> "ObservationSet":
        items = sorted((o, int(c)) for o, c in counts.items() if c > 0)
        return cls(
            distinct=tuple(o for o, _ in items),
            counts=tuple(c for _, c in items),
            mode=mode,
        )

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[Outcome], mode: str = CENSORED) -> "ObservationSet":
        return cls.from_counts(Counter(outcomes), mode=mode)

    @property
    def size(self) -> int:
        return len(self.distinct)

    @property
    def n_total(self) -> int:
        return sum(self.counts)

    @property
    def n_nonresponse(self) -> int:
        return sum(c for o, c in zip(self.distinct, self.counts) if o.nonresponse)

    @property
    def n_responders(self) -> int:
        return self.n_total - self.n_nonresponse

    def counts_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    def as_dict(self) -> dict[Outcome, int]:
        return dict(zip(self.distinct, self.counts))

    def to_truncated(self) -> "ObservationSet":
        kept = {o: c for o, c in self.as_dict().items() if o.is_response}
        if not kept:
            raise DegenerateDataError("Every stratum is nonresponse; nothing is left after truncation.")
        return ObservationSet.from_counts(kept, mode=TRUNCATED)


@dataclass(frozen=True, eq=False)
class LikelihoodMatrix:
    """L[d, k] = P(outcome d | theta_k) under the observation set's mode."""

    entries: np.ndarray
    outcomes: Tuple[Outcome, ...] = ()
    mode: str = CENSORED

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class GmleSolution:
    weights: MixtureWeights
    loglik: float
    certificate: float
    iterations: int
    converged: bool
    trajectory: Tuple[float, ...] = field(default=())


def _entries(L) -> np.ndarray:
    if isinstance(L, LikelihoodMatrix):
        return L.entries
    return np.asarray(L, dtype=float)


def _weights(w) -> np.ndarray:
    if isinstance(w, MixtureWeights):
        return w.w
    return np.asarray(w, dtype=float)


class LikelihoodCache:
    """Likelihood rows for one (spec, grid, mode), computed once per outcome.

    The simulation reuses a cache across replications, since the grid and
    the outcome space stay fixed while only the multiplicities change.
    """

    def __init__(self, spec: ModelSpec, grid: SupportGrid, mode: str):
        if mode not in MODES:
            raise ContractViolation(f"mode must be one of {MODES}, got '{mode}'.")
        if mode == TRUNCATED and not spec.has_nonresponse:
            raise ContractViolation(f"The {spec.family} model is fitted in censored mode only.")
        self.spec = spec
        self.grid = grid
        self.mode = mode
        self._rows: dict[Outcome, np.ndarray] = {}

    def row(self, o: Outcome) -> np.ndarray:
        if o not in self._rows:
            self.spec.validate_outcome(o)
            self._rows[o] = outcome_matrix(self.spec, self.grid.points, [o], self.mode)[0]
        return self._rows[o]

    def matrix(self, obs: ObservationSet) -> LikelihoodMatrix:
        if obs.mode != self.mode:
            raise ContractViolation(f"Observations are {obs.mode} but the cache is {self.mode}.")
        rows = []
        for o in obs.distinct:
            row = self.row(o)
            if not np.any(row > 0):
                raise ImpossibleOutcomeError(o)
            rows.append(row)
        return LikelihoodMatrix(entries=np.vstack(rows), outcomes=obs.distinct, mode=obs.mode)


def build_likelihood_matrix(spec: ModelSpec, grid: SupportGrid, obs: ObservationSet) -> LikelihoodMatrix:
    return LikelihoodCache(spec, grid, obs.mode).matrix(obs)


def marginals(L, w) -> np.ndarray:
    """f_w(d) = sum_k w_k L[d, k] for every row d."""
    return _entries(L) @ _weights(w)


def marginal_at(L, w, d: int) -> float:
    return float(_entries(L)[d] @ _weights(w))


def log_likelihood(L, counts, w) -> float:
    """sum_d counts_d log f_w(d); -inf when an observed outcome has zero marginal."""
    f = marginals(L, w)
    if np.any(f <= 0):
        return float("-inf")
    return float(np.asarray(counts, dtype=float) @ np.log(f))


def normalized_gradient(L, counts, w) -> np.ndarray:
    """(1/n) sum_d counts_d L[d, k] / f_w(d) for every grid point k."""
    A = _entries(L)
    c = np.asarray(counts, dtype=float)
    return (c / c.sum() / marginals(A, w)) @ A


def optimality_certificate(L, counts, w) -> float:
    return float(normalized_gradient(L, counts, w).max() - 1.0)


def em_fit(
    L,
    counts,
    init: MixtureWeights | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    weight_floor: float = WEIGHT_FLOOR,
    record_trajectory: bool = False,
) -> GmleSolution:
    if tol <= 0:
        raise ContractViolation("tol must be > 0.")
    A = _entries(L)
    c = np.asarray(counts, dtype=float)
    if A.ndim != 2 or A.shape[0] != len(c):
        raise ContractViolation("Likelihood matrix rows must match the counts.")
    n = c.sum()
    m = A.shape[1]
    w = (init if init is not None else MixtureWeights.uniform(m)).w.copy()
    if len(w) != m:
        raise ContractViolation("Initial weights must match the grid size.")

    f = A @ w
    loglik = log_likelihood(A, c, w)
    if not np.isfinite(loglik):
        raise NumericalFailureError("An observed outcome has zero marginal under the initial weights.")
    trajectory = [loglik] if record_trajectory else []

    iterations = 0
    converged = False
    while True:
        grad = (c / n / f) @ A
        cert = grad.max() - 1.0
        if cert <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        w = w * grad
        w /= w.sum()
        f = A @ w
        with np.errstate(divide="ignore"):
            loglik = float(c @ np.log(f))
        if not np.isfinite(loglik):
            raise NumericalFailureError(f"Log-likelihood became non-finite at iteration {iterations + 1}.")
        iterations += 1
        if record_trajectory:
            trajectory.append(loglik)

    weights = MixtureWeights.normalized(w).floored(weight_floor)
    loglik = log_likelihood(A, c, weights)
    cert = optimality_certificate(A, c, weights)
    if converged:
        logger.debug("EM converged after %d iterations (certificate %.3g, loglik %.6f)", iterations, cert, loglik)
    else:
        logger.warning("EM stopped at max_iter=%d with certificate %.3g > tol %.3g", max_iter, cert, tol)
    return GmleSolution(
        weights=weights,
        loglik=loglik,
        certificate=cert,
        iterations=iterations,
        converged=converged,
        trajectory=tuple(trajectory),
    )


def random_init(m: int, rng: np.random.Generator) -> MixtureWeights:
    """A strictly positive Dirichlet(1, ..., 1) starting point."""
    return MixtureWeights.normalized(rng.dirichlet(np.ones(m)))


def em_multistart(L, counts, starts: int, rng: np.random.Generator, **kwargs) -> list[GmleSolution]:
    """EM from `starts` random strictly positive initialisations."""
    m = _entries(L).shape[1]
    return [em_fit(L, counts, init=random_init(m, rng), **kwargs) for _ in range(starts)]


def default_grid(spec: ModelSpec, resolution: int) -> SupportGrid:
    if resolution < 2:
        raise ContractViolation("Grid resolution must be >= 2.")
    size = spec.lattice_size(resolution)
    if size > MAX_GRID_POINTS:
        raise CapacityError(f"Resolution {resolution} gives {size} grid points (limit {MAX_GRID_POINTS}).")
    return SupportGrid.from_points(spec, spec.lattice(resolution), provenance=f"default:{spec.family}:{resolution}")
