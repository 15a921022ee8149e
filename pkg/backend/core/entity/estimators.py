# core/entity/estimators.py
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from core.entity.gmle_solver import (
    MixtureWeights,
    ObservationSet,
    SupportGrid,
    _entries,
    _weights,
    marginals,
)
from core.entity.mixture_models import ModelSpec, as_theta_array, h_value
from core.exceptions import UndefinedPosteriorError, UnsupportedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimateReport:
    eta_hat: Tuple[float, ...]
    naive: Optional[Tuple[float, ...]]
    n_responders: int
    n_total: int

    def as_dict(self) -> dict:
        return asdict(self)


#eta_G-hat = sum_k w_k eta(theta_k)
def eta_gmle(spec: ModelSpec, grid: SupportGrid, w: MixtureWeights) -> np.ndarray:
    return _weights(w) @ spec.eta_values(grid.points)


#Responder-only average of h, weighted by multiplicity. None when nobody responded.
def naive(spec: ModelSpec, obs: ObservationSet) -> Optional[np.ndarray]:
    total = np.zeros(spec.eta_dim)
    responders = 0
    for o, c in zip(obs.distinct, obs.counts):
        if o.nonresponse:
            continue
        total += c * h_value(spec, o)
        responders += c
    if responders == 0:
        return None
    return total / responders


def posterior_eta(spec: ModelSpec, grid: SupportGrid, w: MixtureWeights, L, d: int) -> np.ndarray:
    """E_w(eta(theta) | outcome d)."""
    row = _entries(L)[d] * _weights(w)
    f = row.sum()
    if f <= 0:
        raise UndefinedPosteriorError(f"Outcome row {d} has zero marginal under the fitted weights.")
    return row @ spec.eta_values(grid.points) / f


def posterior_identity_gap(spec: ModelSpec, grid: SupportGrid, w: MixtureWeights, L, counts) -> float:
    """Max-norm gap between eta_gmle and the count-weighted mean of the posterior means.

    The two agree exactly at any GMLE; away from one the gap is generally positive.
    """
    A = _entries(L)
    wv = _weights(w)
    f = marginals(A, wv)
    if np.any(f <= 0):
        raise UndefinedPosteriorError("Some observed outcome has zero marginal under the given weights.")
    etas = spec.eta_values(grid.points)
    posterior = (A * wv) @ etas / f[:, None]
    c = np.asarray(counts, dtype=float)
    averaged = c @ posterior / c.sum()
    return float(np.max(np.abs(wv @ etas - averaged)))


def naive_population_limit(spec: ModelSpec, thetas) -> Optional[np.ndarray]:
    """Large-n limit of the naive estimator for a fixed population:
    sum_i P_i(A) eta(theta_i) / sum_i P_i(A)."""
    arr = as_theta_array(thetas)
    p_resp = spec.response_prob(arr)
    if p_resp.sum() <= 0:
        return None
    return p_resp @ spec.eta_values(arr) / p_resp.sum()


def population_eta(spec: ModelSpec, thetas) -> np.ndarray:
    """Realised mean of eta(theta_i) over a population."""
    return spec.eta_values(as_theta_array(thetas)).mean(axis=0)


def estimate(spec: ModelSpec, grid: SupportGrid, w: MixtureWeights, obs: ObservationSet) -> EstimateReport:
    try:
        naive_value = naive(spec, obs)
    except UnsupportedError as exc:
        logger.info("No naive estimator for this model: %s", exc)
        naive_value = None
    return EstimateReport(
        eta_hat=tuple(float(v) for v in eta_gmle(spec, grid, w)),
        naive=None if naive_value is None else tuple(float(v) for v in naive_value),
        n_responders=obs.n_responders,
        n_total=obs.n_total,
    )
