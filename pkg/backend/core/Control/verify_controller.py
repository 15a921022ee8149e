# core/Control/verify_controller.py
"""
Property suites behind `manage.py verify`.

Each suite returns PropertyCheck rows; a suite passes when every row does.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np
from django.conf import settings

from core.Control.simulation_controller import SimulationController
from core.entity.estimators import eta_gmle, posterior_eta, posterior_identity_gap
from core.entity.gmle_solver import (
    LikelihoodCache,
    MixtureWeights,
    ObservationSet,
    SupportGrid,
    build_likelihood_matrix,
    default_grid,
    em_fit,
    em_multistart,
    log_likelihood,
    marginals,
)
from core.entity.mixture_models import (
    CENSORED,
    ETA_THETA,
    ETA_THETA_SQUARED,
    TRUNCATED,
    BernoulliModel,
    BinomialModel,
    Outcome,
)
from core.entity.simulation import UNIFORM_MIX, PopulationSpec, draw_observations, gen_population
from core.exceptions import ContractViolation

logger = logging.getLogger(__name__)

SUITES = ("example1", "lemma1", "identity", "consistency", "oracle")

EXAMPLE1_GRID = ((0.25,), (0.5,), (0.75,))
MULTISTART_KAPPAS = (2, 4)
MULTISTART_RANGES = ((0.1, 0.6), (0.4, 0.9))


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    observed: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class MultiStartRun:
    dataset: int
    kappa: int
    grid: SupportGrid
    L: Any
    counts: np.ndarray
    solutions: list


def _dataset_rng(seed: int, d: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(d, stream)))


def multistart_runs(*, datasets: int, starts: int, n_strata: int, grid_res: int, tol: float,
                    max_iter: int, seed: int, mode: str = CENSORED) -> List[MultiStartRun]:
    """Seeded binomial datasets, each fitted from `starts` random initialisations.

    The data depend only on (seed, dataset), so both modes see the same strata.
    """
    runs = []
    for d in range(datasets):
        kappa = MULTISTART_KAPPAS[d % len(MULTISTART_KAPPAS)]
        model = BinomialModel(kappa=kappa)
        data_rng = _dataset_rng(seed, d, 0)
        population = gen_population(
            PopulationSpec(kind=UNIFORM_MIX, n_strata=n_strata, range_a=MULTISTART_RANGES[0], range_b=MULTISTART_RANGES[1]),
            data_rng,
        )
        obs = draw_observations(model, population, data_rng)
        if mode == TRUNCATED:
            obs = obs.to_truncated()
        grid = default_grid(model, grid_res)
        L = LikelihoodCache(model, grid, mode).matrix(obs)
        counts = obs.counts_array()
        solutions = em_multistart(L, counts, starts, _dataset_rng(seed, d, 1), tol=tol, max_iter=max_iter)
        logger.info("Dataset %d (kappa=%d, %s): %d starts fitted", d, kappa, mode, starts)
        runs.append(MultiStartRun(dataset=d, kappa=kappa, grid=grid, L=L, counts=counts, solutions=solutions))
    return runs


def _eta_spread(run: MultiStartRun) -> float:
    model = BinomialModel(kappa=run.kappa)
    e = np.array([eta_gmle(model, run.grid, s.weights) for s in run.solutions])
    return float(np.max(np.abs(e - e[0])))


def _simplex_scan(A: np.ndarray, c: np.ndarray, step: float, lo=None, hi=None):
    """Best weight vector over a lattice of the simplex, optionally restricted to a box [lo, hi]."""
    m = A.shape[1]
    lo = np.zeros(m - 1) if lo is None else np.clip(lo, 0.0, 1.0)
    hi = np.ones(m - 1) if hi is None else np.clip(hi, 0.0, 1.0)
    axes = [np.arange(lo[j], hi[j] + step / 2, step) for j in range(m - 1)]
    mesh = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    mesh = mesh[mesh.sum(axis=1) <= 1.0 + 1e-12]
    W = np.hstack([mesh, np.clip(1.0 - mesh.sum(axis=1, keepdims=True), 0.0, None)])
    with np.errstate(divide="ignore"):
        ll = np.log(W @ A.T) @ c
    best = int(np.argmax(ll))
    return W[best], float(ll[best])


def brute_force_loglik(A: np.ndarray, c: np.ndarray, step: float = 1e-3) -> float:
    """Exhaustive simplex search at `step`, then a finer pass around the best lattice point."""
    if A.shape[1] == 1:
        return log_likelihood(A, c, np.ones(1))
    w, ll = _simplex_scan(A, c, step)
    fine_w, fine_ll = _simplex_scan(A, c, step / 100, lo=w[:-1] - step, hi=w[:-1] + step)
    return max(ll, fine_ll)


class VerifyController:
    @staticmethod
    def run(suite: str, **options) -> List[PropertyCheck]:
        runners: Dict[str, Callable[..., List[PropertyCheck]]] = {
            "example1": VerifyController.example1,
            "lemma1": VerifyController.lemma1,
            "identity": VerifyController.identity,
            "consistency": VerifyController.consistency,
            "oracle": VerifyController.oracle,
        }
        if suite not in runners:
            raise ContractViolation(f"Unknown suite '{suite}'. Choose from {', '.join(SUITES)}.")
        logger.info("Running verification suite %s", suite)
        return runners[suite](**options)

    @staticmethod
    def example1(**_options) -> List[PropertyCheck]:
        """Half zeros, half ones, on the grid {0.25, 0.5, 0.75}."""
        model = BernoulliModel(eta=ETA_THETA)
        squared = BernoulliModel(eta=ETA_THETA_SQUARED)
        grid = SupportGrid.from_points(model, EXAMPLE1_GRID, provenance="example1")
        obs = ObservationSet.from_counts({Outcome.response(0): 5, Outcome.response(1): 5})
        L = build_likelihood_matrix(model, grid, obs)
        counts = obs.counts_array()

        g1 = MixtureWeights.point_mass(3, 1)
        g2 = MixtureWeights(np.array([0.5, 0.0, 0.5]))
        sol = em_fit(L, counts, tol=1e-10, max_iter=settings.GMLE["MAX_ITER"])
        logliks = [log_likelihood(L, counts, w) for w in (g1, g2, sol.weights)]
        etas = [float(eta_gmle(model, grid, w)[0]) for w in (g1, g2, sol.weights)]
        eta_sq = [float(eta_gmle(squared, grid, w)[0]) for w in (g1, g2)]
        y1 = obs.distinct.index(Outcome.response(1))
        post = [float(posterior_eta(model, grid, w, L, y1)[0]) for w in (g1, g2)]

        return [
            PropertyCheck(
                "loglik_equal_for_both_gmles_and_em",
                max(logliks) - min(logliks) <= 1e-10,
                {"loglik": logliks, "expected": 10 * np.log(0.5)},
            ),
            PropertyCheck("eta_theta_agrees", all(abs(v - 0.5) <= 1e-6 for v in etas), {"eta_theta": etas}),
            PropertyCheck(
                "eta_theta_squared_differs",
                abs(eta_sq[0] - 0.25) <= 1e-12 and abs(eta_sq[1] - 0.3125) <= 1e-12,
                {"eta_theta_squared": eta_sq, "note": "different by design: theta^2 has no unbiased h"},
            ),
            PropertyCheck(
                "posterior_at_one",
                abs(post[0] - 0.5) <= 1e-12 and abs(post[1] - 0.625) <= 1e-12,
                {"posterior_mean_given_y1": post},
            ),
        ]

    @staticmethod
    def _multistart_options(options: dict) -> dict:
        return {
            "datasets": options.get("datasets") or 1,
            "starts": options.get("starts") or 5,
            "n_strata": options.get("n_strata") or 1000,
            "grid_res": options.get("grid_res") or 12,
            "tol": options.get("tol") or 1e-8,
            "max_iter": options.get("max_iter") or settings.GMLE["MAX_ITER"],
            "seed": settings.SIMULATION["SEED"] if options.get("seed") is None else options["seed"],
        }

    @staticmethod
    def lemma1(**options) -> List[PropertyCheck]:
        """Marginals are unique across starts; weights are not.

        eta_hat is compared on the truncated refits of the same datasets. The
        censored spread is reported alongside but is not pass/fail.
        """
        opts = VerifyController._multistart_options(options)
        marginal_gap, censored_eta_gap, weight_gap = [], [], []
        for run in multistart_runs(**opts):
            f = np.array([marginals(run.L, s.weights) for s in run.solutions])
            w = np.array([s.weights.w for s in run.solutions])
            marginal_gap.append(float(np.max(np.abs(f - f[0]) / f[0])))
            censored_eta_gap.append(_eta_spread(run))
            weight_gap.append(float(np.max(np.abs(w - w[0]))))
        truncated_eta_gap = [_eta_spread(run) for run in multistart_runs(**opts, mode=TRUNCATED)]
        return [
            PropertyCheck("marginals_agree_across_starts", max(marginal_gap) <= 1e-4,
                          {"max_relative_gap_per_dataset": marginal_gap}),
            PropertyCheck("truncated_eta_agrees_across_starts", max(truncated_eta_gap) <= 1e-4,
                          {"max_gap_per_dataset": truncated_eta_gap,
                           "censored_max_gap_per_dataset": censored_eta_gap}),
            PropertyCheck("weights_not_identified", max(weight_gap) > 0.01,
                          {"max_weight_gap_per_dataset": weight_gap}),
        ]

    @staticmethod
    def identity(**options) -> List[PropertyCheck]:
        runs = multistart_runs(**VerifyController._multistart_options(options))
        gaps = []
        for run in runs:
            model = BinomialModel(kappa=run.kappa)
            gaps += [
                posterior_identity_gap(model, run.grid, s.weights, run.L, run.counts)
                for s in run.solutions if s.converged
            ]
        return [
            PropertyCheck("converged_solutions_checked", bool(gaps), {"count": len(gaps)}),
            PropertyCheck("posterior_identity_gap", bool(gaps) and max(gaps) <= 1e-4,
                          {"max_gap": max(gaps) if gaps else None}),
        ]

    @staticmethod
    def consistency(**options) -> List[PropertyCheck]:
        configs = SimulationController.table_preset(
            "consistency",
            replications=options.get("reps"),
            grid_res=options.get("grid_res"),
            tol=options.get("tol"),
            max_iter=options.get("max_iter"),
            seed=options.get("seed"),
        )
        reports = SimulationController.run_all(configs, jobs=options.get("jobs"))
        bias = [abs(r.summary("gmle").mean - 0.5) for r in reports]
        sizes = [r.config.population.n_strata for r in reports]
        return [
            PropertyCheck(
                "gmle_bias_nonincreasing_in_n",
                all(b2 <= b1 + 0.01 for b1, b2 in zip(bias, bias[1:])),
                {"n_strata": sizes, "abs_bias": bias},
            )
        ]

    @staticmethod
    def oracle(**options) -> List[PropertyCheck]:
        """Random small instances against exhaustive simplex search."""
        instances = options.get("instances") or 50
        seed = settings.SIMULATION["SEED"] if options.get("seed") is None else options["seed"]
        rng = np.random.default_rng(seed)
        gaps, non_monotone = [], 0
        for _ in range(instances):
            m = int(rng.integers(1, 4))
            D = int(rng.integers(1, 5))
            A = rng.dirichlet(np.ones(D), size=m).T
            c = rng.integers(1, 11, size=D).astype(float)
            sol = em_fit(A, c, tol=1e-10, max_iter=10**6, record_trajectory=True)
            gaps.append(abs(sol.loglik - brute_force_loglik(A, c)))
            if np.any(np.diff(sol.trajectory) < -1e-12):
                non_monotone += 1
        return [
            PropertyCheck("em_matches_brute_force", max(gaps) <= 1e-6, {"max_loglik_gap": max(gaps)}),
            PropertyCheck("em_loglik_monotone", non_monotone == 0, {"non_monotone_trajectories": non_monotone}),
        ]
