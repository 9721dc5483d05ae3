"""Simulation studies comparing local exchange with independent groups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hmm import FiniteHmm, GenericHmm, exact_prediction_filter, simulate_hmm, stoch_vol
from .interaction import InteractionScheme
from .smc import ReplicateConfig, ReplicateRecords, replicate_rng, run_filter, run_replicates

__all__ = [
    "MseRatioRecord",
    "make_scheme",
    "exact_truth",
    "reference_truth",
    "mse_ratio",
    "sv_ess_experiment",
]

SCHEME_STREAMS = {"ibpf": 0, "lepf": 1}
OBSERVATION_STREAM = 7
REFERENCE_STREAM = 8


@dataclass(frozen=True)
class MseRatioRecord:
    n: int
    mse_ibpf: float
    mse_lepf: float

    @property
    def ratio(self) -> float:
        return self.mse_ibpf / self.mse_lepf if self.mse_lepf > 0 else float("nan")


def make_scheme(kind: str, M: int, theta: int = 1) -> InteractionScheme:
    return InteractionScheme.lepf(M, theta) if kind == "lepf" else InteractionScheme.ibpf(M)


def exact_truth(model, steps: int, phi=None) -> np.ndarray:
    """Prediction-filter means ``pi_n(phi)`` for ``n = 0..steps``.

    Finite models use the exact recursion. Among continuous models only
    the Gaussian toy is supported, where the filter stays at ``N(0, 1)``.
    """
    if isinstance(model, FiniteHmm):
        f = np.arange(model.n_states, dtype=float) if phi is None else np.asarray(phi, dtype=float)
        return exact_prediction_filter(model, steps) @ f
    if isinstance(model, GenericHmm) and model.name == "gaussian_toy" and phi is None:
        return np.zeros(steps + 1)
    raise ValueError(f"no exact filter for model {getattr(model, 'name', model)!r}; use reference truth")


def reference_truth(model, steps: int, n_ref: int, seed: int, phi=None) -> np.ndarray:
    """Prediction-filter means from one bootstrap filter with ``n_ref`` particles."""
    rng = replicate_rng(seed, REFERENCE_STREAM, 0)
    out = run_filter(model, InteractionScheme.ibpf(n_ref), 1, steps, rng, 1, phi)
    return out["estimate"][0]


def mse_ratio(records_ibpf: ReplicateRecords, records_lepf: ReplicateRecords, truth) -> list[MseRatioRecord]:
    """Per-step mean squared errors of both schemes against ``truth``."""
    e_ib = ((records_ibpf["estimate"] - truth) ** 2).mean(axis=0)
    e_le = ((records_lepf["estimate"] - truth) ** 2).mean(axis=0)
    return [MseRatioRecord(n, float(a), float(b)) for n, (a, b) in enumerate(zip(e_ib, e_le))]


def run_scheme(model, kind, M, m, theta, steps, replicates, seed, phi=None, workers=1) -> ReplicateRecords:
    cfg = ReplicateConfig(
        model,
        make_scheme(kind, M, theta),
        m,
        steps,
        replicates=replicates,
        seed=seed,
        phi=phi,
        workers=workers,
        stream=SCHEME_STREAMS[kind],
    )
    return run_replicates(cfg)


def sv_ess_experiment(steps: int = 20_000, M: int = 20, m: int = 50, seed: int = 0, a=0.9, b=0.1, sigma_v=0.5, theta: int = 1):
    """ESS traces of both schemes on one simulated stochastic volatility record.

    Returns
    -------
    dict
        ``{"ibpf": ess, "lepf": ess}``, each of length ``steps``.
    """
    model = stoch_vol(a, b, sigma_v)
    _, obs = simulate_hmm(model, steps, replicate_rng(seed, OBSERVATION_STREAM, 0))
    model = model.with_observations(obs)
    traces = {}
    for kind in ("ibpf", "lepf"):
        rng = replicate_rng(seed, SCHEME_STREAMS[kind], 0)
        traces[kind] = run_filter(model, make_scheme(kind, M, theta), m, steps - 1, rng)["ess"][0]
    return traces
