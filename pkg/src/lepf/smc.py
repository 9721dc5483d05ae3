"""Group-interacting particle filters.

The ensemble holds ``N = M m`` particles split into ``m`` groups. A step
replaces the weight of every particle in group ``k`` by the mean of
``W^j g(x^j)`` over the group's donor window and draws each new particle
by picking a donor with probability proportional to ``W^j g(x^j)`` and
moving it with the model's transition kernel. Because all particles in a
group share one donor window, weights are stored once per group.

Arrays carry a leading replicate axis so many independent filters run in
one vectorised pass.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .interaction import AlphaMatrix, InteractionScheme, group_windows

__all__ = [
    "InvariantViolation",
    "ParticleEnsemble",
    "WeightDiagnostics",
    "ReplicateConfig",
    "ReplicateRecords",
    "init_ensemble",
    "step",
    "estimate_prediction",
    "estimate_normalizer",
    "estimate_unnormalized",
    "estimate_updated",
    "diagnostics",
    "run_filter",
    "run_replicates",
    "replicate_rng",
]

REBASE_LOW = 1e-100
REBASE_HIGH = 1e100
SMALL_WINDOW = 32


class InvariantViolation(AssertionError):
    """A runtime invariant of the filter failed."""


@dataclass
class ParticleEnsemble:
    """Particle positions with group-constant weights.

    Attributes
    ----------
    positions : ndarray, shape (B, N)
        Particle states for ``B`` independent replicates.
    group_weights : ndarray, shape (B, m)
        Linear weights of each group, relative to ``exp(log_scale)``.
    log_scale : ndarray, shape (B,)
        Shared log offset, so the weight of a particle in group ``k`` is
        ``group_weights[:, k] * exp(log_scale)``.
    """

    positions: np.ndarray
    group_weights: np.ndarray
    log_scale: np.ndarray
    scheme: InteractionScheme
    m: int
    n: int = 0

    @property
    def M(self) -> int:
        return self.scheme.M

    @property
    def N(self) -> int:
        return self.M * self.m

    @property
    def replicates(self) -> int:
        return self.positions.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Per-particle weights (relative to the log offset), shape (B, N)."""
        return np.repeat(self.group_weights, self.M, axis=1)


@dataclass(frozen=True)
class WeightDiagnostics:
    """Weight degeneracy measures, one value per replicate."""

    ess_fraction: np.ndarray
    n_eff: np.ndarray
    max_group_weight: np.ndarray
    quad_concentration: np.ndarray
    group_weights: np.ndarray


def init_ensemble(model, scheme: InteractionScheme, m: int, rng, replicates: int = 1) -> ParticleEnsemble:
    if m < 1 or replicates < 1:
        raise ValueError("need m >= 1 and replicates >= 1")
    N = scheme.M * m
    positions = np.asarray(model.sample_initial(rng, (replicates, N)))
    return ParticleEnsemble(
        positions=positions,
        group_weights=np.ones((replicates, m)),
        log_scale=np.zeros(replicates),
        scheme=scheme,
        m=m,
    )


def _donor_table(ens: ParticleEnsemble, alpha: AlphaMatrix | None) -> np.ndarray:
    if alpha is None:
        return group_windows(ens.scheme, ens.m)
    if alpha.N != ens.N or alpha.M != ens.M:
        raise ValueError(f"alpha is {alpha.N}x{alpha.N} with M={alpha.M}; ensemble has N={ens.N}, M={ens.M}")
    donors = alpha.group_donors()
    if donors is None:
        raise ValueError("alpha must give every group a common donor window of M equal weights")
    return donors


def step(ens: ParticleEnsemble, model, alpha: AlphaMatrix | None, rng, check: bool = True) -> ParticleEnsemble:
    """Advance the ensemble from time ``n`` to ``n + 1``.

    Parameters
    ----------
    ens : ParticleEnsemble
    model
        Object with ``log_potential(n, states)`` and
        ``sample_transition(states, rng)``.
    alpha : AlphaMatrix or None
        Interaction matrix; when ``None`` the donor windows of ``ens.scheme``
        are used directly, without building the matrix.
    rng : numpy.random.Generator
        Supplies donor uniforms of shape ``(B, m, M)`` and the transition
        noise.
    check : bool
        Assert the weight invariants after the step.
    """
    donors = _donor_table(ens, alpha)
    B, M = ens.replicates, ens.M
    logpot = np.asarray(model.log_potential(ens.n, ens.positions), dtype=float)
    shift = logpot.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise InvariantViolation(f"non-finite log potential at step {ens.n}")
    contrib = ens.weights * np.exp(logpot - shift)  # (B, N)
    window = contrib[:, donors]  # (B, m, M)
    new_weights = window.mean(axis=2)

    pick = _pick_donors(window, rng.random((B, ens.m, M)))
    parents = donors[np.arange(ens.m)[:, None], pick].reshape(B, -1)
    ancestors = np.take_along_axis(ens.positions, parents, axis=1)
    positions = np.asarray(model.sample_transition(ancestors, rng))

    log_scale = ens.log_scale + shift[:, 0]
    top = new_weights.max(axis=1)
    rebase = (top < REBASE_LOW) | (top > REBASE_HIGH)
    if rebase.any():
        new_weights[rebase] /= top[rebase, None]
        log_scale[rebase] += np.log(top[rebase])
    out = ParticleEnsemble(positions, new_weights, log_scale, ens.scheme, ens.m, ens.n + 1)
    if check:
        diagnostics(out)
    return out


def _pick_donors(window, u):
    """Inverse-CDF donor positions within each window, shape like ``u``."""
    cum = np.cumsum(window, axis=2)
    u = u * cum[:, :, -1:]
    M = window.shape[2]
    if M <= SMALL_WINDOW:
        pick = (cum[:, :, None, :] <= u[..., None]).sum(axis=3)
    else:
        pick = np.empty(u.shape, dtype=np.int64)
        for b in range(u.shape[0]):
            for k in range(u.shape[1]):
                pick[b, k] = np.searchsorted(cum[b, k], u[b, k], side="right")
    return np.minimum(pick, M - 1)


def _phi_values(phi, positions) -> np.ndarray:
    if phi is None:
        return np.asarray(positions, dtype=float)
    if callable(phi):
        return np.asarray(phi(positions), dtype=float)
    return np.asarray(phi, dtype=float)[positions]


def estimate_prediction(ens: ParticleEnsemble, phi=None) -> np.ndarray:
    """Weighted mean of ``phi`` per replicate.

    ``phi`` is a callable, a lookup vector for finite state spaces, or
    ``None`` for the identity.
    """
    w = ens.weights
    return (w * _phi_values(phi, ens.positions)).sum(axis=1) / w.sum(axis=1)


def estimate_normalizer(ens: ParticleEnsemble, log: bool = False) -> np.ndarray:
    """Mean particle weight, an unbiased estimate of the normalising constant."""
    log_gamma = np.log(ens.group_weights.mean(axis=1)) + ens.log_scale
    return log_gamma if log else np.exp(log_gamma)


def estimate_unnormalized(ens: ParticleEnsemble, phi=None) -> np.ndarray:
    """``(1/N) sum_i W^i phi(x^i)`` in linear scale."""
    w = ens.weights
    with np.errstate(over="ignore"):
        return (w * _phi_values(phi, ens.positions)).mean(axis=1) * np.exp(ens.log_scale)


def estimate_updated(ens: ParticleEnsemble, model, phi=None) -> np.ndarray:
    """Estimate of the updated filter, reweighting by the current potential."""
    logpot = np.asarray(model.log_potential(ens.n, ens.positions), dtype=float)
    w = ens.weights * np.exp(logpot - logpot.max(axis=1, keepdims=True))
    return (w * _phi_values(phi, ens.positions)).sum(axis=1) / w.sum(axis=1)


def diagnostics(ens: ParticleEnsemble, check: bool = True) -> WeightDiagnostics:
    """Effective sample size fraction and group weight concentration.

    Raises
    ------
    InvariantViolation
        When weights are negative, non-finite or all zero, or the effective
        sample size fraction falls below ``1/m``.
    """
    gw = ens.group_weights
    if check and not (np.all(np.isfinite(gw)) and np.all(gw >= 0) and np.all(gw.sum(axis=1) > 0)):
        raise InvariantViolation(f"weights not finite and non-negative with positive total at step {ens.n}")
    with np.errstate(invalid="ignore", divide="ignore"):
        # scale by the largest weight so tiny weights do not underflow when squared
        rel = gw / gw.max(axis=1, keepdims=True)
        ess = rel.mean(axis=1) ** 2 / (rel * rel).mean(axis=1)
        share = gw / gw.sum(axis=1, keepdims=True)
    if check and np.any(ess < (1.0 / ens.m) * (1 - 1e-12)):
        raise InvariantViolation(f"ESS fraction {ess.min()} below 1/m = {1 / ens.m} at step {ens.n}")
    return WeightDiagnostics(
        ess_fraction=ess,
        n_eff=ens.N * ess,
        max_group_weight=share.max(axis=1),
        quad_concentration=np.sqrt((share * share).sum(axis=1)),
        group_weights=gw,
    )


# ---------------------------------------------------------------------------
# replicate harness

RECORD_FIELDS = (
    "estimate",
    "updated",
    "unnormalized",
    "normalizer_log",
    "ess",
    "neff",
    "max_group_weight",
    "quad_concentration",
)


@dataclass
class ReplicateConfig:
    """Settings for a batch of independent filter runs.

    ``stream`` separates random streams of runs that share a master seed
    (for example the two schemes of a comparison).
    """

    model: object
    scheme: InteractionScheme
    m: int
    steps: int
    replicates: int = 1
    seed: int = 0
    phi: object = None
    updated: bool = False
    block_size: int = 256
    workers: int = 1
    stream: int = 0

    def validate(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.block_size < 1 or self.workers < 1:
            raise ValueError("block_size and workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class ReplicateRecords:
    """Per-replicate, per-step records, each array of shape ``(R, steps + 1)``."""

    config: ReplicateConfig
    data: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key) -> np.ndarray:
        return self.data[key]

    def rows(self):
        """Yield records in canonical (replicate, step) order."""
        cfg = self.config
        R, T = self.data["estimate"].shape
        for r in range(R):
            for n in range(T):
                yield {
                    "replicate": r,
                    "n": n,
                    "scheme": cfg.scheme.kind,
                    "M": cfg.scheme.M,
                    "m": cfg.m,
                    "theta": cfg.scheme.theta,
                    **{k: float(self.data[k][r, n]) for k in RECORD_FIELDS},
                }


def replicate_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    """Generator for one replicate block; independent of execution layout."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, block)))


def run_filter(model, scheme, m, steps, rng, replicates=1, phi=None, updated=False, alpha=None, on_step: Callable | None = None):
    """Run ``replicates`` filters for ``steps`` steps and record every time index.

    Returns a dict of arrays of shape ``(replicates, steps + 1)``.
    """
    out = {k: np.empty((replicates, steps + 1)) for k in RECORD_FIELDS}
    ens = init_ensemble(model, scheme, m, rng, replicates)
    for n in range(steps + 1):
        if n:
            ens = step(ens, model, alpha, rng)
        d = diagnostics(ens)
        out["estimate"][:, n] = estimate_prediction(ens, phi)
        out["updated"][:, n] = estimate_updated(ens, model, phi) if updated else np.nan
        out["unnormalized"][:, n] = estimate_unnormalized(ens, phi)
        out["normalizer_log"][:, n] = estimate_normalizer(ens, log=True)
        out["ess"][:, n] = d.ess_fraction
        out["neff"][:, n] = d.n_eff
        out["max_group_weight"][:, n] = d.max_group_weight
        out["quad_concentration"][:, n] = d.quad_concentration
        if on_step is not None:
            on_step(ens)
    return out


def run_replicates(config: ReplicateConfig) -> ReplicateRecords:
    """Run independent replicates in fixed-size blocks.

    Block ``b`` always covers replicates ``b * block_size`` onward and uses
    its own seeded generator, so results do not depend on ``workers``.
    """
    config.validate()
    cfg = config
    n_blocks = math.ceil(cfg.replicates / cfg.block_size)

    def work(b):
        size = min(cfg.block_size, cfg.replicates - b * cfg.block_size)
        rng = replicate_rng(cfg.seed, cfg.stream, b)
        return run_filter(cfg.model, cfg.scheme, cfg.m, cfg.steps, rng, size, cfg.phi, cfg.updated)

    if cfg.workers == 1 or n_blocks == 1:
        parts = [work(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    data = {k: np.concatenate([p[k] for p in parts], axis=0) for k in RECORD_FIELDS}
    return ReplicateRecords(cfg, data)
