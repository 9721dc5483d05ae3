"""Collision counts of pairs of backward ancestor chains.

Two ancestor indices ``I`` and ``J`` are traced backwards through the
limiting interaction matrix, each drawing its predecessor uniformly from
its donor window. ``Z_n`` counts the steps (out of ``n``) at which the
two chains sit on the same particle. This module provides its exact law
for both schemes by two independent routes (a dynamic program over the
block offset and a closed mixture representation), its log moment
generating function, and a Monte Carlo sampler.

The block offset ``d`` of the two chains is a lazy random walk: it moves
by ``+1`` or ``-1`` with probability ``q_step`` each and stays put with
``q_stay``. A collision can only occur on a step where ``d`` stays at 0,
and then happens with probability ``p_coll``. The independent scheme has
``q_step = 0`` and ``p_coll = 1 / M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from .interaction import InteractionScheme, window_start

__all__ = [
    "PmfTable",
    "ZLawSpec",
    "DEState",
    "z_pmf_ibpf",
    "rwz_pmf",
    "beta_binomial_pmf",
    "z_pmf_lepf_mixture",
    "z_pmf_lepf_dp",
    "z_pmf",
    "z_mgf",
    "sample_ij_chain",
    "de_initial",
    "de_transitions",
    "de_step",
]

PMF_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PmfTable:
    """Probability mass function on ``offset, offset + 1, ...``."""

    probs: np.ndarray
    offset: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d array")
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > PMF_TOL:
            raise ValueError(f"not a probability vector (sum={p.sum()!r}, min={p.min()!r})")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + self.probs.size)

    def pmf(self, k) -> np.ndarray:
        k = np.asarray(k) - self.offset
        inside = (k >= 0) & (k < self.probs.size)
        return np.where(inside, self.probs[np.clip(k, 0, self.probs.size - 1)], 0.0)

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def log_mgf(self, t: float) -> float:
        with np.errstate(divide="ignore"):
            return float(logsumexp(t * self.support + np.log(self.probs)))

    def tv_distance(self, other: "PmfTable") -> float:
        lo = min(self.offset, other.offset)
        hi = max(self.offset + self.probs.size, other.offset + other.probs.size)
        k = np.arange(lo, hi)
        return 0.5 * float(np.abs(self.pmf(k) - other.pmf(k)).sum())


def _delta(k: int) -> PmfTable:
    return PmfTable(np.array([1.0]), offset=k)


def _from_log(logp, offset=0) -> PmfTable:
    return PmfTable(np.exp(logp - logsumexp(logp)), offset)


@dataclass(frozen=True)
class ZLawSpec:
    """Collision count after ``n`` backward steps under ``scheme``."""

    scheme: InteractionScheme
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")

    @property
    def q_step(self) -> float:
        return self.scheme.q_step

    @property
    def q_stay(self) -> float:
        return self.scheme.q_stay

    @property
    def p_coll(self) -> float:
        return self.scheme.p_coll


# ---------------------------------------------------------------------------
# closed-form pieces


def z_pmf_ibpf(n: int, M: int) -> PmfTable:
    """Binomial(n, 1/M) law of the collision count for independent groups."""
    if n < 0 or M < 1:
        raise ValueError("need n >= 0 and M >= 1")
    return PmfTable(stats.binom.pmf(np.arange(n + 1), n, 1.0 / M))


def _log_rwz(n: int) -> np.ndarray:
    h = n // 2
    x = np.arange(h + 1)
    return (
        (x - 2 * h) * math.log(2.0)
        + gammaln(2 * h - x + 1)
        - gammaln(h + 1)
        - gammaln(h - x + 1)
    )


def rwz_pmf(n: int) -> PmfTable:
    """Number of returns to zero of a simple symmetric walk in ``n`` steps."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return PmfTable(np.exp(_log_rwz(n)))


def _check_beta_binomial(n, a, b):
    if n < 0:
        raise ValueError("n must be non-negative")
    if not a > 0 or b < 0:
        raise ValueError("need a > 0 and b >= 0")
    if b == 0 and a != 1:
        raise ValueError("b = 0 is only defined for a = 1 (point mass at n)")


def _log_beta_binomial(n, a, b) -> np.ndarray:
    """Log pmf on ``0..n``; the degenerate ``b = 0`` case is the point mass at ``n``."""
    if b == 0:
        out = np.full(n + 1, -np.inf)
        out[n] = 0.0
        return out
    return stats.betabinom.logpmf(np.arange(n + 1), n, a, b)


def beta_binomial_pmf(n: int, a: float, b: float) -> PmfTable:
    _check_beta_binomial(n, a, b)
    return _from_log(_log_beta_binomial(n, a, b))


def _binomial_log_kernel(n: int, p: float) -> np.ndarray:
    """``K[b, z] = log P(Binomial(b, p) = z)`` for ``b, z`` in ``0..n``."""
    b = np.arange(n + 1)[:, None]
    z = np.arange(n + 1)[None, :]
    with np.errstate(divide="ignore"):
        out = stats.binom.logpmf(z, b, p)
    return np.where(z <= b, out, -np.inf)


def z_pmf_lepf_mixture(n: int, M: int, theta: int) -> PmfTable:
    """Collision-count law from its binomial / beta-binomial / return-count mixture.

    ``V ~ Bin(n, q_stay)`` lazy steps, ``S | V`` returns to zero of the
    ``n - V`` moving steps, ``B | V, S ~ BetaBin(V, S + 1, n - V - S)``
    lazy steps spent at zero, and ``Z | B ~ Bin(B, p_coll)``.
    """
    scheme = InteractionScheme.lepf(M, theta)
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return _delta(0)
    log_v = stats.binom.logpmf(np.arange(n + 1), n, scheme.q_stay)
    terms = []
    for v in range(n + 1):
        log_s = _log_rwz(n - v)
        for s, ls in enumerate(log_s):
            row = np.full(n + 1, -np.inf)
            row[: v + 1] = _log_beta_binomial(v, s + 1, n - v - s)
            terms.append(log_v[v] + ls + row)
    log_b = logsumexp(np.array(terms), axis=0)
    log_z = logsumexp(log_b[:, None] + _binomial_log_kernel(n, scheme.p_coll), axis=0)
    return _from_log(log_z)


def _dp_table(scheme: InteractionScheme, n: int, d0: int = 0) -> np.ndarray:
    """Joint table ``P[d, z]`` after ``n`` steps, ``d`` shifted by ``n + |d0|``."""
    L = n + abs(d0)
    P = np.zeros((2 * L + 1, n + 1))
    c = L
    P[c + d0, 0] = 1.0
    qs, qst, pc = scheme.q_step, scheme.q_stay, scheme.p_coll
    for k in range(n):
        new = qst * P
        new[1:] += qs * P[:-1]
        new[:-1] += qs * P[1:]
        stay0 = qst * P[c]
        new[c] -= pc * stay0
        new[c, 1:] += pc * stay0[:-1]
        P = new
    return P


def z_pmf_lepf_dp(n: int, M: int, theta: int, d0: int = 0) -> PmfTable:
    """Collision-count law by dynamic programming over block offset and count."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return PmfTable(_dp_table(InteractionScheme.lepf(M, theta), n, d0).sum(axis=0))


def z_pmf(spec: ZLawSpec, method: str = "dp") -> PmfTable:
    """Law of ``Z_n`` for either scheme; ``method`` is ``"dp"`` or ``"mixture"``."""
    s = spec.scheme
    if s.kind == "ibpf":
        return z_pmf_ibpf(spec.n, s.M)
    if method == "dp":
        return z_pmf_lepf_dp(spec.n, s.M, s.theta)
    if method == "mixture":
        return z_pmf_lepf_mixture(spec.n, s.M, s.theta)
    raise ValueError(f"unknown method {method!r}")


def z_mgf(spec: ZLawSpec, t: float, d0: int = 0) -> float:
    """``log E[exp(t Z_n)]`` started from block offset ``d0``.

    Independent groups use ``n log(1 + (e^t - 1) / M)``. Otherwise the
    offset walk is propagated with a factor ``1 + (e^t - 1) p_coll`` on
    every stay-at-zero step. Mass that can no longer reach zero in the
    remaining steps is frozen, so the cost is ``O(n^2)``.
    """
    n, s = spec.n, spec.scheme
    if n == 0 or t == 0:
        return 0.0
    if s.kind == "ibpf":
        if d0 != 0:
            return 0.0
        return n * math.log1p(math.expm1(t) / s.M)
    if abs(d0) >= n:
        return 0.0
    qs, qst = s.q_step, s.q_stay
    boost = 1.0 + math.expm1(t) * s.p_coll
    L = c = n
    v = np.zeros(2 * L + 1)
    v[c + d0] = 1.0
    frozen = 0.0
    log_scale = 0.0
    for k in range(n):
        reach = n - k - 1  # steps left after this one
        new = qst * v
        new[1:] += qs * v[:-1]
        new[:-1] += qs * v[1:]
        new[c] += qst * v[c] * (boost - 1.0)
        frozen += new[: c - reach].sum() + new[c + reach + 1 :].sum()
        new[: c - reach] = 0.0
        new[c + reach + 1 :] = 0.0
        total = new.sum() + frozen
        v = new / total
        frozen /= total
        log_scale += math.log(total)
    return log_scale + math.log(v.sum() + frozen)


# ---------------------------------------------------------------------------
# backward chains


def sample_ij_chain(
    scheme: InteractionScheme,
    n: int,
    start: tuple[int, int],
    rng,
    size: int = 1,
    return_flags: bool = False,
):
    """Simulate ``size`` pairs of backward chains from ``start = (u, v)``.

    Returns the collision counts, and with ``return_flags`` also the
    boolean flags ``E_1 .. E_n`` (collision after each backward step).
    """
    M = scheme.M
    I = np.full(size, start[0], dtype=np.int64)
    J = np.full(size, start[1], dtype=np.int64)
    flags = np.zeros((size, n), dtype=bool)
    for step in range(n):
        I = window_start(scheme, I) + rng.integers(0, M, size)
        J = window_start(scheme, J) + rng.integers(0, M, size)
        flags[:, step] = I == J
    counts = flags.sum(axis=1)
    return (counts, flags) if return_flags else counts


@dataclass(frozen=True)
class DEState:
    """Block offset ``d`` and collision flag ``e`` of a chain pair."""

    d: int
    e: int

    def __post_init__(self):
        if self.e not in (0, 1) or (self.e == 1 and self.d != 0):
            raise ValueError(f"invalid state d={self.d}, e={self.e}")


def de_initial(u: int, v: int, M: int) -> DEState:
    return DEState((u - 1) // M - (v - 1) // M, int(u == v))


def de_transitions(scheme: InteractionScheme, state: DEState) -> list[tuple[DEState, float]]:
    """Exact one-step law from ``state``, omitting zero-probability moves."""
    d = state.d
    out = []
    for nd, p in ((d - 1, scheme.q_step), (d, scheme.q_stay), (d + 1, scheme.q_step)):
        if p == 0:
            continue
        if nd == d == 0:
            pc = scheme.p_coll
            if pc < 1:
                out.append((DEState(0, 0), p * (1 - pc)))
            out.append((DEState(0, 1), p * pc))
        else:
            out.append((DEState(nd, 0), p))
    return out


def de_step(scheme: InteractionScheme, state: DEState, rng) -> DEState:
    moves = de_transitions(scheme, state)
    u = rng.random()
    acc = 0.0
    for nxt, p in moves:
        acc += p
        if u < acc:
            return nxt
    return moves[-1][0]
