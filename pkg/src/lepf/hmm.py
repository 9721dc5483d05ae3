"""Hidden Markov models, a small model zoo and exact finite-state filters.

Two representations are provided. :class:`FiniteHmm` holds an explicit
initial distribution, transition matrix and likelihood vectors, so the
prediction filter, the updated filter and the normalising constant can be
computed exactly. :class:`GenericHmm` holds samplers and a log-likelihood
and is only usable through simulation.

Both expose the small protocol used by the particle filters in
:mod:`lepf.smc`::

    sample_initial(rng, size) -> states
    sample_transition(states, rng) -> states
    log_potential(n, states) -> log g_n(states)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

__all__ = [
    "FiniteHmm",
    "GenericHmm",
    "MixingReport",
    "NormalizerUnderflowError",
    "iid_toy",
    "binary_toy",
    "gaussian_toy",
    "stoch_vol",
    "is_iid",
    "exact_prediction_filter",
    "log_gamma_normalizer",
    "gamma_normalizer",
    "updated_filter",
    "c_constant",
    "gaussian_toy_c",
    "check_mixing",
    "simulate_hmm",
    "parse_finite_hmm",
    "load_finite_hmm",
]

PROB_TOL = 1e-12


class NormalizerUnderflowError(ArithmeticError):
    """Raised when a filtering normaliser vanishes numerically."""


def _probability_vector(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError(f"{name} must have finite non-negative entries")
    total = x.sum()
    if abs(total - 1.0) > PROB_TOL:
        raise ValueError(f"{name} sums to {total!r}, not 1")
    return x / total


@dataclass(frozen=True, eq=False)
class FiniteHmm:
    """Finite-state HMM with fixed likelihood vectors.

    Parameters
    ----------
    pi0 : array_like, shape (S,)
        Initial distribution.
    transition : array_like, shape (S, S)
        Row-stochastic transition matrix ``F``.
    likelihoods : array_like, shape (S,) or (H + 1, S)
        Either a single time-homogeneous vector ``g`` or the vectors
        ``g_0, ..., g_H``. Entries must be finite and strictly positive.

    Probability vectors within ``1e-12`` of summing to one are
    renormalised; anything further off is rejected.
    """

    pi0: np.ndarray
    transition: np.ndarray
    likelihoods: np.ndarray
    name: str = "finite"

    def __post_init__(self):
        pi0 = _probability_vector(self.pi0, "pi0")
        S = pi0.size
        F = np.asarray(self.transition, dtype=float)
        if F.shape != (S, S):
            raise ValueError(f"transition must have shape {(S, S)}, got {F.shape}")
        F = np.vstack([_probability_vector(row, f"transition row {k}") for k, row in enumerate(F)])
        g = np.asarray(self.likelihoods, dtype=float)
        if g.ndim not in (1, 2) or g.shape[-1] != S:
            raise ValueError(f"likelihoods must have trailing dimension {S}")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("likelihood entries must be finite and strictly positive")
        for attr, value in (("pi0", pi0), ("transition", F), ("likelihoods", g)):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)
        object.__setattr__(self, "_cum_pi0", np.cumsum(pi0))
        object.__setattr__(self, "_cum_transition", np.cumsum(F, axis=1))

    @property
    def n_states(self) -> int:
        return self.pi0.size

    @property
    def homogeneous(self) -> bool:
        return self.likelihoods.ndim == 1

    @property
    def horizon(self) -> int | None:
        """Last time index with a stored likelihood, ``None`` if homogeneous."""
        return None if self.homogeneous else self.likelihoods.shape[0] - 1

    def g(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("time index must be non-negative")
        if self.homogeneous:
            return self.likelihoods
        if n > self.horizon:
            raise IndexError(f"likelihood g_{n} requested beyond stored horizon {self.horizon}")
        return self.likelihoods[n]

    def q_matrix(self, n: int) -> np.ndarray:
        """Kernel ``Q_n = diag(g_{n-1}) F`` for ``n >= 1``."""
        return self.g(n - 1)[:, None] * self.transition

    # particle-filter protocol
    def sample_initial(self, rng, size):
        u = rng.random(size)
        return np.minimum(np.searchsorted(self._cum_pi0, u, side="right"), self.n_states - 1)

    def sample_transition(self, states, rng):
        states = np.asarray(states)
        u = rng.random(states.shape)
        cum = self._cum_transition[states]
        return np.minimum((cum <= u[..., None]).sum(axis=-1), self.n_states - 1)

    def log_potential(self, n, states):
        return np.log(self.g(n))[states]


@dataclass(frozen=True, eq=False)
class GenericHmm:
    """Simulation-only HMM described by samplers.

    ``initial_sampler(rng, size)`` and ``transition_sampler(states, rng)``
    are vectorised over arrays of states. ``log_likelihood(y, states)``
    returns ``log g(states, y)``. When ``observations`` is set, the
    potential at time ``n`` uses ``observations[n]``; otherwise the
    likelihood is called with ``None`` (models whose ``g`` does not depend
    on data, such as the Gaussian toy).
    """

    initial_sampler: Callable
    transition_sampler: Callable
    log_likelihood: Callable
    observation_sampler: Callable | None = None
    observations: np.ndarray | None = None
    name: str = "generic"
    params: dict[str, Any] = field(default_factory=dict)

    def with_observations(self, observations) -> "GenericHmm":
        obs = np.asarray(observations, dtype=float)
        return GenericHmm(
            self.initial_sampler,
            self.transition_sampler,
            self.log_likelihood,
            self.observation_sampler,
            obs,
            self.name,
            dict(self.params),
        )

    def likelihood(self, y, states):
        return np.exp(self.log_likelihood(y, states))

    def sample_initial(self, rng, size):
        return self.initial_sampler(rng, size)

    def sample_transition(self, states, rng):
        return self.transition_sampler(states, rng)

    def log_potential(self, n, states):
        if self.observations is None:
            return self.log_likelihood(None, states)
        if n >= len(self.observations):
            raise IndexError(f"observation y_{n} requested beyond {len(self.observations) - 1}")
        return self.log_likelihood(self.observations[n], states)


# ---------------------------------------------------------------------------
# model zoo


def iid_toy(pi0, g, name="iid_toy") -> FiniteHmm:
    """Finite model whose transition ignores the current state."""
    pi0 = np.asarray(pi0, dtype=float)
    return FiniteHmm(pi0, np.tile(pi0, (pi0.size, 1)), g, name=name)


def binary_toy(p: float, delta: float) -> FiniteHmm:
    """Two-state i.i.d. model with ``pi0 = (p, 1-p)`` and ``g = (1-delta, delta)``."""
    if not (0 < p < 1 and 0 < delta < 1):
        raise ValueError("binary_toy requires 0 < p < 1 and 0 < delta < 1")
    return iid_toy([p, 1 - p], [1 - delta, delta], name="binary_toy")


_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def gaussian_toy(shift: float = 0.5) -> GenericHmm:
    """X_n i.i.d. N(0, 1) with ``g(x) = exp(-(x + shift)^2 / 2) / sqrt(2 pi)``."""

    def initial(rng, size):
        return rng.standard_normal(size)

    def transition(states, rng):
        return rng.standard_normal(np.shape(states))

    def log_lik(y, states):
        x = np.asarray(states, dtype=float)
        return -0.5 * (x + shift) ** 2 - _LOG_SQRT_2PI

    return GenericHmm(initial, transition, log_lik, name="gaussian_toy", params={"shift": shift})


def stoch_vol(a: float = 0.9, b: float = 0.1, sigma_v: float = 0.5, x0: float | None = None) -> GenericHmm:
    """Stochastic volatility model.

    ``X_0 ~ N(0, 1)`` (or the point mass at ``x0``), ``X_{k+1} = a X_k + V_k``
    with ``V_k ~ N(0, sigma_v^2)`` and ``Y_k = b exp(X_k / 2) eps_k``.
    """
    if b <= 0 or sigma_v < 0:
        raise ValueError("stoch_vol requires b > 0 and sigma_v >= 0")

    def initial(rng, size):
        if x0 is not None:
            return np.full(size, float(x0))
        return rng.standard_normal(size)

    def transition(states, rng):
        states = np.asarray(states, dtype=float)
        return a * states + sigma_v * rng.standard_normal(states.shape)

    def log_lik(y, states):
        x = np.asarray(states, dtype=float)
        log_sd = math.log(b) + 0.5 * x
        return -0.5 * (y * y) * np.exp(-2.0 * log_sd) - log_sd - _LOG_SQRT_2PI

    def observe(states, rng):
        states = np.asarray(states, dtype=float)
        return b * np.exp(0.5 * states) * rng.standard_normal(states.shape)

    return GenericHmm(
        initial,
        transition,
        log_lik,
        observe,
        name="stoch_vol",
        params={"a": a, "b": b, "sigma_v": sigma_v, "x0": x0},
    )


def is_iid(model: FiniteHmm) -> bool:
    """True when every row of ``F`` equals ``pi0`` and ``g`` is homogeneous."""
    return model.homogeneous and np.allclose(model.transition, model.pi0[None, :], rtol=0, atol=PROB_TOL)


# ---------------------------------------------------------------------------
# exact recursions


def _normalise(v, n):
    total = v.sum()
    if not (np.isfinite(total) and total > 0):
        raise NormalizerUnderflowError(f"filter normaliser vanished at step {n}")
    return v / total, total


def exact_prediction_filter(model: FiniteHmm, horizon: int) -> np.ndarray:
    """Prediction filters ``pi_0, ..., pi_horizon`` as rows of an array."""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    out = np.empty((horizon + 1, model.n_states))
    out[0] = model.pi0
    for n in range(1, horizon + 1):
        out[n], _ = _normalise((out[n - 1] * model.g(n - 1)) @ model.transition, n)
    return out


def log_gamma_normalizer(model: FiniteHmm, n: int) -> float:
    """``log gamma_n(1)``, accumulated as ``sum_k log pi_k(g_k)``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    pi = model.pi0
    log_gamma = 0.0
    for k in range(n):
        weighted = pi * model.g(k)
        pi, total = _normalise(weighted, k)
        log_gamma += math.log(total)
        pi = pi @ model.transition
    return log_gamma


def gamma_normalizer(model: FiniteHmm, n: int) -> float:
    return math.exp(log_gamma_normalizer(model, n))


def updated_filter(model: FiniteHmm, n: int) -> np.ndarray:
    pi_n = exact_prediction_filter(model, n)[n]
    out, _ = _normalise(pi_n * model.g(n), n)
    return out


def gaussian_toy_c(shift: float = 0.5) -> float:
    """Closed form of ``pi0(g^2) / pi0(g)^2 - 1`` for :func:`gaussian_toy`.

    With ``X ~ N(0,1)``, ``E exp(-k (X + s)^2 / 2) = exp(-k s^2 / (2 (1 + k))) / sqrt(1 + k)``,
    which gives ``(2 / sqrt(3)) exp(s^2 / 6)`` for the ratio.
    """
    return math.expm1(math.log(2 / math.sqrt(3)) + shift * shift / 6)


def c_constant(model) -> float:
    """``c = pi0(g^2) / pi0(g)^2 - 1`` for the i.i.d. toy models."""
    if isinstance(model, GenericHmm):
        if model.name != "gaussian_toy":
            raise ValueError("c is only defined for i.i.d. toy models")
        return gaussian_toy_c(model.params["shift"])
    if not is_iid(model):
        raise ValueError("c is only defined for i.i.d. toy models (F rows equal pi0, homogeneous g)")
    g, pi0 = model.likelihoods, model.pi0
    return max(float(pi0 @ (g * g)) / float(pi0 @ g) ** 2 - 1.0, 0.0)


@dataclass(frozen=True)
class MixingReport:
    delta_ratio: float
    epsilon_ratio: float
    satisfied: bool
    violation: tuple[int, int, int] | None = None


def check_mixing(model: FiniteHmm) -> MixingReport:
    """Smallest constants with ``g_n(x) <= delta g_n(y)`` and ``F(x,.) <= eps F(y,.)``.

    ``violation`` is a triple ``(x, y, z)`` with ``F(x, z) > 0 = F(y, z)``
    when no finite ``eps`` exists.
    """
    g = np.atleast_2d(model.likelihoods)
    delta = float(np.max(g.max(axis=1) / g.min(axis=1)))
    F = model.transition
    eps = 1.0
    violation = None
    for z in range(model.n_states):
        col = F[:, z]
        if not np.any(col > 0):
            continue
        if np.any(col == 0):
            x = int(np.argmax(col))
            y = int(np.flatnonzero(col == 0)[0])
            violation = (x, y, z)
            eps = math.inf
            break
        eps = max(eps, float(col.max() / col.min()))
    return MixingReport(delta, eps, math.isfinite(delta) and math.isfinite(eps), violation)


def simulate_hmm(model: GenericHmm, steps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw a state path and observations ``(x_0..x_{steps-1}, y_0..y_{steps-1})``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if model.observation_sampler is None:
        raise ValueError(f"model {model.name!r} has no observation sampler")
    states = np.empty(steps)
    x = model.sample_initial(rng, 1)
    for k in range(steps):
        if k:
            x = model.sample_transition(x, rng)
        states[k] = x[0]
    obs = model.observation_sampler(states, rng)
    return states, obs


# ---------------------------------------------------------------------------
# plain-text finite model files

_ROW_KEY = re.compile(r"F\.row(\d+)$")
_G_KEY = re.compile(r"g(\d+)$")


def _floats(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def parse_finite_hmm(text: str) -> FiniteHmm:
    """Parse the ``key=value`` model format.

    Keys: ``S``, ``pi0``, ``F.row<k>`` (``k`` is the 0-based state index),
    and either ``g`` or ``g<n>`` for ``n = 0..H``. ``#`` starts a comment.
    """
    S = None
    pi0 = None
    rows: dict[int, list[float]] = {}
    g_single = None
    g_timed: dict[int, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "S":
            S = int(value)
        elif key == "pi0":
            pi0 = _floats(value)
        elif key == "g":
            g_single = _floats(value)
        elif m := _ROW_KEY.match(key):
            rows[int(m.group(1))] = _floats(value)
        elif m := _G_KEY.match(key):
            g_timed[int(m.group(1))] = _floats(value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if S is None or pi0 is None:
        raise ValueError("model file needs S and pi0")
    if sorted(rows) != list(range(S)):
        raise ValueError(f"model file needs F.row0 .. F.row{S - 1}")
    if (g_single is None) == (not g_timed):
        raise ValueError("model file needs either g or g<n> lines, not both")
    if g_single is not None:
        g = g_single
    else:
        if sorted(g_timed) != list(range(len(g_timed))):
            raise ValueError("g<n> lines must cover n = 0..H without gaps")
        g = [g_timed[k] for k in range(len(g_timed))]
    if len(pi0) != S:
        raise ValueError("pi0 length does not match S")
    return FiniteHmm(pi0, [rows[k] for k in range(S)], g, name="file")


def load_finite_hmm(path) -> FiniteHmm:
    return parse_finite_hmm(Path(path).read_text())
