"""Asymptotic variance of the interacting filters.

Routes to the limiting variance ``sigma_n^2`` of
``sqrt(N) (pi_n^N(phi) - pi_n(phi))``:

* i.i.d. toy models: ``pi0(phibar^2) E[exp(t Z_n)]`` with
  ``t = log(1 + c)``, evaluated from the collision-count mgf;
* finite state spaces: a sum over collision patterns of the backward
  chain pair, weighted by tensor functionals of the model, with pattern
  probabilities from the block-offset chain (``sigma2_pattern_sum``) or by
  explicit enumeration of ancestor paths (``sigma2_path_enumeration``);
* the exact second moment of the unnormalised estimator at finite ``N``.

Tensor functionals act on ``S x S`` matrices ``H``: the kernel
``Q_k = diag(g_{k-1}) F`` maps ``H`` to ``Q_k H Q_k^T`` and the collision
operator replaces ``H[x, y]`` by ``H[x, x]``.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .collision import ZLawSpec, de_initial, z_mgf
from .hmm import FiniteHmm, exact_prediction_filter, gaussian_toy_c, log_gamma_normalizer
from .interaction import AlphaMatrix, InteractionScheme, window_start

__all__ = [
    "T0",
    "VarianceResult",
    "centered_phi",
    "collide",
    "pattern_value",
    "sigma2_simple_model",
    "sigma2_ibpf_closed",
    "sigma2_pattern_sum",
    "sigma2_path_enumeration",
    "second_moment_finite_N",
    "ratio_Rn",
    "theta_sweep",
    "scaling_M",
    "scaling_study",
    "clt_constant",
]

T0 = math.log1p(gaussian_toy_c())
"""``log(pi0(g^2) / pi0(g)^2)`` for the Gaussian toy model."""

MAX_PATTERN_N = 14
MAX_PATHS = 5_000_000


@dataclass(frozen=True)
class VarianceResult:
    sigma2: float
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def log_sigma2(self) -> float:
        return math.log(self.sigma2) if self.sigma2 > 0 else -math.inf

    @property
    def positive(self) -> bool:
        return self.sigma2 > 1e-14


# ---------------------------------------------------------------------------
# simplified model


def sigma2_simple_model(c: float, n: int, scheme: InteractionScheme, phi_var: float = 1.0) -> VarianceResult:
    """Variance for i.i.d. models, ``phi_var * E[exp(log(1 + c) Z_n)]``."""
    if c < 0 or phi_var < 0 or n < 0:
        raise ValueError("need c >= 0, phi_var >= 0, n >= 0")
    log_mgf = z_mgf(ZLawSpec(scheme, n), math.log1p(c))
    return VarianceResult(phi_var * math.exp(log_mgf), "simple_closed", {"log_mgf": log_mgf})


def sigma2_ibpf_closed(c: float, n: int, M: int, phi_var: float = 1.0) -> VarianceResult:
    """``phi_var (1 + c / M)^n`` for independent groups."""
    if c < 0 or phi_var < 0 or n < 0:
        raise ValueError("need c >= 0, phi_var >= 0, n >= 0")
    log_mgf = n * math.log1p(c / M)
    return VarianceResult(phi_var * math.exp(log_mgf), "ibpf_closed", {"log_mgf": log_mgf})


# ---------------------------------------------------------------------------
# finite-state tensor functionals


def centered_phi(model: FiniteHmm, phi, n: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (model.n_states,):
        raise ValueError(f"phi must have length {model.n_states}")
    return phi - exact_prediction_filter(model, n)[n] @ phi


def collide(H: np.ndarray) -> np.ndarray:
    """``H[x, y] -> H[x, x]``."""
    return np.repeat(np.diag(H)[:, None], H.shape[1], axis=1)


def _scaled_kernels(model: FiniteHmm, n: int) -> list[np.ndarray]:
    """``Q_k / pi_{k-1}(g_{k-1})`` for ``k = 1..n``; products then carry ``1 / gamma_n``."""
    pis = exact_prediction_filter(model, max(n - 1, 0))
    return [model.q_matrix(k) / (pis[k - 1] @ model.g(k - 1)) for k in range(1, n + 1)]


def pattern_value(model: FiniteHmm, phibar, flags, kernels=None) -> float:
    """Tensor functional for collision flags ``flags[k]``, ``k = 0..n``.

    With ``kernels=None`` the raw kernels ``Q_k`` are used.
    """
    flags = tuple(int(f) for f in flags)
    n = len(flags) - 1
    if kernels is None:
        kernels = [model.q_matrix(k) for k in range(1, n + 1)]
    H = np.outer(phibar, phibar)
    if flags[n]:
        H = collide(H)
    for k in range(n - 1, -1, -1):
        Q = kernels[k]
        H = Q @ H @ Q.T
        if flags[k]:
            H = collide(H)
    return float(model.pi0 @ H @ model.pi0)


def _start_groups(scheme: InteractionScheme, n: int, radius: int) -> Counter:
    groups = Counter()
    for u in range(scheme.M):
        for v in range(-radius, radius + 1):
            s = de_initial(u, u + v, scheme.M)
            groups[(s.d, s.e)] += 1
    return groups


def _pattern_probs(scheme: InteractionScheme, n: int, d0: int) -> dict[tuple[int, ...], float]:
    """Law of the flags ``E_1..E_n`` from block offset ``d0``."""
    L = n + abs(d0)
    c = L
    qs, qst, pc = scheme.q_step, scheme.q_stay, scheme.p_coll
    start = np.zeros(2 * L + 1)
    start[c + d0] = 1.0
    out: dict[tuple[int, ...], float] = {}

    def no_collision(v):
        new = qst * v
        new[1:] += qs * v[:-1]
        new[:-1] += qs * v[1:]
        new[c] -= qst * pc * v[c]
        return new

    def visit(v, prefix):
        if len(prefix) == n:
            total = v.sum()
            if total > 0:
                out[prefix] = total
            return
        if v[c] > 0 and pc > 0:
            hit = np.zeros_like(v)
            hit[c] = qst * pc * v[c]
            visit(hit, prefix + (1,))
        miss = no_collision(v)
        if miss.sum() > 0:
            visit(miss, prefix + (0,))

    visit(start, ())
    return out


def sigma2_pattern_sum(model: FiniteHmm, phi, n: int, scheme: InteractionScheme, max_n: int = MAX_PATTERN_N) -> VarianceResult:
    """Finite-state asymptotic variance by summing over collision patterns.

    Every start pair ``(u, u + v)``, ``0 <= u < M``, ``|v| <= 2 n band``,
    is reduced to its block offset and initial flag. Pattern
    probabilities come from the block-offset chain and each distinct
    pattern is evaluated once.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > max_n:
        raise ValueError(f"n={n} exceeds the enumeration budget max_n={max_n} (2^(n+1) patterns); raise max_n explicitly")
    phibar = centered_phi(model, phi, n)
    kernels = _scaled_kernels(model, n)
    radius = 2 * n * scheme.band
    groups = _start_groups(scheme, n, radius)
    values: dict[tuple[int, ...], float] = {}
    total = 0.0
    n_terms = 0
    for (d0, e0), mult in sorted(groups.items()):
        for tail, prob in _pattern_probs(scheme, n, d0).items():
            # tail holds E_1..E_n; flag at time k is E_{n-k}, E_0 = e0
            flags = tuple(reversed((e0,) + tail))
            if flags not in values:
                values[flags] = pattern_value(model, phibar, flags, kernels)
            total += mult * prob * values[flags]
            n_terms += 1
    sigma2 = total / scheme.M
    return VarianceResult(
        sigma2,
        "pattern_sum",
        {"patterns": len(values), "terms": n_terms, "start_groups": len(groups), "radius": radius},
    )


def sigma2_path_enumeration(
    model: FiniteHmm,
    phi,
    n: int,
    scheme: InteractionScheme,
    radius: int | None = None,
    max_paths: int = MAX_PATHS,
) -> VarianceResult:
    """Same quantity by enumerating every backward path pair.

    Each start ``(u, u + v)`` expands into all ``M^(2n)`` equally likely
    ancestor path pairs of the limiting matrix. The tensor functionals are
    evaluated as Kronecker products on vectors of length ``S^2`` with the
    raw kernels, then divided by ``gamma_n(1)^2``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    M = scheme.M
    if radius is None:
        radius = 2 * n * scheme.band
    n_starts = M * (2 * radius + 1)
    if n_starts * M ** (2 * n) > max_paths:
        raise ValueError(f"{n_starts * M ** (2 * n)} paths exceed max_paths={max_paths}")
    phibar = centered_phi(model, phi, n)
    S = model.n_states
    offsets = np.arange(M)
    pattern_mass = np.zeros(2 ** (n + 1))
    for u in range(M):
        for v in range(-radius, radius + 1):
            I = np.array([u])
            J = np.array([u + v])
            code = np.array([int(u == u + v)])  # bit 0: time n
            for j in range(1, n + 1):
                shape = (I.size, M, M)
                I2 = np.broadcast_to(window_start(scheme, I)[:, None, None] + offsets[None, :, None], shape)
                J2 = np.broadcast_to(window_start(scheme, J)[:, None, None] + offsets[None, None, :], shape)
                code = np.broadcast_to(code[:, None, None], shape).ravel()
                I, J = I2.ravel(), J2.ravel()
                code = code | ((I == J).astype(np.int64) << j)
            pattern_mass += np.bincount(code, minlength=pattern_mass.size) / M ** (2 * n)

    collide_mat = np.zeros((S * S, S * S))
    for x in range(S):
        for y in range(S):
            collide_mat[x * S + y, x * S + x] = 1.0
    start_vec = np.kron(model.pi0, model.pi0)
    total = 0.0
    for code in np.flatnonzero(pattern_mass):
        bits = [(int(code) >> j) & 1 for j in range(n + 1)]  # bit j is time n - j
        vec = np.kron(phibar, phibar)
        if bits[0]:
            vec = collide_mat @ vec
        for j in range(1, n + 1):
            Q = model.q_matrix(n - j + 1)
            vec = np.kron(Q, Q) @ vec
            if bits[j]:
                vec = collide_mat @ vec
        total += pattern_mass[code] * float(start_vec @ vec)
    gamma2 = math.exp(2 * log_gamma_normalizer(model, n))
    return VarianceResult(total / (M * gamma2), "path_enumeration", {"radius": radius, "starts": n_starts})


def second_moment_finite_N(model: FiniteHmm, phi, n: int, alpha: AlphaMatrix, centered: bool = True, max_paths: int = MAX_PATHS):
    """Exact ``E[((1/N) sum_i W_n^i phi(x_n^i))^2]`` by path enumeration.

    Every pair of ancestral lines ``(i_0..i_n, j_0..j_n)`` is weighted by
    the product of interaction entries along both lines. ``phi`` is
    centred at the exact prediction filter when ``centered``.

    Returns
    -------
    moment : float
    scaled : float
        ``N * moment / gamma_n(1)^2``, which approaches the asymptotic
        variance as the number of groups grows.
    """
    N = alpha.N
    nnz = np.diff(alpha.matrix.indptr)
    K = int(nnz.max())
    if N * N * K ** (2 * n) > max_paths:
        raise ValueError(f"{N * N * K ** (2 * n)} paths exceed max_paths={max_paths}")
    cols = np.zeros((N, K), dtype=np.int64)
    wts = np.zeros((N, K))
    for r in range(N):
        c, w = alpha.row_support(r)
        cols[r, : c.size] = c
        wts[r, : c.size] = w
    f = centered_phi(model, phi, n) if centered else np.asarray(phi, dtype=float)

    I = np.repeat(np.arange(N), N)
    J = np.tile(np.arange(N), N)
    weight = np.ones(N * N)
    code = (I == J).astype(np.int64)  # bit j is time n - j
    for j in range(1, n + 1):
        I2 = np.broadcast_to(cols[I][:, :, None], (I.size, K, K))
        J2 = np.broadcast_to(cols[J][:, None, :], (I.size, K, K))
        w2 = weight[:, None, None] * wts[I][:, :, None] * wts[J][:, None, :]
        code = np.broadcast_to(code[:, None, None], (I.size, K, K)).ravel()
        I, J, weight = I2.ravel(), J2.ravel(), w2.ravel()
        keep = weight > 0
        I, J, weight, code = I[keep], J[keep], weight[keep], code[keep]
        code = code | ((I == J).astype(np.int64) << j)
    mass = np.bincount(code, weights=weight, minlength=2 ** (n + 1))
    moment = 0.0
    for c in np.flatnonzero(mass):
        flags = tuple(((int(c) >> (n - k)) & 1) for k in range(n + 1))
        moment += mass[c] * pattern_value(model, f, flags)
    moment /= N * N
    scaled = N * moment / math.exp(2 * log_gamma_normalizer(model, n))
    return moment, scaled


# ---------------------------------------------------------------------------
# mgf ratios and scaling


def ratio_Rn(n: int, M: int, theta: int, t: float) -> float:
    """``E[e^{t Z_n}]`` under independent groups over the same under local exchange."""
    ib = z_mgf(ZLawSpec(InteractionScheme.ibpf(M), n), t)
    le = z_mgf(ZLawSpec(InteractionScheme.lepf(M, theta), n), t)
    return math.exp(ib - le)


def theta_sweep(M: int, n: int, t: float) -> np.ndarray:
    """``R_n`` for ``theta = 1..M-1``."""
    return np.array([ratio_Rn(n, M, th, t) for th in range(1, M)])


def scaling_M(n: int, exponent: float) -> int:
    return max(2, int(round(n**exponent)))


def scaling_study(exponents, ns, t: float = T0, theta: int = 1, scheme: str = "lepf") -> dict[float, list[dict]]:
    """Collision mgf with group size ``M(n) = max(2, round(n^p))``.

    For local exchange ``theta`` is clamped to ``M(n) - 1`` with a warning
    when the group is too small.
    """
    out = {}
    for p in exponents:
        rows = []
        for n in ns:
            M = scaling_M(n, p)
            if scheme == "ibpf":
                sch = InteractionScheme.ibpf(M)
            else:
                th = min(theta, M - 1)
                if th != theta:
                    warnings.warn(f"theta={theta} clamped to {th} for M({n})={M}", stacklevel=2)
                sch = InteractionScheme.lepf(M, th)
            log_mgf = z_mgf(ZLawSpec(sch, n), t)
            rows.append({"n": n, "M": M, "theta": sch.theta, "log_mgf": log_mgf, "mgf": math.exp(log_mgf)})
        out[p] = rows
    return out


def clt_constant(p: float, sigma: float, M: int) -> float:
    """Limit of ``sqrt(m) E[|pi_n^N(phi) - pi_n(phi)|^p]^(1/p)``.

    Equals ``sigma / sqrt(M)`` times the ``L_p`` norm of a standard normal.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    norm = math.sqrt(2.0) * math.exp((gammaln((p + 1) / 2) - 0.5 * math.log(math.pi)) / p)
    return sigma / math.sqrt(M) * norm
