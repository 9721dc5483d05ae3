"""Interaction matrices for local-exchange and independent-group filters.

Particles are arranged in ``m`` groups of ``M``. In the local exchange
scheme, group ``k`` (0-based) draws its ancestors uniformly from the ``M``
consecutive particles that start ``theta`` places after the group's own
first particle, wrapping around the ring of ``N = M m`` particles. The
independent scheme is the special case ``theta = 0``: every group
resamples from itself.

Public indices follow the 1-based convention of the cyclic modulus
:func:`cmod`. Internally, sparse matrices use 0-based rows and columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import sparse

__all__ = [
    "InteractionScheme",
    "AlphaMatrix",
    "AlphaWindow",
    "AssumptionCheck",
    "AssumptionReport",
    "cmod",
    "delta_metric",
    "window_start",
    "alpha_infinity_row",
    "alpha_infinity_entry",
    "build_alpha",
    "group_windows",
    "alpha_from_dense",
    "load_alpha_csv",
    "verify_assumptions",
]

ROW_TOL = 1e-14
COL_TOL = 1e-12


@dataclass(frozen=True)
class InteractionScheme:
    """Group interaction rule.

    Parameters
    ----------
    kind : {"lepf", "ibpf"}
    M : int
        Group size.
    theta : int
        Exchange shift, ``1 <= theta <= M - 1`` for ``"lepf"``; must be 0
        for ``"ibpf"``.
    """

    kind: str
    M: int
    theta: int = 0

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("lepf", "ibpf"):
            raise ValueError(f"unknown scheme {self.kind!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        if kind == "lepf":
            if self.M < 2:
                raise ValueError("local exchange needs M >= 2 (no admissible theta for M = 1)")
            if not 1 <= self.theta <= self.M - 1:
                raise ValueError(f"theta must lie in 1..{self.M - 1}, got {self.theta}")
        elif self.theta != 0:
            raise ValueError("ibpf has no exchange shift; theta must be 0")

    @classmethod
    def lepf(cls, M: int, theta: int) -> "InteractionScheme":
        return cls("lepf", M, theta)

    @classmethod
    def ibpf(cls, M: int) -> "InteractionScheme":
        return cls("ibpf", M, 0)

    @property
    def band(self) -> int:
        """Largest donor distance, ``M - 1 + theta``."""
        return self.M - 1 + self.theta

    @property
    def q_step(self) -> float:
        """Probability that the block offset of two backward chains moves up (or down)."""
        return self.theta * (self.M - self.theta) / self.M**2

    @property
    def q_stay(self) -> float:
        return ((self.M - self.theta) ** 2 + self.theta**2) / self.M**2

    @property
    def p_coll(self) -> float:
        """Collision probability given that the block offset stays at zero."""
        return self.M / ((self.M - self.theta) ** 2 + self.theta**2)

    def label(self) -> str:
        return f"lepf(M={self.M},theta={self.theta})" if self.kind == "lepf" else f"ibpf(M={self.M})"


def cmod(y, x):
    """Cyclic modulus with values in ``1..x``: ``y - floor((y - 1) / x) * x``."""
    return y - ((y - 1) // x) * x


def delta_metric(i, j, N):
    """Cyclic distance ``min_l |i - j + l N|`` on a ring of ``N`` sites."""
    r = np.mod(np.subtract(i, j), N)
    return np.minimum(r, N - r)


def window_start(scheme: InteractionScheme, i):
    """First index of the donor window of (1-based, any integer) row ``i``."""
    return ((np.asarray(i) - 1) // scheme.M) * scheme.M + scheme.theta + 1


class AlphaWindow(NamedTuple):
    start: int
    size: int
    weight: float

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)


def alpha_infinity_row(scheme: InteractionScheme, i: int) -> AlphaWindow:
    """Support of row ``i`` of the limiting doubly infinite matrix."""
    return AlphaWindow(int(window_start(scheme, i)), scheme.M, 1.0 / scheme.M)


def alpha_infinity_entry(scheme: InteractionScheme, i, j):
    """Vectorised entries of the limiting matrix."""
    start = window_start(scheme, i)
    j = np.asarray(j)
    return np.where((j >= start) & (j < start + scheme.M), 1.0 / scheme.M, 0.0)


@dataclass(frozen=True, eq=False)
class AlphaMatrix:
    """Sparse row-stochastic interaction matrix of size ``N x N``.

    ``matrix[i, j]`` is the probability that new particle ``i`` descends
    from old particle ``j`` (0-based).
    """

    matrix: sparse.csr_matrix
    M: int
    scheme: InteractionScheme | None = None
    _donors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        mat = sparse.csr_matrix(self.matrix, dtype=float, copy=True)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("alpha must be square")
        if mat.shape[0] % self.M:
            raise ValueError(f"N = {mat.shape[0]} is not a multiple of M = {self.M}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "_donors", self._find_group_donors())

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.N // self.M

    def entry(self, i: int, j: int) -> float:
        """Entry with 1-based indices."""
        return float(self.matrix[i - 1, j - 1])

    def todense(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_support(self, row: int) -> tuple[np.ndarray, np.ndarray]:
        """0-based columns and weights of a 0-based row."""
        lo, hi = self.matrix.indptr[row], self.matrix.indptr[row + 1]
        return self.matrix.indices[lo:hi], self.matrix.data[lo:hi]

    def group_donors(self) -> np.ndarray | None:
        """Donor table of shape ``(m, M)`` when rows are group-structured.

        Group-structured means every row of a group has the same ``M``
        columns, each with weight ``1 / M``. Returns ``None`` otherwise.
        """
        return self._donors

    def _find_group_donors(self):
        M, m = self.M, self.N // self.M
        counts = np.diff(self.matrix.indptr)
        if np.any(counts != M) or not np.allclose(self.matrix.data, 1.0 / M, rtol=0, atol=ROW_TOL):
            return None
        cols = self.matrix.indices.reshape(m, M, M)
        if np.any(cols != cols[:, :1, :]):
            return None
        donors = cols[:, 0, :].copy()
        donors.setflags(write=False)
        return donors


def group_windows(scheme: InteractionScheme, m: int) -> np.ndarray:
    """Donor columns of each group, shape ``(m, M)``, 0-based and sorted.

    Equal to ``build_alpha(scheme, m).group_donors()`` without building
    the ``N x N`` matrix.
    """
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    M = scheme.M
    cols = (np.arange(m)[:, None] * M + scheme.theta + np.arange(M)[None, :]) % (M * m)
    return np.sort(cols, axis=1)


def build_alpha(scheme: InteractionScheme, m: int) -> AlphaMatrix:
    """Interaction matrix for ``m`` groups of ``scheme.M`` particles."""
    windows = group_windows(scheme, m)
    M = scheme.M
    N = M * m
    cols = np.repeat(windows, M, axis=0)
    data = np.full(N * M, 1.0 / M)
    indptr = np.arange(0, N * M + 1, M)
    mat = sparse.csr_matrix((data, cols.ravel(), indptr), shape=(N, N))
    return AlphaMatrix(mat, M, scheme)


def alpha_from_dense(array, M: int, scheme: InteractionScheme | None = None) -> AlphaMatrix:
    return AlphaMatrix(sparse.csr_matrix(np.asarray(array, dtype=float)), M, scheme)


def load_alpha_csv(path, M: int, scheme: InteractionScheme | None = None) -> AlphaMatrix:
    """Read a dense comma-separated matrix (one row per line, ``#`` comments)."""
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append([float(tok) for tok in line.split(",")])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"{path}: expected a square matrix")
    return alpha_from_dense(rows, M, scheme)


# ---------------------------------------------------------------------------
# structural checks


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    witness: tuple | None = None
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" witness={self.witness}" if self.witness is not None else ""
        note = f" ({self.note})" if self.note else ""
        return f"{status} {self.name}{extra}{note}"


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[AssumptionCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def _first(mask):
    idx = np.argwhere(mask)
    return tuple(int(v) for v in idx[0]) if idx.size else None


def verify_assumptions(alpha: AlphaMatrix, scheme: InteractionScheme, tol: float = COL_TOL) -> AssumptionReport:
    """Check the four structural properties of an interaction matrix.

    ``stochastic``: rows and columns sum to one.
    ``shift``: entries are invariant under the joint cyclic shift by ``z M``.
    ``band``: entries vanish beyond cyclic distance ``band``.
    ``limit``: the limiting infinite matrix agrees with the finite one
    inside the band, checked over ``[-2N, 2N]^2``.

    The last two need ``N >= 2 band + 1`` and pass vacuously otherwise.
    Witnesses are 1-based ``(i, j)`` or ``(i, j, z)``.
    """
    A = alpha.todense()
    N, M = alpha.N, scheme.M
    if alpha.M != M:
        raise ValueError("alpha and scheme disagree on M")
    m = N // M
    beta = scheme.band
    checks = []

    row_bad = np.abs(A.sum(axis=1) - 1.0) > tol
    col_bad = np.abs(A.sum(axis=0) - 1.0) > tol
    if row_bad.any():
        i = int(np.flatnonzero(row_bad)[0])
        checks.append(AssumptionCheck("stochastic", False, (i + 1, None), "row sum != 1"))
    elif col_bad.any():
        j = int(np.flatnonzero(col_bad)[0])
        checks.append(AssumptionCheck("stochastic", False, (None, j + 1), "column sum != 1"))
    else:
        checks.append(AssumptionCheck("stochastic", True))

    witness = None
    for z in range(1, m + 1):
        shifted = np.roll(A, (-z * M, -z * M), axis=(0, 1))
        bad = _first(np.abs(shifted - A) > tol)
        if bad is not None:
            witness = (bad[0] + 1, bad[1] + 1, z)
            break
    checks.append(AssumptionCheck("shift", witness is None, witness))

    if N < 2 * beta + 1:
        note = f"vacuous: N={N} < 2*band+1={2 * beta + 1}"
        checks.append(AssumptionCheck("band", True, note=note))
        checks.append(AssumptionCheck("limit", True, note=note))
        return AssumptionReport(tuple(checks))

    idx = np.arange(1, N + 1)
    dist = delta_metric(idx[:, None], idx[None, :], N)
    bad = _first((dist > beta) & (np.abs(A) > tol))
    checks.append(AssumptionCheck("band", bad is None, None if bad is None else (bad[0] + 1, bad[1] + 1)))

    ext = np.arange(-2 * N, 2 * N + 1)
    I, J = ext[:, None], ext[None, :]
    limit = alpha_infinity_entry(scheme, I, J)
    finite = A[cmod(I, N) - 1, cmod(J, N) - 1] * (np.abs(I - J) <= beta)
    bad = _first(np.abs(limit - finite) > tol)
    checks.append(
        AssumptionCheck("limit", bad is None, None if bad is None else (int(ext[bad[0]]), int(ext[bad[1]])))
    )
    return AssumptionReport(tuple(checks))
