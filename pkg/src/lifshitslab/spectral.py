"""Low-eigenvalue solves and eigenvalue counting for sparse symmetric operators.

Counting #{lambda < E} uses Sylvester inertia of a banded LDL^T
factorization of A - E I; this is the inner loop of the density-of-states
estimation, so the factorization kernel is JIT-compiled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]

__all__ = ["EigenResult", "CountResult", "smallest_eigs", "count_below",
           "dense_oracle"]

_DENSE_LIMIT = 2500


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residuals: np.ndarray
    iterations: int

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be ascending")
        object.__setattr__(self, "eigenvalues", ev)


@dataclass(frozen=True)
class CountResult:
    E: float
    count: int
    method: str
    jittered: bool = False


def _as_csr(A) -> sp.csr_matrix:
    mat = A.matrix if hasattr(A, "matrix") else A
    if not sp.issparse(mat):
        mat = sp.csr_matrix(mat)
    return mat.tocsr()


def smallest_eigs(A, k: int = 1, tol: float = 1e-10, seed: int = 7,
                  want_vectors: bool = True) -> EigenResult:
    """k smallest eigenpairs; deterministic given the seed.

    Small problems go through a dense solve; larger ones through
    shift-inverted Lanczos with a Gershgorin shift below the spectrum.
    """
    mat = _as_csr(A)
    n = mat.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"need 1 <= k < dim, got k={k}, dim={n}")
    if n <= 1200:
        vals, vecs = eigh(mat.toarray(), subset_by_index=[0, k - 1])
        iters = 0
    else:
        diag = mat.diagonal()
        row_abs = np.abs(mat).sum(axis=1).A1 - np.abs(diag)
        lower = float((diag - row_abs).min())
        sigma = lower - 0.1 * max(1.0, abs(lower))
        rng = np.random.default_rng(seed)
        v0 = rng.random(n)
        vals, vecs = eigsh(mat, k=k, sigma=sigma, which="LM", v0=v0, tol=tol)
        iters = -1   # not exposed by ARPACK
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    scale = max(1.0, float(np.abs(mat.diagonal()).max()))
    res = np.array([np.linalg.norm(mat @ vecs[:, i] - vals[i] * vecs[:, i])
                    for i in range(k)])
    if np.any(res > max(tol, 1e-12) * scale * 100):
        raise RuntimeError(f"eigensolve did not converge: residuals {res}")
    return EigenResult(vals, vecs if want_vectors else None, res, iters)


def lowest_eigenvector_positive(result: EigenResult) -> bool:
    """Perron-Frobenius check: the ground state has a fixed sign."""
    v = result.eigenvectors[:, 0]
    if v.sum() < 0:
        v = -v
    return bool(np.all(v > 0))


@njit(cache=True)
def _ldl_banded_inertia(ab, tiny):
    """In-place banded LDL^T; returns (#negative pivots, breakdown flag)."""
    b_plus_1, n = ab.shape
    b = b_plus_1 - 1
    neg = 0
    for j in range(n):
        dj = ab[0, j]
        if abs(dj) < tiny:
            return -1, True
        if dj < 0.0:
            neg += 1
        m = b if j + b < n else n - 1 - j
        for k in range(m):
            ljk = ab[1 + k, j] / dj
            col = j + 1 + k
            for i in range(m - k):
                ab[i, col] -= ljk * ab[1 + k + i, j]
    return neg, False


def _to_banded(mat: sp.csr_matrix) -> np.ndarray:
    """Lower banded storage: ab[k, j] = A[j + k, j]."""
    coo = mat.tocoo()
    mask = coo.row >= coo.col
    rows, cols, data = coo.row[mask], coo.col[mask], coo.data[mask]
    b = int((rows - cols).max()) if rows.size else 0
    n = mat.shape[0]
    ab = np.zeros((b + 1, n))
    ab[rows - cols, cols] = data
    return ab


def count_below(A, E: float, max_jitter: int = 5) -> CountResult:
    """#{eigenvalues of A < E} via Sylvester inertia of A - E I."""
    mat = _as_csr(A)
    n = mat.shape[0]
    ident = sp.identity(n, format="csr")
    jittered = False
    e = float(E)
    scale = max(1.0, float(np.abs(mat.diagonal()).max()))
    for attempt in range(max_jitter):
        ab = _to_banded((mat - e * ident).tocsr())
        neg, breakdown = _ldl_banded_inertia(ab, 1e-12 * scale)
        if not breakdown:
            return CountResult(float(E), int(neg), "inertia", jittered)
        e = e + 1e-12 * scale * (attempt + 1)
        jittered = True
    raise RuntimeError(f"LDL^T pivot breakdown persists near E={E}")


def dense_oracle(A) -> np.ndarray:
    """Full spectrum by dense symmetric eigendecomposition (test oracle)."""
    mat = _as_csr(A)
    if mat.shape[0] > _DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to dim <= {_DENSE_LIMIT}")
    return eigh(mat.toarray(), eigvals_only=True)
