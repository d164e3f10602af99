"""Dense linear-algebra primitives: matrix exponential, numerical rank, spans.

All matrices are plain float ``numpy`` arrays in row-major layout.  Sizes in
this toolkit are tiny (state dimension <= ~10), so everything is dense and
there is no sparse path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError

# Default relative SVD cutoff, scaled by max(rows, cols) at the call site.
RANK_TOL = 1e-10


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a 2-d float array, validating finiteness."""
    M = np.asarray(x, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-d array, got shape {M.shape}")
    if M.size and not np.all(np.isfinite(M)):
        raise DimensionError(f"{name}: entries must be finite")
    return M


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"{name}: expected length {dim}, got {v.shape[0]}")
    if v.size and not np.all(np.isfinite(v)):
        raise DimensionError(f"{name}: entries must be finite")
    return v


def expm(M) -> np.ndarray:
    """Matrix exponential e^M by scaling-and-squaring with a Pade kernel."""
    M = as_matrix(M, "expm input")
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"expm input must be square, got shape {M.shape}")
    if M.shape[0] == 1:
        return np.array([[np.exp(M[0, 0])]])
    return scipy.linalg.expm(M)


def expm_integral(A, t: float) -> np.ndarray:
    """Integral of the propagator, int_0^t e^{sA} ds.

    Works for singular A (the series t * sum (tA)^j / (j+1)! is what the
    block-augmentation below evaluates); equals A^{-1}(e^{tA} - I) when A is
    invertible.
    """
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError("expm_integral needs a square A")
    m = A.shape[0]
    blk = np.zeros((2 * m, 2 * m))
    blk[:m, :m] = t * A
    blk[:m, m:] = t * np.eye(m)
    return scipy.linalg.expm(blk)[:m, m:]


def rank_and_margin(M, tol: float | None = None) -> tuple[int, float]:
    """Numerical rank plus near-degeneracy margin.

    Rank counts singular values above ``tol * sigma_max``; the margin is the
    smallest retained singular value divided by sigma_max (1.0 for the zero
    or empty matrix, where nothing is retained).
    """
    M = as_matrix(M, "rank input")
    if M.size == 0:
        return 0, 1.0
    if tol is None:
        tol = RANK_TOL * max(M.shape)
    s = np.linalg.svd(M, compute_uv=False)
    smax = s[0]
    if smax == 0.0:
        return 0, 1.0
    keep = s > tol * smax
    rank = int(np.count_nonzero(keep))
    margin = float(s[keep][-1] / smax) if rank else 1.0
    return rank, margin


def numerical_rank(M, tol: float | None = None) -> int:
    """Rank of ``M`` as the count of singular values above ``tol * sigma_max``."""
    return rank_and_margin(M, tol)[0]


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^d held as rows of an orthonormal basis."""

    ambient_dim: int
    basis: np.ndarray  # shape (dim, ambient_dim); zero rows for the {0} space

    def __post_init__(self):
        B = as_matrix(self.basis, "basis")
        if B.shape[1] != self.ambient_dim and B.size:
            raise DimensionError("basis vectors do not live in the ambient space")
        if B.shape[0] > self.ambient_dim:
            raise DimensionError("more basis vectors than ambient dimension")
        if B.size:
            gram = B @ B.T
            if not np.allclose(gram, np.eye(B.shape[0]), atol=1e-10):
                raise DimensionError("basis is not orthonormal within 1e-10")
        object.__setattr__(self, "basis", B.reshape(-1, self.ambient_dim))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((self.ambient_dim, self.ambient_dim))
        return self.basis.T @ self.basis

    def contains(self, v, tol: float = 1e-9) -> bool:
        v = as_vector(v, self.ambient_dim)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return True
        resid = v - self.projector() @ v
        return bool(np.linalg.norm(resid) <= tol * nv)

    @staticmethod
    def zero(ambient_dim: int) -> "Subspace":
        return Subspace(ambient_dim, np.zeros((0, ambient_dim)))

    @staticmethod
    def full(ambient_dim: int) -> "Subspace":
        return Subspace(ambient_dim, np.eye(ambient_dim))


def span_of(vectors, ambient_dim: int | None = None, tol: float | None = None) -> Subspace:
    """Orthonormal basis of the linear span of the given vectors."""
    vecs = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
    if not vecs:
        if ambient_dim is None:
            raise DimensionError("span_of: empty input needs an explicit ambient_dim")
        return Subspace.zero(ambient_dim)
    d = vecs[0].shape[0]
    if any(v.shape[0] != d for v in vecs):
        raise DimensionError("span_of: vectors have mixed dimensions")
    if ambient_dim is not None and ambient_dim != d:
        raise DimensionError("span_of: ambient_dim does not match the vectors")
    M = np.vstack(vecs)
    if tol is None:
        tol = RANK_TOL * max(M.shape)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return Subspace.zero(d)
    r = int(np.count_nonzero(s > tol * s[0]))
    if r == 0:
        return Subspace.zero(d)
    return Subspace(d, Vt[:r])


def psd_sqrt(S) -> np.ndarray:
    """Symmetric square root of a PSD matrix, clipping round-off negatives."""
    S = as_matrix(S, "S")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    w = np.clip(w, 0.0, None)
    return V @ np.diag(np.sqrt(w)) @ V.T


class Propagator:
    """Vectorized evaluation of e^{sA} over many s values.

    Uses the eigendecomposition when A is diagonalizable with a
    well-conditioned eigenbasis, else falls back to per-s scaling-and-squaring.
    """

    def __init__(self, A):
        self.A = as_matrix(A, "A")
        if self.A.shape[0] != self.A.shape[1]:
            raise DimensionError("Propagator needs a square A")
        self.m = self.A.shape[0]
        self._diag = None
        if self.m == 1:
            self._diag = None  # scalar fast path handled in matrices()
        else:
            w, V = np.linalg.eig(self.A)
            if np.linalg.cond(V) < 1e8:
                self._diag = (w, V, np.linalg.inv(V))

    def matrices(self, s) -> np.ndarray:
        """Stack of e^{s_i A}, shape (len(s), m, m)."""
        s = np.asarray(s, dtype=float).reshape(-1)
        if self.m == 1:
            return np.exp(s * self.A[0, 0]).reshape(-1, 1, 1)
        if self._diag is not None:
            w, V, Vinv = self._diag
            E = np.exp(np.multiply.outer(s, w))  # (n, m)
            out = np.einsum("ij,nj,jk->nik", V, E, Vinv)
            return np.ascontiguousarray(out.real)
        return np.array([scipy.linalg.expm(si * self.A) for si in s])

    def apply(self, s, U) -> np.ndarray:
        """e^{s_i A} @ U for each s_i; U is (m,) or (m, p)."""
        U = np.asarray(U, dtype=float)
        mats = self.matrices(s)
        return mats @ U
