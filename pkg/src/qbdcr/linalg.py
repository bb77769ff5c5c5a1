"""Dense and low-rank building blocks shared by the structured solvers.

Matrices are 2-d ndarrays (real unless a routine explicitly allows complex
input).  A low-rank block is stored as an SVD-like triple
``U @ diag(sigma) @ V.T`` with orthonormal ``U``, ``V`` and positive,
nonincreasing ``sigma``.  All truncation is relative: singular values are
kept while ``sigma_j > tol * sigma_1``, ties at the threshold are dropped.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

__all__ = [
    "FactorizationError",
    "SingularBlockError",
    "LowRankFactor",
    "as_matrix",
    "truncated_svd",
    "lowrank_add",
    "offdiag_singular_values",
    "default_split",
    "spectral_norm",
]

# relative floor (in units of machine epsilon times the input scale) below
# which singular values arising in factor arithmetic are treated as roundoff
ROUNDOFF_FLOOR = 64.0

_EPS = np.finfo(float).eps


class FactorizationError(np.linalg.LinAlgError):
    """An SVD or QR kernel failed to converge on otherwise valid input."""


class SingularBlockError(np.linalg.LinAlgError):
    """A (sub)matrix that must be inverted is numerically singular.

    ``location`` names the recursion path of the offending block, e.g.
    ``"root.11.22s"`` for the Schur complement met inside the upper-left
    child of the root.
    """

    def __init__(self, message, location="root"):
        super().__init__(message)
        self.location = location


def as_matrix(a, name="matrix"):
    """Validate and return `a` as a 2-d float ndarray with finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name}: expected a 2-d array, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name}: entries must be finite")
    return m


def _svd(a):
    # gesdd occasionally fails to converge; retry with the slower gesvd
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            u, s, vt = sla.svd(a, full_matrices=False, lapack_driver="gesvd")
            return u, s, vt
        except Exception as exc:
            raise FactorizationError(
                f"SVD did not converge on a {a.shape[0]}x{a.shape[1]} block"
            ) from exc


def _truncation_rank(sigma, tol, max_rank):
    """Number of singular values kept under the relative threshold."""
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    r = int(np.count_nonzero(sigma > tol * sigma[0]))
    if max_rank is not None:
        r = min(r, int(max_rank))
    return r


@dataclass(frozen=True)
class LowRankFactor:
    """Truncated SVD representation ``U @ diag(sigma) @ V.T`` of a block.

    Attributes
    ----------
    U : (m, r) ndarray with orthonormal columns
    sigma : (r,) ndarray, positive and nonincreasing
    V : (n, r) ndarray with orthonormal columns
    tol : relative truncation tolerance the factor was produced with
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    tol: float = 0.0

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2 or self.sigma.ndim != 1:
            raise ValueError("LowRankFactor: U, V must be 2-d and sigma 1-d")
        r = self.sigma.shape[0]
        if self.U.shape[1] != r or self.V.shape[1] != r:
            raise ValueError("LowRankFactor: inconsistent rank between U, sigma, V")
        if r > min(self.U.shape[0], self.V.shape[0]):
            raise ValueError("LowRankFactor: rank exceeds min(m, n)")
        if r and (np.any(self.sigma <= 0.0) or np.any(np.diff(self.sigma) > 0.0)):
            raise ValueError("LowRankFactor: sigma must be positive and nonincreasing")
        if self.tol < 0.0:
            raise ValueError("LowRankFactor: tol must be nonnegative")

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self):
        return self.sigma.shape[0]

    def to_dense(self):
        if self.rank == 0:
            return np.zeros(self.shape)
        return (self.U * self.sigma) @ self.V.T

    def scaled_u(self):
        """Left factor with the singular values absorbed, ``U @ diag(sigma)``."""
        return self.U * self.sigma

    def norm2(self):
        return float(self.sigma[0]) if self.rank else 0.0

    def validate(self, ortho_tol=1e-12):
        """Strict invariant check (orthonormality included); used by tests."""
        r = self.rank
        if r == 0:
            return
        for w in (self.U, self.V):
            gram = w.T @ w
            if np.max(np.abs(gram - np.eye(r))) > ortho_tol * max(1, w.shape[0]):
                raise ValueError("LowRankFactor: columns are not orthonormal")


def empty_factor(m, n, tol=0.0):
    return LowRankFactor(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)), tol)


def truncated_svd(a, tol, max_rank=None):
    """Compress a dense block into a :class:`LowRankFactor`.

    Parameters
    ----------
    a : (m, n) array_like
    tol : float
        Relative threshold; exactly the singular values with
        ``sigma_j > tol * sigma_1`` are kept (ties dropped).
    max_rank : int, optional
        Hard cap on the number of kept singular values.

    Returns
    -------
    LowRankFactor
        The reconstruction error satisfies
        ``||a - U diag(sigma) V.T||_2 <= max(tol * sigma_1, sigma_{r+1})``.
    """
    a = as_matrix(a)
    if tol < 0.0:
        raise ValueError("truncated_svd: tol must be nonnegative")
    if max_rank is not None and max_rank < 0:
        raise ValueError("truncated_svd: max_rank must be nonnegative")
    m, n = a.shape
    if m == 0 or n == 0 or not a.any():
        return empty_factor(m, n, tol)
    u, s, vt = _svd(a)
    r = _truncation_rank(s, tol, max_rank)
    return LowRankFactor(u[:, :r].copy(), s[:r].copy(), vt[:r].T.copy(), tol)


def compress_pair(x, y, tol, max_rank=None, floor_scale=0.0):
    """Recompress an outer-product pair ``x @ y.T`` into a LowRankFactor.

    `x`, `y` need not have orthonormal columns.  ``floor_scale`` gives the
    natural magnitude of the inputs; singular values at roundoff level
    relative to it are discarded even when `tol` alone would keep them,
    so that exact cancellations come out as rank zero.
    """
    m, n = x.shape[0], y.shape[0]
    if x.shape[1] != y.shape[1]:
        raise ValueError("compress_pair: column counts differ")
    if x.shape[1] == 0:
        return empty_factor(m, n, tol)
    qx, rx = np.linalg.qr(x)
    qy, ry = np.linalg.qr(y)
    uc, s, vct = _svd(rx @ ry.T)
    r = _truncation_rank(s, tol, max_rank)
    if floor_scale > 0.0:
        r = min(r, int(np.count_nonzero(s > ROUNDOFF_FLOOR * _EPS * floor_scale)))
    return LowRankFactor(qx @ uc[:, :r], s[:r].copy(), qy @ vct[:r].T, tol)


def lowrank_add(f, g, tol, max_rank=None):
    """Sum of two low-rank factors, recompressed at `tol`.

    The result satisfies the :func:`truncated_svd` contract relative to the
    exact sum; its rank never exceeds ``f.rank + g.rank``.  Singular values
    at roundoff level relative to the inputs are discarded, so ``f + (-f)``
    yields a rank-zero factor.
    """
    if f.shape != g.shape:
        raise ValueError(f"lowrank_add: shape mismatch {f.shape} vs {g.shape}")
    if f.rank == 0 and g.rank == 0:
        return empty_factor(*f.shape, tol)
    x = np.hstack([f.scaled_u(), g.scaled_u()])
    y = np.hstack([f.V, g.V])
    return compress_pair(x, y, tol, max_rank, floor_scale=max(f.norm2(), g.norm2()))


def lowrank_matmul(f, g, tol, max_rank=None):
    """Product of two low-rank factors as a factor truncated at `tol`."""
    if f.shape[1] != g.shape[0]:
        raise ValueError(f"lowrank_matmul: inner dimensions {f.shape} vs {g.shape}")
    if f.rank == 0 or g.rank == 0:
        return empty_factor(f.shape[0], g.shape[1], tol)
    core = (f.sigma[:, None] * (f.V.T @ g.U)) * g.sigma
    return compress_pair(f.U @ core, g.V, tol, max_rank,
                         floor_scale=f.norm2() * g.norm2())


def default_split(n):
    """Default off-diagonal probe: the largest south-western submatrix.

    Rows ``n//2 .. n-1`` against columns ``0 .. n//2 - 1`` (0-based), which
    for even `n` is the full lower-left quadrant touching the first
    subdiagonal.
    """
    return (n // 2, n // 2)


def offdiag_singular_values(a, split=None, side="lower"):
    """All singular values of an off-diagonal submatrix, nonincreasing.

    Parameters
    ----------
    a : (n, n) array_like
    split : (i, j) pair, optional
        For ``side="lower"`` the probed block is ``a[i:, :j]`` and must sit
        strictly below the diagonal (``0 < j <= i < n``); for
        ``side="upper"`` it is ``a[:i, j:]`` with ``0 < i <= j < n``.
        Defaults to :func:`default_split`.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("offdiag_singular_values: expected a square matrix")
    n = a.shape[0]
    if split is None:
        split = default_split(n)
    i, j = int(split[0]), int(split[1])
    if side == "lower":
        if not (0 < j <= i < n):
            raise ValueError(f"offdiag_singular_values: split {split} out of range "
                             f"for a lower block of a {n}x{n} matrix")
        block = a[i:, :j]
    elif side == "upper":
        if not (0 < i <= j < n):
            raise ValueError(f"offdiag_singular_values: split {split} out of range "
                             f"for an upper block of a {n}x{n} matrix")
        block = a[:i, j:]
    else:
        raise ValueError("offdiag_singular_values: side must be 'lower' or 'upper'")
    try:
        return np.linalg.svd(block, compute_uv=False)
    except np.linalg.LinAlgError:
        return sla.svdvals(block)


def spectral_norm(a, exact_below=384):
    """2-norm of `a`; exact for small blocks, Lanczos on big ones.

    The iterative estimate is deterministic (fixed start vector) and is
    inflated by 1e-9 relative so it can serve as an upper bound in decay
    envelopes.
    """
    a = np.asarray(a)
    if a.size == 0 or not a.any():
        return 0.0
    if min(a.shape) <= exact_below:
        s = np.linalg.svd(a, compute_uv=False)
        return float(s[0]) if s.size else 0.0
    v0 = np.ones(min(a.shape))
    v0 /= np.linalg.norm(v0)
    try:
        s = spla.svds(a, k=1, v0=v0, tol=1e-11, return_singular_vectors=False)
        return float(s[0]) * (1.0 + 1e-9)
    except Exception:
        return _power_norm(a)


def _power_norm(a, iters=300):
    n = a.shape[1]
    v = np.ones(n) + np.linspace(0.0, 1.0, n)
    v /= np.linalg.norm(v)
    ah = a.conj().T
    est = 0.0
    for _ in range(iters):
        w = a @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = ah @ (w / nw)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        if abs(nv - est) <= 1e-13 * nv:
            est = nv
            break
        est = nv
    return float(est) * (1.0 + 1e-6)
