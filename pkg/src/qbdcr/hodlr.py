"""HODLR-style hierarchical matrices with adaptive-rank arithmetic.

A square matrix is split recursively into a 2x2 block layout: diagonal
blocks recurse (dense below ``leaf_size``), off-diagonal blocks are stored
as truncated SVD factors.  The partition is fully determined by the matrix
size and the leaf size: the first diagonal block gets ``floor(n/2)`` rows.
Every operation recompresses the off-diagonal factors it produces at the
tolerance carried by an :class:`ArithmeticConfig`.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import (
    LowRankFactor,
    SingularBlockError,
    as_matrix,
    compress_pair,
    empty_factor,
    lowrank_add,
    lowrank_matmul,
    truncated_svd,
)

__all__ = [
    "ArithmeticConfig",
    "HMatrix",
    "build_from_dense",
    "to_dense",
    "h_add",
    "h_sub",
    "h_neg",
    "h_mul",
    "h_invert",
    "h_shift_identity",
    "h_apply",
    "h_apply_transpose",
    "h_offdiag_singular_values",
    "stored_scalars",
    "max_offdiag_rank",
    "rank_stats",
]


@dataclass(frozen=True)
class ArithmeticConfig:
    """Truncation tolerance, dense leaf size and optional hard rank cap."""

    tol: float = 1e-12
    leaf_size: int = 64
    max_rank: int | None = None

    def __post_init__(self):
        if self.tol < 0.0:
            raise ValueError("ArithmeticConfig: tol must be nonnegative")
        if self.leaf_size < 2:
            raise ValueError("ArithmeticConfig: leaf_size must be at least 2")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError("ArithmeticConfig: max_rank must be positive")


class HMatrix:
    """Node of the hierarchical format; use :func:`build_from_dense`."""

    __slots__ = ("n", "dense", "a11", "a22", "a21", "a12")

    def __init__(self, n, dense=None, a11=None, a22=None, a21=None, a12=None):
        self.n = n
        self.dense = dense
        self.a11 = a11
        self.a22 = a22
        self.a21 = a21
        self.a12 = a12
        if dense is None:
            if a11 is None or a22 is None or a21 is None or a12 is None:
                raise ValueError("HMatrix: node needs two children and two factors")
            if a11.n != n // 2 or a22.n != n - n // 2:
                raise ValueError("HMatrix: children do not match the n//2 split")
            if a21.shape != (n - n // 2, n // 2) or a12.shape != (n // 2, n - n // 2):
                raise ValueError("HMatrix: factor shapes do not match the split")

    @property
    def is_leaf(self):
        return self.dense is not None

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def split(self):
        return self.n // 2

    def depth(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.a11.depth(), self.a22.depth())

    def __repr__(self):
        return (f"HMatrix(n={self.n}, depth={self.depth()},"
                f" max_rank={max_offdiag_rank(self)})")


def build_from_dense(a, cfg):
    """Compress a dense square matrix into the hierarchical format.

    Per-block reconstruction error is at most ``tol * sigma_1(block)``;
    with ``tol=0`` the round trip is exact up to SVD roundoff.  The tree
    depth is ``ceil(log2(n / leaf_size))`` for ``n > leaf_size``, else 0.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"build_from_dense: matrix must be square, got {a.shape}")
    return _build(a, cfg)


def _build(a, cfg):
    n = a.shape[0]
    if n <= cfg.leaf_size:
        return HMatrix(n, dense=a.copy())
    n1 = n // 2
    return HMatrix(
        n,
        a11=_build(a[:n1, :n1], cfg),
        a22=_build(a[n1:, n1:], cfg),
        a21=truncated_svd(a[n1:, :n1], cfg.tol, cfg.max_rank),
        a12=truncated_svd(a[:n1, n1:], cfg.tol, cfg.max_rank),
    )


def to_dense(h):
    if h.is_leaf:
        return h.dense.copy()
    n1 = h.split
    out = np.empty((h.n, h.n))
    out[:n1, :n1] = to_dense(h.a11)
    out[n1:, n1:] = to_dense(h.a22)
    out[n1:, :n1] = h.a21.to_dense()
    out[:n1, n1:] = h.a12.to_dense()
    return out


def _same_structure(x, y):
    if x.n != y.n or x.is_leaf != y.is_leaf:
        return False
    if x.is_leaf:
        return True
    return _same_structure(x.a11, y.a11) and _same_structure(x.a22, y.a22)


def _build_like(a, like, cfg):
    if like.is_leaf:
        return HMatrix(like.n, dense=a.copy())
    n1 = like.split
    return HMatrix(
        like.n,
        a11=_build_like(a[:n1, :n1], like.a11, cfg),
        a22=_build_like(a[n1:, n1:], like.a22, cfg),
        a21=truncated_svd(a[n1:, :n1], cfg.tol, cfg.max_rank),
        a12=truncated_svd(a[:n1, n1:], cfg.tol, cfg.max_rank),
    )


def _conform(y, like, cfg, opname):
    if y.n != like.n:
        raise ValueError(f"{opname}: size mismatch {y.n} vs {like.n}")
    if _same_structure(y, like):
        return y
    return _build_like(to_dense(y), like, cfg)


# ------------------------------------------------------------- dense action

def _factor_apply(f, x):
    if f.rank == 0:
        return np.zeros((f.shape[0],) + x.shape[1:])
    return f.U @ (f.sigma[:, None] * (f.V.T @ x) if x.ndim == 2
                  else f.sigma * (f.V.T @ x))


def _factor_apply_t(f, x):
    if f.rank == 0:
        return np.zeros((f.shape[1],) + x.shape[1:])
    return f.V @ (f.sigma[:, None] * (f.U.T @ x) if x.ndim == 2
                  else f.sigma * (f.U.T @ x))


def h_apply(h, x):
    """Dense product ``H @ x`` for a vector or tall matrix `x`."""
    if h.is_leaf:
        return h.dense @ x
    n1 = h.split
    x1, x2 = x[:n1], x[n1:]
    y1 = h_apply(h.a11, x1) + _factor_apply(h.a12, x2)
    y2 = h_apply(h.a22, x2) + _factor_apply(h.a21, x1)
    return np.concatenate([y1, y2])


def h_apply_transpose(h, x):
    """Dense product ``H.T @ x``."""
    if h.is_leaf:
        return h.dense.T @ x
    n1 = h.split
    x1, x2 = x[:n1], x[n1:]
    y1 = h_apply_transpose(h.a11, x1) + _factor_apply_t(h.a21, x2)
    y2 = h_apply_transpose(h.a22, x2) + _factor_apply_t(h.a12, x1)
    return np.concatenate([y1, y2])


# -------------------------------------------------------- structured algebra

def h_neg(h):
    if h.is_leaf:
        return HMatrix(h.n, dense=-h.dense)
    return HMatrix(h.n, a11=h_neg(h.a11), a22=h_neg(h.a22),
                   a21=_neg_factor(h.a21), a12=_neg_factor(h.a12))


def _neg_factor(f):
    if f.rank == 0:
        return f
    return LowRankFactor(-f.U, f.sigma, f.V, f.tol)


def h_shift_identity(h, alpha):
    """``H + alpha * I`` (exact; only diagonal leaves change)."""
    if h.is_leaf:
        return HMatrix(h.n, dense=h.dense + alpha * np.eye(h.n))
    return HMatrix(h.n, a11=h_shift_identity(h.a11, alpha),
                   a22=h_shift_identity(h.a22, alpha),
                   a21=h.a21, a12=h.a12)


def h_add(x, y, cfg):
    """Structured sum with off-diagonal recompression at ``cfg.tol``."""
    y = _conform(y, x, cfg, "h_add")
    return _add(x, y, cfg)


def _add(x, y, cfg):
    if x.is_leaf:
        return HMatrix(x.n, dense=x.dense + y.dense)
    return HMatrix(
        x.n,
        a11=_add(x.a11, y.a11, cfg),
        a22=_add(x.a22, y.a22, cfg),
        a21=lowrank_add(x.a21, y.a21, cfg.tol, cfg.max_rank),
        a12=lowrank_add(x.a12, y.a12, cfg.tol, cfg.max_rank),
    )


def h_sub(x, y, cfg):
    return h_add(x, h_neg(y), cfg)


def _pair_scale(px, py):
    return float(np.linalg.norm(px) * np.linalg.norm(py))


def _append_pair(f, px, py, cfg):
    """Factor for ``f + px @ py.T`` recompressed at the config tolerance."""
    if px.shape[1] == 0:
        return f
    if f.rank == 0:
        return compress_pair(px, py, cfg.tol, cfg.max_rank,
                             floor_scale=_pair_scale(px, py))
    x = np.hstack([f.scaled_u(), px])
    y = np.hstack([f.V, py])
    return compress_pair(x, y, cfg.tol, cfg.max_rank,
                         floor_scale=max(f.norm2(), _pair_scale(px, py)))


def _add_pair(h, px, py, cfg):
    """``H + px @ py.T`` distributed over the tree."""
    if px.shape[1] == 0:
        return h
    if h.is_leaf:
        return HMatrix(h.n, dense=h.dense + px @ py.T)
    n1 = h.split
    return HMatrix(
        h.n,
        a11=_add_pair(h.a11, px[:n1], py[:n1], cfg),
        a22=_add_pair(h.a22, px[n1:], py[n1:], cfg),
        a21=_append_pair(h.a21, px[n1:], py[:n1], cfg),
        a12=_append_pair(h.a12, px[:n1], py[n1:], cfg),
    )


def _add_factor(h, f, cfg, sign=1.0):
    return _add_pair(h, sign * f.scaled_u(), f.V, cfg)


def _h_times_factor(h, f, cfg):
    """``H @ F`` as a recompressed factor."""
    if f.rank == 0:
        return empty_factor(h.n, f.shape[1], cfg.tol)
    return compress_pair(h_apply(h, f.scaled_u()), f.V, cfg.tol, cfg.max_rank)


def _factor_times_h(f, h, cfg):
    """``F @ H`` as a recompressed factor."""
    if f.rank == 0:
        return empty_factor(f.shape[0], h.n, cfg.tol)
    return compress_pair(f.scaled_u(), h_apply_transpose(h, f.V),
                         cfg.tol, cfg.max_rank)


def h_mul(x, y, cfg):
    """Structured product; every off-diagonal block is retruncated."""
    y = _conform(y, x, cfg, "h_mul")
    return _mul(x, y, cfg)


def _mul(x, y, cfg):
    if x.is_leaf:
        return HMatrix(x.n, dense=x.dense @ y.dense)
    c11 = _add_factor(_mul(x.a11, y.a11, cfg),
                      lowrank_matmul(x.a12, y.a21, cfg.tol, cfg.max_rank), cfg)
    c22 = _add_factor(_mul(x.a22, y.a22, cfg),
                      lowrank_matmul(x.a21, y.a12, cfg.tol, cfg.max_rank), cfg)
    c21 = lowrank_add(_factor_times_h(x.a21, y.a11, cfg),
                      _h_times_factor(x.a22, y.a21, cfg), cfg.tol, cfg.max_rank)
    c12 = lowrank_add(_h_times_factor(x.a11, y.a12, cfg),
                      _factor_times_h(x.a12, y.a22, cfg), cfg.tol, cfg.max_rank)
    return HMatrix(x.n, a11=c11, a22=c22, a21=c21, a12=c12)


def h_invert(h, cfg, _location="root"):
    """Structured inverse via the Schur complement of the leading block.

    Raises :class:`SingularBlockError` naming the recursion path when a
    diagonal leaf or a Schur complement is numerically singular.
    """
    if h.is_leaf:
        try:
            return HMatrix(h.n, dense=np.linalg.inv(h.dense))
        except np.linalg.LinAlgError as exc:
            raise SingularBlockError(
                f"singular diagonal leaf at {_location}", _location) from exc
    x11 = h_invert(h.a11, cfg, _location + ".11")
    t21 = _factor_times_h(h.a21, x11, cfg)          # A21 A11^{-1}
    p = lowrank_matmul(t21, h.a12, cfg.tol, cfg.max_rank)
    schur = _add_factor(h.a22, p, cfg, sign=-1.0)   # A22 - A21 A11^{-1} A12
    x22 = h_invert(schur, cfg, _location + ".22s")
    q12 = _h_times_factor(x11, h.a12, cfg)          # A11^{-1} A12
    b21 = _neg_factor(_h_times_factor(x22, t21, cfg))
    b12 = _neg_factor(_factor_times_h(q12, x22, cfg))
    corr = lowrank_matmul(q12, _h_times_factor(x22, t21, cfg),
                          cfg.tol, cfg.max_rank)
    b11 = _add_factor(x11, corr, cfg)
    return HMatrix(h.n, a11=b11, a22=x22, a21=b21, a12=b12)


# ------------------------------------------------------------ introspection

def h_offdiag_singular_values(h, level):
    """Stored singular values of the off-diagonal factors at one tree level.

    Returns a list of 1-d arrays ordered top-left to bottom-right; at each
    node the lower factor comes before the upper one.  A leaf-only tree has
    no off-diagonal blocks, so level 0 yields an empty list.
    """
    depth = h.depth()
    if level < 0 or (level >= depth and not (level == 0 and depth == 0)):
        raise ValueError(f"h_offdiag_singular_values: level {level} out of range "
                         f"for a tree of depth {depth}")
    out = []
    _collect_level(h, level, out)
    return out


def _collect_level(h, remaining, out):
    if h.is_leaf:
        return
    if remaining == 0:
        out.append(h.a21.sigma.copy())
        out.append(h.a12.sigma.copy())
        return
    _collect_level(h.a11, remaining - 1, out)
    _collect_level(h.a22, remaining - 1, out)


def stored_scalars(h):
    """Number of floats held by the representation (dense + factor storage)."""
    if h.is_leaf:
        return h.dense.size
    own = (h.a21.U.size + h.a21.sigma.size + h.a21.V.size
           + h.a12.U.size + h.a12.sigma.size + h.a12.V.size)
    return own + stored_scalars(h.a11) + stored_scalars(h.a22)


def max_offdiag_rank(h):
    if h.is_leaf:
        return 0
    return max(h.a21.rank, h.a12.rank,
               max_offdiag_rank(h.a11), max_offdiag_rank(h.a22))


def rank_stats(h):
    """Per-level rank and storage summary (JSON-friendly)."""
    levels = []
    for lev in range(max(h.depth(), 1)):
        if lev >= h.depth():
            break
        sigmas = h_offdiag_singular_values(h, lev)
        levels.append({
            "level": lev,
            "blocks": len(sigmas),
            "max_rank": max((len(s) for s in sigmas), default=0),
        })
    return {
        "n": h.n,
        "depth": h.depth(),
        "stored_scalars": int(stored_scalars(h)),
        "max_rank": int(max_offdiag_rank(h)),
        "levels": levels,
    }
