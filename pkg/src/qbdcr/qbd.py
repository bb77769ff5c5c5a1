"""Level-independent QBD transition structure and its matrix Laurent symbol.

A problem instance is the block triple (Am1, A0, A1) of down / local / up
transition probabilities of a quasi-birth-death chain: all blocks
nonnegative with ``Am1 + A0 + A1`` row stochastic.  The associated Laurent
symbol is ``A(z) = z^{-1} Am1 + A0 + z A1`` and the solver works with
``phi(z) = I - A(z)``, whose inverse ``psi`` satisfies the even-part
halving recursion that cyclic reduction realizes on the coefficients.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .linalg import SingularBlockError, as_matrix

__all__ = [
    "STOCHASTIC_TOL",
    "NULL_RECURRENCE_TOL",
    "LAURENT_SAMPLE_POINTS",
    "QbdProblem",
    "SpectralInfo",
    "random_qbd",
    "dense_blocks",
    "evaluate_symbol",
    "evaluate_phi",
    "evaluate_psi",
    "spectral_annulus",
    "coefficients_from_samples",
]

STOCHASTIC_TOL = 1e-13
NULL_RECURRENCE_TOL = 1e-6

# primitive 6th root of unity used by the coefficient-recovery formulas
_XI = np.exp(1j * np.pi / 3.0)

# sample abscissas expected by coefficients_from_samples, in order
LAURENT_SAMPLE_POINTS = (1j, -1j, -1.0 + 0.0j, _XI, _XI ** 5)


def _band_of(a):
    nz = np.nonzero(a)
    if nz[0].size == 0:
        return 0
    return int(np.max(np.abs(nz[0] - nz[1])))


@dataclass(frozen=True)
class QbdProblem:
    """Validated block triple of a level-independent QBD chain.

    Parameters
    ----------
    am1, a0, a1 : (m, m) ndarrays
        Down, local and up transition blocks.
    band : int, optional
        Declared half-bandwidth; checked against the actual sparsity.
        Defaults to the widest bandwidth found in the blocks.
    qs_rank : int, optional
        Declared quasiseparable rank of the blocks; defaults to `band`.
    identity_shifted : bool
        When True the stored `a0` is ``C0 - I`` for a stochastic triple
        (the alternative packaging where ``am1 + a0 + I + a1`` is
        stochastic); :meth:`standard_form` undoes the shift.
    """

    am1: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    band: int | None = None
    qs_rank: int | None = None
    identity_shifted: bool = False

    def __post_init__(self):
        am1 = as_matrix(self.am1, "am1")
        a0 = as_matrix(self.a0, "a0")
        a1 = as_matrix(self.a1, "a1")
        m = am1.shape[0]
        for name, b in (("am1", am1), ("a0", a0), ("a1", a1)):
            if b.shape != (m, m):
                raise ValueError(f"QbdProblem: {name} must be {m}x{m}, got {b.shape}")
        object.__setattr__(self, "am1", am1)
        object.__setattr__(self, "a0", a0)
        object.__setattr__(self, "a1", a1)
        a0_eff = a0 + np.eye(m) if self.identity_shifted else a0
        for name, b in (("am1", am1), ("a0", a0_eff), ("a1", a1)):
            if b.size and b.min() < 0.0:
                raise ValueError(f"QbdProblem: {name} has negative entries")
        rowsums = am1.sum(axis=1) + a0_eff.sum(axis=1) + a1.sum(axis=1)
        if np.max(np.abs(rowsums - 1.0)) > STOCHASTIC_TOL:
            raise ValueError("QbdProblem: am1 + a0 + a1 is not row stochastic "
                             f"(max defect {np.max(np.abs(rowsums - 1.0)):.3e})")
        actual = max(_band_of(am1), _band_of(a0_eff), _band_of(a1))
        if self.band is None:
            object.__setattr__(self, "band", actual)
        elif self.band < actual:
            raise ValueError(f"QbdProblem: declared band {self.band} smaller than "
                             f"actual half-bandwidth {actual}")
        if self.qs_rank is None:
            object.__setattr__(self, "qs_rank", self.band)
        elif self.qs_rank < 0:
            raise ValueError("QbdProblem: qs_rank must be nonnegative")

    @property
    def m(self):
        return self.am1.shape[0]

    @property
    def blocks(self):
        return (self.am1, self.a0, self.a1)

    def standard_form(self):
        """The sum-stochastic packaging (a no-op unless identity_shifted)."""
        if not self.identity_shifted:
            return self
        return QbdProblem(self.am1, self.a0 + np.eye(self.m), self.a1,
                          band=self.band, qs_rank=self.qs_rank)


def random_qbd(m, band=1, seed=0, identity_shifted=False):
    """Random banded QBD instance, reproducible for a given seed.

    Entries are uniform on [0, 1) inside the band and the three blocks are
    jointly row-rescaled so their sum is exactly row stochastic.  With
    `identity_shifted` the diagonal block is returned shifted by ``-I``
    (so that ``am1 + a0 + I + a1`` is the stochastic sum).
    """
    if m < 1 or band < 0 or band >= m:
        raise ValueError(f"random_qbd: need 1 <= band + 1 <= m, got m={m}, band={band}")
    rng = np.random.default_rng(seed)
    offsets = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    mask = offsets <= band
    blocks = [rng.random((m, m)) * mask for _ in range(3)]
    scale = blocks[0].sum(axis=1) + blocks[1].sum(axis=1) + blocks[2].sum(axis=1)
    am1, a0, a1 = (b / scale[:, None] for b in blocks)
    if identity_shifted:
        a0 = a0 - np.eye(m)
    return QbdProblem(am1, a0, a1, band=band, identity_shifted=identity_shifted)


def dense_blocks(obj):
    """Extract the dense (am1, a0, a1) triple from a problem, an iteration
    state (whatever the backend), or a plain 3-tuple."""
    if isinstance(obj, QbdProblem):
        p = obj.standard_form()
        return p.am1, p.a0, p.a1
    if hasattr(obj, "am1") and hasattr(obj, "a0") and hasattr(obj, "a1"):
        parts = (obj.am1, obj.a0, obj.a1)
    else:
        parts = tuple(obj)
        if len(parts) != 3:
            raise TypeError("dense_blocks: expected a block triple")
    out = []
    for b in parts:
        if hasattr(b, "is_leaf"):  # hierarchical block
            from .hodlr import to_dense
            out.append(to_dense(b))
        else:
            out.append(np.asarray(b))
    return tuple(out)


def evaluate_symbol(obj, z):
    """Laurent symbol ``A(z) = z^{-1} am1 + a0 + z a1``."""
    if z == 0:
        raise ValueError("evaluate_symbol: z must be nonzero")
    am1, a0, a1 = dense_blocks(obj)
    return am1 / z + a0 + z * a1


def evaluate_phi(obj, z):
    """``phi(z) = I - A(z) = -z^{-1} am1 + (I - a0) - z a1``."""
    a = evaluate_symbol(obj, z)
    return np.eye(a.shape[0]) - a


def evaluate_psi(obj, z):
    """``psi(z) = phi(z)^{-1}``; raises when phi(z) is numerically singular.

    Singularity is decided from the singular values (relative smallest
    below 1e-14) because the LU kernel only reports exactly-zero pivots.
    """
    phi = evaluate_phi(obj, z)
    s = np.linalg.svd(phi, compute_uv=False)
    if s.size and (s[-1] <= 1e-14 * s[0] or s[0] == 0.0):
        raise SingularBlockError(f"phi(z) is singular at z = {z}",
                                 location=f"phi({z})")
    try:
        return np.linalg.inv(phi)
    except np.linalg.LinAlgError as exc:
        raise SingularBlockError(f"phi(z) is singular at z = {z}",
                                 location=f"phi({z})") from exc


@dataclass(frozen=True)
class SpectralInfo:
    """Root layout of ``det(am1 + z (a0 - I) + z^2 a1)`` and the implied
    annulus and chain classification."""

    roots: np.ndarray            # 2m roots sorted by modulus, inf last
    moduli: np.ndarray
    lambda_m: float
    lambda_m1: float
    t: float                     # annulus ratio sqrt(lambda_m1 / lambda_m)
    theta: float                 # annulus center sqrt(lambda_m * lambda_m1)
    chain_class: str             # positive_recurrent | null_recurrent | transient
    m: int

    def to_dict(self):
        return {
            "m": self.m,
            "lambda_m": self.lambda_m,
            "lambda_m1": self.lambda_m1,
            "t": self.t,
            "theta": self.theta,
            "chain_class": self.chain_class,
            "roots": [[float(np.real(r)), float(np.imag(r))] for r in self.roots],
        }


def spectral_annulus(p):
    """Classify a QBD instance from the roots of its quadratic pencil.

    The pencil ``am1 + z (a0 - I) + z^2 a1`` is linearized with the second
    companion form and handed to the QZ solver; eigenvalues at infinity
    (rank-deficient a1) are kept, with modulus ``inf``, sorted last.

    Classification thresholds sit at ``NULL_RECURRENCE_TOL``: both central
    moduli within it of 1 means null recurrent; ``lambda_m ~ 1 <
    lambda_{m+1}`` positive recurrent; ``lambda_m < 1 ~ lambda_{m+1}``
    transient.
    """
    am1, a0, a1 = dense_blocks(p)
    m = am1.shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    lhs = np.block([[-(a0 - eye), eye], [-am1, zero]])
    rhs = np.block([[a1, zero], [zero, eye]])
    alpha, beta = sla.eig(lhs, rhs, right=False, homogeneous_eigvals=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        moduli = np.abs(alpha) / np.abs(beta)
    moduli = np.where(np.abs(beta) == 0.0, np.inf, moduli)
    moduli = np.where(np.isnan(moduli), np.inf, moduli)
    finite = np.abs(beta) > 0.0
    roots = np.full(2 * m, np.inf + 0.0j)
    roots[finite] = alpha[finite] / beta[finite]
    order = np.lexsort((np.angle(np.where(finite, roots, 0.0)), moduli))
    roots, moduli = roots[order], moduli[order]
    lam_m, lam_m1 = float(moduli[m - 1]), float(moduli[m])

    tol = NULL_RECURRENCE_TOL
    near_m, near_m1 = abs(lam_m - 1.0) < tol, abs(lam_m1 - 1.0) < tol
    if near_m and near_m1:
        chain_class = "null_recurrent"
    elif near_m and lam_m1 > 1.0 + tol:
        chain_class = "positive_recurrent"
    elif near_m1 and lam_m < 1.0 - tol:
        chain_class = "transient"
    else:
        raise ValueError("spectral_annulus: central root moduli "
                         f"({lam_m:.8g}, {lam_m1:.8g}) are inconsistent with an "
                         "irreducible QBD (neither equals 1)")
    t = float(np.sqrt(lam_m1 / lam_m)) if np.isfinite(lam_m1) else np.inf
    theta = float(np.sqrt(lam_m * lam_m1)) if np.isfinite(lam_m1) else np.inf
    return SpectralInfo(roots=roots, moduli=moduli, lambda_m=lam_m,
                        lambda_m1=lam_m1, t=t, theta=theta,
                        chain_class=chain_class, m=m)


def coefficients_from_samples(samples):
    """Recover (am1, a0, a1) from symbol values at the five fixed points.

    `samples` holds ``A(z)`` for z in :data:`LAURENT_SAMPLE_POINTS`, i.e.
    (i, -i, -1, xi, xi^5) with xi the primitive 6th root of unity.  The
    even coefficient comes from the two-point average at +-i, the odd ones
    from the xi-weighted three-point combinations; real inputs give real
    output (roundoff-level imaginary parts are discarded).
    """
    if len(samples) != 5:
        raise ValueError("coefficients_from_samples: expected 5 samples "
                         "(at i, -i, -1, xi, xi^5)")
    s_i, s_mi, s_m1, s_xi, s_xi5 = (np.asarray(s) for s in samples)
    shape = s_i.shape
    for s in (s_mi, s_m1, s_xi, s_xi5):
        if s.shape != shape:
            raise ValueError("coefficients_from_samples: sample shapes differ")
    xi = _XI
    a0 = (s_i + s_mi) / 2.0
    am1 = (xi * s_xi + xi ** 5 * s_xi5 - s_m1) / 3.0
    a1 = (xi ** 5 * s_xi + xi * s_xi5 - s_m1) / 3.0
    return tuple(np.real_if_close(c, tol=1000) for c in (am1, a0, a1))
