import numpy as np
import pytest
from numpy.testing import assert_allclose

from qbdcr.linalg import SingularBlockError
from qbdcr.qbd import (
    LAURENT_SAMPLE_POINTS,
    QbdProblem,
    coefficients_from_samples,
    evaluate_phi,
    evaluate_psi,
    evaluate_symbol,
    random_qbd,
    spectral_annulus,
)


def _scalar(am1, a0, a1, **kw):
    return QbdProblem(np.array([[am1]]), np.array([[a0]]), np.array([[a1]]), **kw)


# -------------------------------------------------------------------- problem

def test_random_qbd_is_valid_and_banded():
    p = random_qbd(m=100, band=1, seed=0)
    rowsums = p.am1.sum(1) + p.a0.sum(1) + p.a1.sum(1)
    assert np.max(np.abs(rowsums - 1.0)) <= 1e-13
    assert min(p.am1.min(), p.a0.min(), p.a1.min()) >= 0.0
    assert p.band == 1
    assert p.qs_rank == 1
    for b in p.blocks:
        i, j = np.nonzero(b)
        assert np.max(np.abs(i - j)) <= 1


def test_random_qbd_is_deterministic():
    p = random_qbd(m=40, band=3, seed=123)
    q = random_qbd(m=40, band=3, seed=123)
    for a, b in zip(p.blocks, q.blocks):
        assert np.array_equal(a, b)
    r = random_qbd(m=40, band=3, seed=124)
    assert not np.array_equal(p.a0, r.a0)


def test_random_qbd_rejects_bad_arguments():
    with pytest.raises(ValueError):
        random_qbd(m=5, band=5, seed=0)
    with pytest.raises(ValueError):
        random_qbd(m=0, band=0, seed=0)


def test_problem_validation():
    with pytest.raises(ValueError):  # not stochastic
        _scalar(0.3, 0.3, 0.3)
    with pytest.raises(ValueError):  # negative entry
        _scalar(-0.1, 0.7, 0.4)
    with pytest.raises(ValueError):  # declared band below actual
        m = np.full((3, 3), 1.0 / 9.0)
        QbdProblem(m, m, m, band=1)
    with pytest.raises(ValueError):  # shape mismatch
        QbdProblem(np.eye(2) / 2, np.eye(3) / 3, np.eye(2) / 4)
    p = QbdProblem(np.full((3, 3), 1.0 / 9.0), np.full((3, 3), 1.0 / 9.0),
                   np.full((3, 3), 1.0 / 9.0), band=2)
    assert p.band == 2 and p.m == 3


def test_identity_shifted_packaging():
    p = random_qbd(m=20, band=1, seed=7, identity_shifted=True)
    # returned blocks satisfy: am1 + a0 + I + a1 row stochastic
    rowsums = p.am1.sum(1) + p.a0.sum(1) + p.a1.sum(1) + 1.0
    assert np.max(np.abs(rowsums - 1.0)) <= 1e-13
    assert p.a0.diagonal().min() >= -1.0
    q = p.standard_form()
    assert not q.identity_shifted
    assert_allclose(q.a0, p.a0 + np.eye(20), atol=0)
    base = random_qbd(m=20, band=1, seed=7)
    assert_allclose(q.a0, base.a0, atol=0)


# --------------------------------------------------------------- phi and psi

def test_phi_is_singular_at_one_for_stochastic_input():
    p = random_qbd(m=30, band=2, seed=1)
    phi1 = evaluate_phi(p, 1.0)
    assert_allclose(phi1 @ np.ones(30), np.zeros(30), atol=1e-13)
    with pytest.raises(SingularBlockError):
        evaluate_psi(p, 1.0)


def test_phi_symbol_relation_and_conjugate_symmetry():
    p = random_qbd(m=12, band=1, seed=2)
    z = np.exp(0.73j)
    assert_allclose(evaluate_phi(p, z), np.eye(12) - evaluate_symbol(p, z),
                    atol=1e-15)
    assert_allclose(evaluate_phi(p, np.conj(z)), np.conj(evaluate_phi(p, z)),
                    atol=1e-15)
    with pytest.raises(ValueError):
        evaluate_phi(p, 0.0)


def test_psi_inverts_phi():
    p = random_qbd(m=15, band=1, seed=3)
    z = 0.8 * np.exp(1.1j)
    prod = evaluate_psi(p, z) @ evaluate_phi(p, z)
    assert_allclose(prod, np.eye(15), atol=1e-11)


# ----------------------------------------------------------- spectral layout

def test_scalar_null_recurrent_annulus():
    # pencil 0.3 - 0.6 z + 0.3 z^2 has the double root z = 1
    si = spectral_annulus(_scalar(0.3, 0.4, 0.3))
    assert si.chain_class == "null_recurrent"
    assert_allclose([si.lambda_m, si.lambda_m1], [1.0, 1.0], atol=1e-8)
    assert_allclose(si.t, 1.0, atol=1e-7)
    assert_allclose(si.theta, 1.0, atol=1e-7)


def test_scalar_transient_annulus():
    # roots of 0.2 - 0.6 z + 0.4 z^2: z = 0.5 and z = 1 (up drift escapes)
    si = spectral_annulus(_scalar(0.2, 0.4, 0.4))
    assert si.chain_class == "transient"
    assert_allclose([si.lambda_m, si.lambda_m1], [0.5, 1.0], atol=1e-12)
    assert_allclose(si.t, np.sqrt(2.0), rtol=1e-12)


def test_scalar_positive_recurrent_annulus():
    # roots of 0.4 - 0.6 z + 0.2 z^2: z = 1 and z = 2 (down drift)
    si = spectral_annulus(_scalar(0.4, 0.4, 0.2))
    assert si.chain_class == "positive_recurrent"
    assert_allclose([si.lambda_m, si.lambda_m1], [1.0, 2.0], atol=1e-12)
    assert_allclose(si.theta, np.sqrt(2.0), rtol=1e-12)


def test_rank_deficient_up_block_gives_infinite_roots():
    si = spectral_annulus(_scalar(0.5, 0.5, 0.0))
    assert si.moduli[-1] == np.inf
    assert si.lambda_m == pytest.approx(1.0)
    assert si.lambda_m1 == np.inf
    assert si.chain_class == "positive_recurrent"
    assert list(si.moduli) == sorted(si.moduli)


def test_finite_roots_annihilate_the_pencil():
    p = random_qbd(m=6, band=2, seed=4)
    si = spectral_annulus(p)
    assert si.roots.shape == (12,)
    for z in si.roots[np.isfinite(si.moduli)]:
        if abs(z) < 1e-12:
            continue
        q = p.am1 + z * (p.a0 - np.eye(6)) + z * z * p.a1
        smin = np.linalg.svd(q, compute_uv=False)[-1]
        assert smin <= 1e-8 * max(1.0, abs(z) ** 2)


@pytest.mark.parametrize("seed", range(12))
def test_one_central_modulus_is_unity(seed):
    p = random_qbd(m=14, band=1, seed=seed)
    si = spectral_annulus(p)
    near = [abs(si.lambda_m - 1.0) < 1e-8, abs(si.lambda_m1 - 1.0) < 1e-8]
    assert any(near)
    assert si.lambda_m <= si.lambda_m1 + 1e-12
    assert si.t >= 1.0 - 1e-10
    # sum of blocks is stochastic, spectral radius one
    rho = np.max(np.abs(np.linalg.eigvals(p.am1 + p.a0 + p.a1)))
    assert_allclose(rho, 1.0, atol=1e-10)


def test_spectral_annulus_rejects_non_markovian_layout():
    # substochastic triple: no root modulus equals 1
    p = random_qbd(m=8, band=1, seed=5)
    shrunk = (0.8 * p.am1, 0.8 * p.a0, 0.8 * p.a1)
    with pytest.raises(ValueError):
        spectral_annulus(shrunk)


# ---------------------------------------------------- coefficient recovery

def test_coefficient_recovery_roundtrip():
    p = random_qbd(m=9, band=2, seed=6)
    samples = [evaluate_symbol(p, z) for z in LAURENT_SAMPLE_POINTS]
    am1, a0, a1 = coefficients_from_samples(samples)
    assert not np.iscomplexobj(am1)
    assert_allclose(am1, p.am1, atol=1e-13)
    assert_allclose(a0, p.a0, atol=1e-13)
    assert_allclose(a1, p.a1, atol=1e-13)


def test_coefficient_recovery_identity_blocks():
    eye = np.eye(4)
    blocks = (eye / 4, eye / 2, eye / 4)
    samples = [evaluate_symbol(blocks, z) for z in LAURENT_SAMPLE_POINTS]
    am1, a0, a1 = coefficients_from_samples(samples)
    assert_allclose(am1, eye / 4, atol=1e-14)
    assert_allclose(a0, eye / 2, atol=1e-14)
    assert_allclose(a1, eye / 4, atol=1e-14)


def test_coefficient_recovery_rejects_bad_samples():
    with pytest.raises(ValueError):
        coefficients_from_samples([np.eye(2)] * 4)
    with pytest.raises(ValueError):
        coefficients_from_samples([np.eye(2)] * 4 + [np.eye(3)])
