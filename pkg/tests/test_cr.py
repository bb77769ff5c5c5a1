import numpy as np
import pytest
from numpy.testing import assert_allclose

from qbdcr.cr import (
    CrState,
    DenseBackend,
    HodlrBackend,
    cr_solve_G,
    cr_solve_block_tridiag,
    cr_step,
    get_backend,
    init_state,
    residual_G,
)
from qbdcr.hodlr import ArithmeticConfig, to_dense
from qbdcr.linalg import SingularBlockError
from qbdcr.qbd import random_qbd, spectral_annulus

from _oracles import assemble_block_tridiag, fixed_point_g, scalar_min_root


def _scalar_state(am1, a0, a1, backend=None):
    be = backend or DenseBackend()
    return init_state((np.array([[am1]]), np.array([[a0]]), np.array([[a1]])), be), be


# ------------------------------------------------------------------ one step

def test_scalar_step_matches_hand_values():
    # exact-fraction oracle for (0.3, 0.4, 0.3):
    # S = -5/3, A1' = Am1' = 3/20, A0' = 7/10, Ahat' = -9/20
    state, be = _scalar_state(0.3, 0.4, 0.3)
    assert state.a0hat[0, 0] == pytest.approx(-0.6, abs=1e-15)
    nxt = cr_step(state, be)
    assert nxt.h == 1
    assert nxt.a1[0, 0] == pytest.approx(0.15, abs=1e-15)
    assert nxt.am1[0, 0] == pytest.approx(0.15, abs=1e-15)
    assert nxt.a0[0, 0] == pytest.approx(0.70, abs=1e-15)
    assert nxt.a0hat[0, 0] == pytest.approx(-0.45, abs=1e-15)


def test_step_requires_valid_state():
    with pytest.raises(ValueError):
        CrState(None, None, None, None, h=-1)


def test_singular_pivot_raises_with_location():
    # a0 = I makes the pivot a0 - I exactly singular
    state, be = _scalar_state(0.0, 1.0, 0.0)
    with pytest.raises(SingularBlockError) as err:
        cr_step(state, be)
    assert "step0" in err.value.location


def test_hodlr_step_agrees_with_dense_step():
    p = random_qbd(m=64, band=1, seed=0)
    dense_be = DenseBackend()
    h_be = HodlrBackend(ArithmeticConfig(tol=1e-14, leaf_size=8))
    sd = cr_step(init_state(p, dense_be), dense_be)
    sh = cr_step(init_state(p, h_be), h_be)
    for name in ("am1", "a0", "a1", "a0hat"):
        assert_allclose(to_dense(getattr(sh, name)), getattr(sd, name),
                        atol=1e-11, err_msg=name)


# ------------------------------------------------------------------- solve G

def test_decoupled_up_block_stops_after_one_step():
    rng = np.random.default_rng(1)
    m = 8
    am1 = rng.random((m, m))
    a0 = rng.random((m, m))
    scale = (am1.sum(1) + a0.sum(1))[:, None]
    am1, a0 = am1 / scale, a0 / scale
    a1 = np.zeros((m, m))
    g, rep = cr_solve_G((am1, a0, a1))
    assert rep.iterations == 1
    assert rep.stop_reason == "converged"
    assert_allclose(g, np.linalg.solve(np.eye(m) - a0, am1), atol=1e-13)


def test_scalar_transient_chain_quadratic_convergence():
    g, rep = cr_solve_G((np.array([[0.2]]), np.array([[0.4]]), np.array([[0.4]])))
    assert rep.stop_reason == "converged"
    assert rep.iterations <= 8
    assert g[0, 0] == pytest.approx(scalar_min_root(0.2, 0.4, 0.4), abs=1e-13)
    assert g[0, 0] == pytest.approx(0.5, abs=1e-13)
    assert rep.residual <= 1e-14


def test_scalar_null_recurrent_chain_linear_convergence():
    # symmetric drift: G = 1, the up/down norms only halve per step, and
    # roundoff caps the attainable accuracy near sqrt(eps)
    with pytest.warns(RuntimeWarning, match="null recurrent"):
        g, rep = cr_solve_G((np.array([[0.4]]), np.array([[0.2]]),
                             np.array([[0.4]])), tol=1e-7, max_iter=60)
    assert rep.stop_reason == "converged"
    assert rep.iterations > 20
    assert g[0, 0] == pytest.approx(1.0, abs=1e-6)


def test_non_null_solves_emit_no_warning(recwarn):
    cr_solve_G(random_qbd(m=20, band=1, seed=8))
    assert not [w for w in recwarn if issubclass(w.category, RuntimeWarning)]

    norms = []
    state, be = _scalar_state(0.4, 0.2, 0.4)
    for _ in range(12):
        state = cr_step(state, be)
        norms.append(abs(state.a1[0, 0]))
    ratios = np.array(norms[5:]) / np.array(norms[4:-1])
    assert np.all(np.abs(ratios - 0.5) < 0.05)


def test_random_instance_matches_fixed_point_oracle():
    p = random_qbd(m=30, band=1, seed=3)
    g, rep = cr_solve_G(p)
    assert rep.stop_reason == "converged"
    assert rep.iterations <= 15
    assert rep.residual <= 1e-12
    oracle = fixed_point_g(p.am1, p.a0, p.a1, sweeps=20000, tol=1e-11)
    assert np.max(np.abs(g - oracle)) <= 1e-6


def test_report_bookkeeping():
    p = random_qbd(m=16, band=1, seed=4)
    g, rep = cr_solve_G(p, max_iter=0)
    assert rep.stop_reason == "max_iter"
    assert rep.iterations == 0
    assert rep.step_seconds == [] and rep.offdiag_ranks == []
    # with no steps, G solves the linear part only
    assert_allclose(g, np.linalg.solve(np.eye(16) - p.a0, p.am1), atol=1e-12)

    seen = []
    g, rep = cr_solve_G(p, callback=lambda s: seen.append(s.h))
    assert seen == list(range(1, rep.iterations + 1))
    assert len(rep.step_seconds) == rep.iterations == len(rep.offdiag_ranks)
    assert rep.stop_reason == "converged"
    d = rep.to_dict()
    assert d["size"] == 16 and d["backend"] == "dense" and d["band"] == 1
    assert d["time_seconds"] == pytest.approx(sum(rep.step_seconds))
    assert len(d["max_rank_per_step"]) == rep.iterations


def test_pinned_iteration_mode_runs_exact_count():
    p = random_qbd(m=12, band=1, seed=5)
    _, rep = cr_solve_G(p, tol=0.0, max_iter=7)
    assert rep.iterations == 7
    assert rep.stop_reason == "max_iter"


def test_hodlr_solve_matches_dense_solve():
    p = random_qbd(m=128, band=1, seed=6)
    gd, repd = cr_solve_G(p, backend="dense")
    gh, reph = cr_solve_G(p, backend="hodlr",
                          cfg=ArithmeticConfig(tol=1e-14, leaf_size=16))
    assert np.max(np.abs(gh - gd)) <= 1e-10
    assert reph.backend == "hodlr"
    assert all(r is not None for r in reph.offdiag_ranks)
    assert repd.offdiag_ranks[0] is None
    assert reph.residual <= 1e-11


def test_markov_structure_is_preserved_along_the_iteration():
    # the three-block sum stays row stochastic and entrywise nonnegative in
    # exact arithmetic; rescaled by the annulus center it drops strictly
    # below spectral radius one
    p = random_qbd(m=24, band=2, seed=7)
    si = spectral_annulus(p)
    assert si.chain_class in ("positive_recurrent", "transient")
    be = DenseBackend()
    state = init_state(p, be)
    for _ in range(6):
        state = cr_step(state, be)
        for block in (state.am1, state.a1, state.a0):
            assert block.min() >= -1e-13
        total = state.am1 + state.a0 + state.a1
        assert_allclose(total.sum(axis=1), np.ones(24), atol=1e-12)
        w = si.theta ** (2 ** state.h)
        rescaled = state.am1 / w + state.a0 + state.a1 * w
        rho = np.max(np.abs(np.linalg.eigvals(rescaled)))
        assert rho < 1.0


def test_residual_of_exact_root_is_zero():
    g = np.array([[scalar_min_root(0.4, 0.2, 0.4)]])
    r = residual_G((np.array([[0.4]]), np.array([[0.2]]), np.array([[0.4]])), g)
    assert r <= 1e-15
    r_bad = residual_G((np.array([[0.4]]), np.array([[0.2]]), np.array([[0.4]])),
                       np.array([[0.3]]))
    assert r_bad > 0.05


def test_get_backend_rejects_unknown_name():
    with pytest.raises(ValueError):
        get_backend("sparse")
    be = DenseBackend()
    assert get_backend(be) is be


# ------------------------------------------------- block tridiagonal systems

def test_single_block_system_is_a_direct_solve():
    rng = np.random.default_rng(10)
    d = rng.random((6, 6)) + 6 * np.eye(6)
    rhs = rng.random(6)
    x = cr_solve_block_tridiag(d, np.eye(6), np.eye(6), rhs, n_blocks=1)
    assert_allclose(x, np.linalg.solve(d, rhs), atol=1e-12)


@pytest.mark.parametrize("n_blocks", [3, 7, 15])
def test_power_of_two_minus_one_blocks_match_dense_solve(n_blocks):
    rng = np.random.default_rng(11)
    m = 5
    d = rng.random((m, m)) + 4 * np.eye(m)
    sub = rng.random((m, m)) * 0.3
    sup = rng.random((m, m)) * 0.3
    rhs = rng.random(n_blocks * m)
    x = cr_solve_block_tridiag(d, sub, sup, rhs, n_blocks)
    t = assemble_block_tridiag(d, sub, sup, n_blocks)
    assert_allclose(x, np.linalg.solve(t, rhs), atol=1e-10)


@pytest.mark.parametrize("n_blocks", [2, 4, 5, 6, 9, 12])
def test_padding_leaves_original_unknowns_untouched(n_blocks):
    rng = np.random.default_rng(12)
    m = 4
    d = rng.random((m, m)) + 4 * np.eye(m)
    sub = rng.random((m, m)) * 0.4
    sup = rng.random((m, m)) * 0.4
    rhs = rng.random((n_blocks, m))
    x = cr_solve_block_tridiag(d, sub, sup, rhs, n_blocks)
    assert x.shape == (n_blocks, m)
    t = assemble_block_tridiag(d, sub, sup, n_blocks)
    assert_allclose(x.ravel(), np.linalg.solve(t, rhs.ravel()), atol=1e-10)


def test_identity_system_returns_rhs():
    rhs = np.arange(12.0)
    x = cr_solve_block_tridiag(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)),
                               rhs, n_blocks=4)
    assert_allclose(x, rhs, atol=1e-14)


def test_block_tridiag_hodlr_backend():
    rng = np.random.default_rng(13)
    m = 32
    band = np.zeros((m, m))
    for k in (-1, 0, 1):
        band += np.diag(rng.random(m - abs(k)), k)
    d = band + 4 * np.eye(m)
    sub = -np.eye(m) * 0.5
    sup = -np.eye(m) * 0.5
    rhs = rng.random(7 * m)
    x = cr_solve_block_tridiag(d, sub, sup, rhs, 7, backend="hodlr",
                               cfg=ArithmeticConfig(tol=1e-13, leaf_size=8))
    t = assemble_block_tridiag(d, sub, sup, 7)
    assert np.max(np.abs(x - np.linalg.solve(t, rhs))) <= 1e-9


def test_singular_pivot_block_reports_level():
    with pytest.raises(SingularBlockError) as err:
        cr_solve_block_tridiag(np.zeros((2, 2)), np.eye(2), np.eye(2),
                               np.ones(6), 3)
    assert err.value.location.startswith("level0")


def test_block_tridiag_input_validation():
    with pytest.raises(ValueError):
        cr_solve_block_tridiag(np.eye(2), np.eye(3), np.eye(2), np.ones(4), 2)
    with pytest.raises(ValueError):
        cr_solve_block_tridiag(np.eye(2), np.eye(2), np.eye(2), np.ones(5), 2)
    with pytest.raises(ValueError):
        cr_solve_block_tridiag(np.eye(2), np.eye(2), np.eye(2), np.ones(4), 0)
