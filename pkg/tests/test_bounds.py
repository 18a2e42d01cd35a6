import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matcon import bounds
from matcon import linalg_core as la
from matcon.martingale_engine import specialize_AB, specialize_matrix_integrand
from matcon.piecewise import PiecewiseProcess
from matcon.scenario import preset_scenario

from conftest import const, rand_proc


def w_loops(T, C, lam, EJ2):
    """Quadruple-loop oracle: sum_kl x_kl blockdiag(T_kl T_kl^T, T_kl^T T_kl)."""
    m, n, p, q = T.shape
    top, bottom = np.zeros((m, m)), np.zeros((n, n))
    for k in range(p):
        for l in range(q):
            x = EJ2[k, l] * C[k, l] ** 2 * lam[k, l]
            for i in range(m):
                for j in range(m):
                    top[i, j] += x * sum(T[i, a, k, l] * T[j, a, k, l] for a in range(n))
            for i in range(n):
                for j in range(n):
                    bottom[i, j] += x * sum(T[a, i, k, l] * T[a, j, k, l] for a in range(m))
    out = np.zeros((m + n, m + n))
    out[:m, :m], out[m:, m:] = top, bottom
    return out


# -- W and V ------------------------------------------------------------------------


def test_w_scalar_and_zero():
    one = np.ones((1, 1))
    np.testing.assert_array_equal(bounds.w_discontinuous(np.ones((1, 1, 1, 1)), one, one, one), np.eye(2))
    np.testing.assert_array_equal(bounds.w_continuous(np.ones((1, 1, 1, 1)), one), np.eye(2))
    assert not bounds.w_discontinuous(np.ones((2, 2, 2, 2)), np.zeros((2, 2)), np.ones((2, 2)), np.ones((2, 2))).any()


def test_w_matches_loops(rng):
    T = rng.standard_normal((3, 2, 2, 3))
    C = rng.standard_normal((2, 3))
    lam = rng.uniform(0, 3, (2, 3))
    EJ2 = rng.uniform(0, 1, (2, 3))
    np.testing.assert_allclose(bounds.w_discontinuous(T, C, lam, EJ2), w_loops(T, C, lam, EJ2), atol=1e-12)


def test_w_continuous_identity_pattern():
    p = q = 3
    W = bounds.w_continuous(la.slicewise_identity(p, q), np.ones((p, q)))
    np.testing.assert_allclose(W, la.block_diag(q * np.eye(p), p * np.eye(q)))


def test_w_continuous_is_unit_weights(rng):
    T = rng.standard_normal((2, 2, 2, 2))
    C = rng.standard_normal((2, 2))
    assert np.array_equal(bounds.w_continuous(T, C), bounds.w_discontinuous(T, C, np.ones((2, 2)), np.ones((2, 2))))


def test_w_rejects_bad_inputs():
    with pytest.raises(la.DimensionError):
        bounds.w_discontinuous(np.ones((1, 1, 2, 2)), np.ones((2, 3)), None, None)
    with pytest.raises(ValueError):
        bounds.w_discontinuous(np.ones((1, 1, 1, 1)), np.ones((1, 1)), -np.ones((1, 1)), np.ones((1, 1)))


def test_v_constant_and_zero(rng):
    T = rng.standard_normal((2, 3, 2, 2))
    C = rng.standard_normal((2, 2))
    lam = rng.uniform(0, 2, (2, 2))
    V = bounds.v_matrix(const(T, 5.0), const(C, 5.0), 2.5, const(lam, 5.0), np.ones((2, 2)))
    np.testing.assert_allclose(V, 2.5 * bounds.w_discontinuous(T, C, lam, np.ones((2, 2))), atol=1e-13)
    assert not bounds.v_matrix(const(T), const(C), 0.0).any()
    with pytest.raises(ValueError):
        bounds.v_matrix(const(T), const(C), 2.0)


def test_v_refinement_invariant(rng):
    T = rand_proc(rng, (2, 2, 1, 2), 2, 2.0)
    C = rand_proc(rng, (1, 2), 1, 2.0)
    V1 = bounds.v_matrix(T, C, 2.0)
    V2 = bounds.v_matrix(T.refine([0.0, 0.4, 1.0, 1.7, 2.0]), C.refine([0.0, 0.3, 2.0]), 2.0)
    np.testing.assert_allclose(V1, V2, atol=1e-14)


def test_sigma_sq():
    assert bounds.sigma_sq(np.diag([3.0, 1.0, 2.0])) == 3.0
    assert bounds.sigma_sq(np.zeros((3, 3))) == 0.0


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_v_psd_blockdiag_sigma_is_max_block(seed):
    rng = np.random.default_rng(seed)
    m, n, p, q = rng.integers(1, 4, 4)
    T = rand_proc(rng, (m, n, p, q), int(rng.integers(1, 4)), 1.0)
    C = rand_proc(rng, (p, q), 1, 1.0)
    lam = const(rng.uniform(0, 2, (p, q)))
    rep = bounds.variance_report(T, C, 1.0, lam, np.ones((p, q)), 1.0)
    V = rep.V
    assert np.array_equal(V, V.T)
    assert la.lambda_min(V) >= -1e-10 * max(1.0, rep.sigma_sq)
    assert not V[:m, m:].any()
    assert rep.sigma_sq == pytest.approx(max(rep.block_norms), rel=1e-12, abs=1e-14)


def test_scaling_c(rng):
    T = rand_proc(rng, (2, 3, 2, 2), 2, 1.0)
    C = rand_proc(rng, (2, 2), 2, 1.0)
    C2 = PiecewiseProcess(C.breakpoints, 2 * C.values)
    lam = const(np.ones((2, 2)))
    r1 = bounds.variance_report(T, C, 1.0, lam, np.ones((2, 2)), 1.0)
    r2 = bounds.variance_report(T, C2, 1.0, lam, np.ones((2, 2)), 1.0)
    np.testing.assert_allclose(r2.V, 4 * r1.V, rtol=1e-13)
    assert r2.b_t == pytest.approx(2 * r1.b_t)
    q1 = bounds.BoundQuery(2.0, r1.sigma_sq, r1.b_t, 2, 3)
    q2 = bounds.BoundQuery(2.0, r2.sigma_sq, r2.b_t, 2, 3)
    assert bounds.freedman_threshold(q2) == pytest.approx(2 * bounds.freedman_threshold(q1))


# -- b_t, phi and the integrability integral -----------------------------------------------


def test_b_t_examples(rng):
    one = const(np.ones((1, 1, 1, 1)))
    assert bounds.b_t(one, const([[1.0]]), 1.0, 1.0) == 1.0
    assert bounds.b_t(one, const([[0.0]]), 1.0, 1.0) == 0.0
    T = rand_proc(rng, (2, 3, 2, 1), 2, 2.0)
    C = rand_proc(rng, (2, 1), 2, 2.0)
    want = 0.0
    for s in (0.5, 1.5):
        Ts, Cs = T.value_at(s), C.value_at(s)
        slices = [np.linalg.svd(Ts[:, :, k, 0], compute_uv=False)[0] for k in range(2)]
        want = max(want, np.abs(Cs).max() * max(slices))
    assert bounds.b_t(T, C, 1.5, 2.0) == pytest.approx(1.5 * want, rel=1e-12)
    # restricting to the first piece
    assert bounds.b_t(T, C, 1.0, 0.5) <= bounds.b_t(T, C, 1.0, 2.0)


def test_phi():
    assert bounds.phi(0.0) == 0.0
    assert bounds.phi(1.0) == pytest.approx(math.e - 2.0)
    for x in (0.5, 1.0, 2.0, 2.9):
        assert bounds.phi(x) <= x**2 / (2 * (1 - x / 3))
    assert np.all(bounds.phi(np.linspace(-5, 5, 101)) >= 0)


@given(st.floats(1e-6, 20.0), st.floats(0.0, 1.0))
def test_phi_scaling_property(x, h):
    assert bounds.phi(x * h) <= h**2 * bounds.phi(x) * (1 + 1e-12) + 1e-300


def test_integrability_scalar_unit():
    one = const(np.ones((1, 1, 1, 1)))
    got = bounds.integrability_integral(one, const([[1.0]]), const([[1.0]]), np.ones((1, 1)), 1.0, 1.0, xi=3.0)
    np.testing.assert_allclose(got, (math.exp(3) - 4) * np.eye(2), rtol=1e-14)


def test_integrability_zero_c_piece():
    T = const(np.ones((1, 1, 1, 1)), 2.0)
    C = PiecewiseProcess(np.array([0.0, 1.0, 2.0]), np.array([[[0.0]], [[1.0]]]))
    got = bounds.integrability_integral(T, C, const([[1.0]], 2.0), np.ones((1, 1)), 1.0, 2.0)
    np.testing.assert_allclose(got, (math.exp(3) - 4) * np.eye(2), rtol=1e-14)
    # the beta -> 0 limit is xi^2 / 2
    assert bounds._phi_ratio(3.0, 0.0) == 4.5
    assert bounds._phi_ratio(3.0, 1e-9) == pytest.approx(4.5, rel=1e-8)


def test_integrability_midpoint_quadrature(rng):
    T = rand_proc(rng, (2, 2, 2, 2), 3, 3.0)
    C = rand_proc(rng, (2, 2), 2, 3.0)
    lam = const(rng.uniform(0.5, 2.0, (2, 2)), 3.0)
    EJ2 = np.full((2, 2), 0.5)
    got = bounds.integrability_integral(T, C, lam, EJ2, 1.2, 3.0, xi=1.7)
    grid = np.linspace(0.0, 3.0, 301)  # contains 1, 1.5, 2
    want = np.zeros_like(got)
    for a, b in zip(grid[:-1], grid[1:]):
        s = 0.5 * (a + b)
        Ts, Cs = T.value_at(s), C.value_at(s)
        beta = 1.2 * np.abs(Cs).max() * max(la.tensor_op_inf_norm(Ts), la.tensor_op_inf_norm(la.tensor_transpose(Ts)))
        want += (b - a) * bounds.phi(1.7 * beta) / beta**2 * bounds.w_discontinuous(Ts, Cs, lam.value_at(s), EJ2)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


# -- thresholds ----------------------------------------------------------------------


def test_freedman_threshold_examples():
    assert bounds.freedman_threshold(bounds.BoundQuery(1.0, 0.0, 0.0, 2, 2)) == 0.0
    L = 3 + math.log(2)
    want = math.sqrt(10 * L) + L / 3
    assert bounds.freedman_threshold(bounds.BoundQuery(3.0, 5.0, 1.0, 1, 1)) == pytest.approx(want, rel=1e-15)
    assert bounds.freedman_threshold(bounds.BoundQuery(3.0, 5.0, 0.0, 1, 1)) == pytest.approx(math.sqrt(10 * L))
    assert bounds.freedman_threshold(bounds.BoundQuery(4.0, 10.0, 1.0, 5, 5), "union") == pytest.approx(
        math.sqrt(80) + 4 / 3
    )
    assert bounds.tail_cap(2.0, 3, 4, "theorem") == pytest.approx(math.exp(-2))
    assert bounds.tail_cap(2.0, 3, 4, "union") == pytest.approx(7 * math.exp(-2))


def test_bound_query_validation():
    with pytest.raises(ValueError):
        bounds.BoundQuery(0.0, 1.0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        bounds.freedman_threshold(bounds.BoundQuery(1.0, 1.0, 1.0, 1, 1), "other")


def test_mean_bound():
    assert bounds.mean_bound(2.0, 0.0, 1, 1) == pytest.approx(2 * math.sqrt(2 * math.log(2)))
    assert bounds.mean_bound(0.0, 0.0, 3, 3) == 0.0
    n = 20
    assert bounds.mean_bound(math.sqrt(n), 0.0, n, n) == pytest.approx(math.sqrt(2 * n * math.log(2 * n)))


# -- discrete series --------------------------------------------------------------


def test_tropp_aw_single_summand(rng):
    X = rng.standard_normal((3, 3))
    pair = (X @ X.T, X.T @ X)
    assert bounds.tropp_variance([pair]) == pytest.approx(bounds.aw_variance([pair]))


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_aw_dominates_tropp(seed):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(int(rng.integers(1, 6))):
        X = rng.standard_normal((3, 2))
        pairs.append((X @ X.T, X.T @ X))
    assert bounds.aw_variance(pairs) >= bounds.tropp_variance(pairs) * (1 - 1e-12)


def test_summand_covariances_loop_oracle(rng):
    T = rng.standard_normal((3, 2, 2, 2))
    C = rng.standard_normal((2, 2))
    lam = rng.uniform(0, 2, (2, 2))
    EJ2 = rng.uniform(0, 1, (2, 2))
    ssT, sTs = bounds.summand_covariances(T, C, 0.7, lam, EJ2)
    want = 0.7 * w_loops(T, C, lam, EJ2)
    np.testing.assert_allclose(ssT, want[:3, :3], atol=1e-12)
    np.testing.assert_allclose(sTs, want[3:, 3:], atol=1e-12)


def test_summand_covariances_monte_carlo(rng):
    # E[S S^T] by sampling S = T o (C * G), G standard Gaussian
    T = rng.standard_normal((2, 3, 2, 1))
    C = rng.standard_normal((2, 1))
    G = rng.standard_normal((100_000, 2, 1))
    S = np.einsum("ijkl,rkl->rij", T, C * G)
    prods = np.einsum("rij,rkj->rik", S, S)
    ssT, _ = bounds.summand_covariances(T, C)
    se = prods.std(axis=0, ddof=1) / math.sqrt(prods.shape[0])
    assert np.all(np.abs(prods.mean(axis=0) - ssT) <= 4 * se)


# -- the A (C * dM) B form ---------------------------------------------------------


def test_ab_identity_is_counting_matrix_form(rng):
    C = rng.standard_normal((3, 4))
    lam = rng.uniform(0, 2, (3, 4))
    W = bounds.w_ab_form(np.eye(3), np.eye(4), C, lam, np.ones((3, 4)))
    X = C**2 * lam
    np.testing.assert_allclose(W, la.block_diag(np.diag(X.sum(axis=1)), np.diag(X.sum(axis=0))))
    assert la.lambda_max(W) == pytest.approx(max(la.norm_p_inf(X, 1), la.norm_inf_p(X, 1)))
    assert not bounds.w_ab_form(np.eye(3), np.eye(4), np.zeros((3, 4)), lam, np.ones((3, 4))).any()


def test_ab_form_matches_general(rng):
    for _ in range(20):
        A, B = rng.standard_normal((3, 4)), rng.standard_normal((2, 2))
        C, lam, EJ2 = rng.standard_normal((4, 2)), rng.uniform(0, 2, (4, 2)), rng.uniform(0, 1, (4, 2))
        np.testing.assert_allclose(
            bounds.w_ab_form(A, B, C, lam, EJ2),
            bounds.w_discontinuous(la.ab_tensor(A, B), C, lam, EJ2),
            atol=1e-10,
        )


def test_b_t_ab_matches_general(rng):
    # slices of A x B are rank one, so their operator norms factor exactly
    A, B = rand_proc(rng, (3, 4), 2, 1.0), rand_proc(rng, (2, 2), 1, 1.0)
    C = rand_proc(rng, (4, 2), 1, 1.0)
    general = bounds.b_t(specialize_AB(A, B), C, 1.0, 1.0)
    assert bounds.b_t_ab(A, B, C, 1.0, 1.0) == pytest.approx(general, rel=1e-12)


def test_b_t_ab_equals_general_for_diagonal_factors(rng):
    A = const(np.diag(rng.uniform(0.5, 2, 3)))
    B = const(np.diag(rng.uniform(0.5, 2, 2)))
    C = const(rng.standard_normal((3, 2)))
    assert bounds.b_t_ab(A, B, C, 1.0, 1.0) == pytest.approx(bounds.b_t(specialize_AB(A, B), C, 1.0, 1.0), rel=1e-12)


# -- presets -------------------------------------------------------------------------


def test_gaussian_preset_sigma_is_max_dim():
    for n, m in ((20, 20), (3, 5), (6, 2)):
        cb = bounds.corollary_presets("static_gaussian", c=np.ones((n, m)))
        assert cb.sigma_sq == max(n, m)
        assert cb.b_t == 0.0


def test_poisson_preset():
    cb = bounds.corollary_presets("static_poisson", lam=np.full((5, 5), 2.0))
    assert cb.sigma_sq == 10.0
    for x in (1.0, 4.0):
        assert cb.threshold(x) == pytest.approx(math.sqrt(20 * x) + x / 3)
        assert cb.cap(x) == pytest.approx(10 * math.exp(-x))


def test_scalar_point_process_preset():
    cb = bounds.corollary_presets("scalar_point_process", A=[1.0, 0.5, 0.25], lam=[1.0, 2.0, 3.0], t=2.0)
    assert cb.sigma_sq == pytest.approx(2.0 * (1.0 + 0.25 * 2 + 0.0625 * 3))
    assert cb.b_t == 1.0


def test_unknown_preset():
    with pytest.raises(KeyError):
        bounds.corollary_presets("nope")


PRESET_PARAMS = {
    "counting_matrix": dict(C=[[1.0, 2.0], [0.5, 1.0], [3.0, 0.1]], lam=[[1.0, 2.0], [0.2, 0.3], [1.0, 4.0]], t=1.5),
    "scalar_point_process": dict(A=[1.0, -2.0, 0.3], lam=[2.0, 1.0, 5.0], t=3.0),
    "static_gaussian": dict(c=[[1.0, 2.0, 0.5], [0.3, 1.0, 1.0]]),
    "static_poisson": dict(lam=[[1.0, 2.0], [3.0, 0.5], [0.1, 0.2]]),
    "tropp_continuous": dict(driver="jump"),
}


@pytest.mark.parametrize("name", sorted(bounds.PRESETS))
def test_presets_agree_with_general_pipeline(name):
    params = dict(PRESET_PARAMS[name])
    sc = preset_scenario(name, **params)
    if name == "tropp_continuous":
        params["A"] = sc.coefficients["A"]
    cb = bounds.corollary_presets(name, **params)
    rep = sc.variance_report()
    assert cb.sigma_sq == pytest.approx(rep.sigma_sq, rel=1e-10, abs=1e-12)
    assert cb.b_t == pytest.approx(rep.b_t, rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(cb.V, rep.V, atol=1e-10)


def test_tropp_continuous_printed_jump_bound_can_undershoot():
    A = np.ones((2, 2))
    cb = bounds.corollary_presets("tropp_continuous", A=A, t=1.0, driver="jump")
    assert cb.b_t == pytest.approx(2.0)
    assert cb.extras["b_t_row_col_norms"] == pytest.approx(math.sqrt(2.0))


def test_tropp_discrete_reduction(rng):
    A = rand_proc(rng, (3, 2), 4, 4.0)
    T = specialize_matrix_integrand(A)
    V = bounds.v_matrix(T, const([[1.0]], 4.0), 4.0)
    pairs = [bounds.summand_covariances(Tk, np.ones((1, 1))) for Tk in T.values]
    assert bounds.sigma_sq(V) == pytest.approx(bounds.tropp_variance(pairs), rel=1e-12)
    assert bounds.aw_variance(pairs) >= bounds.tropp_variance(pairs)


def test_variance_report_to_dict(rng):
    sc = preset_scenario("counting_matrix")
    d = sc.variance_report().to_dict()
    assert d["sigma_sq"] == 15.0 and d["b_t"] == 1.0
    assert len(d["V_t"]) == 6
