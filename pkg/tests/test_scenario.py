import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from norst.geometry import orthonormality_error, sin_theta_max
from norst.scenario import (CoeffModel, ScenarioConfig, SupportModel, gen_magnitudes, gen_scenario,
                            max_outlier_frac_col, max_outlier_frac_row, stream)


def _window_scan(mask, alpha):
    """Direct oracle: loop over every window start."""
    best = 0.0
    for s in range(mask.shape[1] - alpha + 1):
        best = max(best, mask[:, s:s + alpha].sum(axis=1).max() / alpha)
    return best


# -- coefficients -------------------------------------------------------------


def test_coeff_q_schedule():
    m = CoeffModel(r=4, f=16)
    assert np.allclose(m.q, [4.0, 3.5, 3.0, 1.0])
    assert m.lambda_plus == pytest.approx(16 / 3)
    assert m.lambda_minus == pytest.approx(1 / 3)


def test_coeff_condition_number_is_f():
    m = CoeffModel(r=30, f=50)
    assert m.lambda_plus / m.lambda_minus == pytest.approx(50)


def test_coeff_empirical_spectrum():
    m = CoeffModel(r=10, f=50)
    A = m.sample(20000, np.random.default_rng(0))
    var = A.var(axis=1)
    assert np.all(np.abs(var / m.lambdas - 1) <= 0.1)
    cond = var.max() / var.min()
    assert abs(cond / 50 - 1) <= 0.2
    assert np.all(A ** 2 <= m.eta * m.lambdas[:, None] + 1e-12)


# -- supports ---------------------------------------------------------------


def test_row_frac_empty_and_full():
    assert max_outlier_frac_row(np.zeros((5, 30), bool), 10) == 0.0
    m = np.zeros((5, 30), bool)
    m[0] = True
    assert max_outlier_frac_row(m, 10) == 1.0


def test_row_frac_index_list_input():
    sup = [np.array([1]), np.array([], int), np.array([1, 2])]
    assert max_outlier_frac_row(sup, 2, n=4) == pytest.approx(0.5)
    assert max_outlier_frac_col(sup, 4) == pytest.approx(0.5)


@given(st.integers(0, 10_000), st.integers(1, 15))
def test_row_frac_matches_window_scan(seed, alpha):
    rng = np.random.default_rng(seed)
    mask = rng.random((6, 20)) < 0.3
    assert max_outlier_frac_row(mask, alpha) == pytest.approx(_window_scan(mask, alpha))


def test_row_frac_rejects_bad_alpha():
    with pytest.raises(ValueError):
        max_outlier_frac_row(np.zeros((2, 5), bool), 6)


def test_col_frac_empty():
    assert max_outlier_frac_col(np.zeros((5, 0), bool), 5) == 0.0
    assert max_outlier_frac_col(np.zeros((5, 3), bool), 5) == 0.0


def test_moving_object_budgets_reference_values():
    rng = np.random.default_rng(0)
    model = SupportModel.moving_object(50, 0.3, 300)
    mask = model.sample(1000, range(3000), rng)
    assert max_outlier_frac_col(mask, 1000) == pytest.approx(0.05)
    assert 0.25 <= _window_scan(mask, 300) <= 0.35
    assert max_outlier_frac_row(mask, 300) == pytest.approx(_window_scan(mask, 300))


def test_moving_object_contiguous_blocks():
    mask = SupportModel.moving_object(3, 0.1, 20).sample(12, range(16), None)
    for c in range(16):
        idx = np.flatnonzero(mask[:, c])
        assert idx.size == 3 and np.all(np.diff(idx) == 1)


def test_bernoulli_row_frac_range():
    vals = []
    for seed in range(5):
        mask = SupportModel.bernoulli(0.3).sample(200, range(2000), np.random.default_rng(seed))
        vals.append(max_outlier_frac_row(mask, 300))
    assert all(0.3 <= v <= 0.45 for v in vals)


def test_bernoulli_col_frac_small_rho():
    # binomial-tail oracle: P(Bin(1000, 0.01) > 30) is ~1e-8 per column
    mask = SupportModel.bernoulli(0.01).sample(1000, range(2000), np.random.default_rng(0))
    assert abs(mask.mean() - 0.01) < 0.001
    assert max_outlier_frac_col(mask, 1000) <= 0.03


def test_support_model_validation():
    with pytest.raises(ValueError):
        SupportModel.bernoulli(1.5).validate(10)
    with pytest.raises(ValueError):
        SupportModel.moving_object(20, 0.1, 10).validate(10)
    with pytest.raises(ValueError):
        SupportModel(kind="stripes").validate(10)


# -- magnitudes -------------------------------------------------------------


def test_magnitudes_constant():
    sup = np.zeros((4, 3), bool)
    sup[1, 2] = sup[3, 0] = True
    out = gen_magnitudes(sup, 5.0, 5.0, "constant")
    assert np.all(out[sup] == 5.0) and np.all(out[~sup] == 0)


def test_magnitudes_empty():
    assert np.all(gen_magnitudes(np.zeros(6, bool), 1, 2, "uniform", np.random.default_rng(0)) == 0)


def test_magnitudes_uniform_histogram():
    vals = gen_magnitudes(np.ones(10_000, bool), 10, 20, "uniform", np.random.default_rng(4))
    a = np.abs(vals)
    assert a.min() >= 10 and a.max() <= 20
    counts, _ = np.histogram(a, bins=10, range=(10, 20))
    # chi-square against the flat law, 9 dof; 27.9 is the 0.999 quantile
    chi2 = ((counts - 1000) ** 2 / 1000).sum()
    assert chi2 < 27.9
    assert 0.45 < (vals > 0).mean() < 0.55


def test_magnitudes_bad_bounds():
    with pytest.raises(ValueError):
        gen_magnitudes(np.ones(2, bool), 0, 1, "constant")
    with pytest.raises(ValueError):
        gen_magnitudes(np.ones(2, bool), 1, 2, "uniform")


# -- scenario ----------------------------------------------------------------


SMALL = ScenarioConfig(n=60, d=600, r=4, t_train=50, change_times=(200, 400),
                       support=SupportModel.moving_object(3, 0.3, 40),
                       train_support=SupportModel.moving_object(1, 0.05, 40))


def test_scenario_decomposition_exact():
    sc = gen_scenario(SMALL.with_(noise_var=1e-4), 3)
    assert np.array_equal(sc.Y, (sc.L + sc.X) + sc.V)
    sc0 = gen_scenario(SMALL, 3)
    assert sc0.V is None and np.array_equal(sc0.Y, sc0.L + sc0.X)


def test_scenario_piecewise_subspaces():
    sc = gen_scenario(SMALL, 1)
    for P in sc.subspaces:
        assert orthonormality_error(P) <= 1e-10
    for t in (0, 199, 200, 399, 400, 599):
        P = sc.subspace_at(t)
        ell = sc.L[:, t]
        assert np.linalg.norm(ell - P @ (P.T @ ell)) <= 1e-10 * max(1.0, np.linalg.norm(ell))


def test_scenario_outliers_on_support():
    sc = gen_scenario(SMALL, 2)
    assert np.all(sc.X[~sc.support_mask] == 0)
    mags = np.abs(sc.X[sc.support_mask])
    assert mags.min() >= SMALL.x_min and mags.max() <= SMALL.x_max


def test_scenario_bitwise_reproducible():
    a, b = gen_scenario(SMALL, 9), gen_scenario(SMALL, 9)
    for name in ("L", "X", "Y", "coeffs", "support_mask"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = gen_scenario(SMALL, 10)
    assert not np.array_equal(a.Y, c.Y)


def test_named_streams_independent():
    a = stream(5, "coeffs").random(4)
    b = stream(5, "supports").random(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, stream(5, "coeffs").random(4))


def test_scenario_zero_rho():
    sc = gen_scenario(SMALL.with_(support=SupportModel.bernoulli(0.0), train_support=None), 0)
    assert np.all(sc.X == 0) and np.array_equal(sc.Y, sc.L)


def test_scenario_noise_budget():
    nv = 1e-4
    sc = gen_scenario(SMALL.with_(noise_var=nv), 0)
    # uniform entries: E[vvᵀ] = nv·I, ‖v‖² ≤ n·3·nv
    assert np.all((sc.V ** 2).sum(axis=0) <= 3 * nv * SMALL.n + 1e-15)


def test_scenario_change_magnitude_default_gamma():
    # the default γ = 0.001 moves each subspace by a small but clearly nonzero angle
    cfg = ScenarioConfig(n=300, d=400, r=10, t_train=10, change_times=(100, 200))
    sc = gen_scenario(cfg, 0)
    vals = [sin_theta_max(a, b) for a, b in zip(sc.subspaces, sc.subspaces[1:])]
    assert all(0.005 < v < 0.1 for v in vals)


def test_scenario_calibrated_change():
    cfg = SMALL.with_(change_sin_theta=0.01)
    sc = gen_scenario(cfg, 4)
    for a, b in zip(sc.subspaces, sc.subspaces[1:]):
        assert sin_theta_max(a, b) == pytest.approx(0.01, rel=1e-3)


def test_scenario_epoch_indexing():
    sc = gen_scenario(SMALL, 0)
    ep = sc.epoch_of_frame
    assert ep[199] == 0 and ep[200] == 1 and ep[400] == 2
    assert sc.J == 2


def test_scenario_invalid_configs():
    with pytest.raises(ValueError):
        gen_scenario(SMALL.with_(change_times=(400, 200)), 0)
    with pytest.raises(ValueError):
        gen_scenario(SMALL.with_(change_times=(0,)), 0)
    with pytest.raises(ValueError):
        gen_scenario(SMALL.with_(r=100), 0)
    with pytest.raises(ValueError):
        gen_scenario(SMALL.with_(support=SupportModel.bernoulli(2.0)), 0)
    with pytest.raises(ValueError):
        gen_scenario(SMALL.with_(support=SupportModel.moving_object(70, 0.3, 40)), 0)
