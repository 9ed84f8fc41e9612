import numpy as np
import pytest

from buckletop.aggregation import (ConstraintSpec, aggregate,
                                   aggregated_constraint, ks_agg, ks_agg_lower,
                                   pnorm_agg, scale_factor,
                                   separate_constraints)


def random_spectra(n_cases, rng=None, size=(2, 12)):
    rng = rng or np.random.default_rng(123)
    for _ in range(n_cases):
        k = rng.integers(*size)
        yield -np.sort(rng.uniform(0.05, 5.0, k))[::-1] * rng.uniform(0.1, 10)


def test_separate_active_exactly_at_bound():
    g, _ = separate_constraints(np.array([-0.5]), Pc_bar=2.0, alpha=1.0)
    assert g[0] == pytest.approx(0.0, abs=1e-15)


def test_separate_gap_orders_constraints():
    mu = np.array([-0.5, -0.5])
    g, coeff = separate_constraints(mu, Pc_bar=2.0, alpha=1.01)
    assert g[1] > g[0]
    assert coeff[1] == pytest.approx(coeff[0] / 1.01)


def test_separate_rejects_tension_side():
    with pytest.raises(ValueError):
        separate_constraints(np.array([-1.0, 0.1]), 1.0, 1.01)


def test_pnorm_single_value_exact():
    for rho in (1.0, 8.0, 64.0):
        M, w = pnorm_agg(np.array([-2.5]), rho)
        assert M == pytest.approx(-2.5, rel=1e-14)
        assert w[0] == pytest.approx(1.0)


def test_pnorm_rho_one_is_sum():
    M, _ = pnorm_agg(np.array([-2.0, -1.0]), 1.0)
    assert M == pytest.approx(-3.0, rel=1e-14)


def test_pnorm_large_rho_approaches_extreme():
    M, _ = pnorm_agg(np.array([-2.0, -1.0]), 20.0)
    assert M <= -2.0
    assert abs(M - (-2.0)) < 1e-5


def test_pnorm_rejects_nonnegative():
    with pytest.raises(ValueError):
        pnorm_agg(np.array([-1.0, 0.0]), 8.0)


def test_ks_single_value_exact():
    M, w = ks_agg(np.array([-1.7]), 12.0)
    assert M == pytest.approx(-1.7, rel=1e-14)
    assert w[0] == pytest.approx(1.0)


def test_ks_two_equal_closed_form():
    mu = np.array([-2.0, -2.0])
    M, _ = ks_agg(mu, 1.0)
    assert M == pytest.approx(-2.0 + np.log(2.0), rel=1e-12)
    Ml, _ = ks_agg_lower(mu, 1.0)
    assert Ml == pytest.approx(-2.0 - np.log(2.0), rel=1e-12)


def test_ks_weights_sum_to_one():
    for mu in random_spectra(20):
        for f in (ks_agg, ks_agg_lower):
            _, w = f(mu, 37.0)
            assert w.sum() == pytest.approx(1.0, rel=1e-12)


def test_ks_no_overflow_for_extreme_arguments():
    mu = np.array([-100.0, -1.0])
    M, w = ks_agg(mu, 100.0)       # rho*|mu| = 1e4
    assert np.isfinite(M) and np.all(np.isfinite(w))
    Ml, wl = ks_agg_lower(mu, 100.0)
    assert np.isfinite(Ml) and np.all(np.isfinite(wl))


def test_envelope_bounds_and_rho_monotonicity():
    rhos = [8.0, 16.0, 32.0, 64.0, 128.0]
    for mu in random_spectra(50):
        mu1 = mu.min()
        gap_ks, gap_pn, gap_ksl = [], [], []
        for rho in rhos:
            Mk, _ = ks_agg(mu, rho)
            Mp, _ = pnorm_agg(mu, rho)
            Ml, _ = ks_agg_lower(mu, rho)
            assert Mk >= mu1 - 1e-12
            assert Mp <= mu1 + 1e-12
            assert Ml <= mu1 + 1e-12
            gap_ks.append(Mk - mu1)
            gap_pn.append(mu1 - Mp)
            gap_ksl.append(mu1 - Ml)
        for g in (gap_ks, gap_pn, gap_ksl):
            assert all(a >= b - 1e-12 for a, b in zip(g, g[1:]))


def test_scale_factor_identity_and_guard():
    assert scale_factor(-2.0, -2.0) == 1.0
    with pytest.raises(ZeroDivisionError):
        scale_factor(-2.0, 0.0)


def test_scale_factor_ks_closed_form():
    mu = np.array([-2.0, -2.0])
    M, _ = ks_agg(mu, 1.0)
    s = scale_factor(mu.min(), M)
    assert s == pytest.approx(-2.0 / (-2.0 + np.log(2.0)), rel=1e-12)


def test_scale_factor_in_unit_interval_for_optimization_envelopes():
    for mu in random_spectra(30):
        for kind in ("pnorm", "ks"):
            M, _ = aggregate(mu, ConstraintSpec(kind, 1.0, 1.01, 24.0))
            s = scale_factor(mu.min(), M)
            assert 0.0 < s <= 1.0 + 1e-12


def test_single_eigenvalue_reduces_to_separate():
    mu = np.array([-0.4])
    g_sep, _ = separate_constraints(mu, 2.0, 1.01)
    for kind in ("pnorm", "ks"):
        g, dg, s = aggregated_constraint(mu, np.zeros((1, 3)), ConstraintSpec(kind, 2.0, 1.01, 16.0))
        assert g == pytest.approx(g_sep[0], rel=1e-12)
        assert s == pytest.approx(1.0)


def test_aggregated_gradient_weights():
    rng = np.random.default_rng(8)
    mu = -np.sort(rng.uniform(0.2, 2.0, 6))[::-1]
    dmu = rng.standard_normal((6, 10))
    spec = ConstraintSpec("ks", 1.5, 1.01, 32.0)
    M, w = aggregate(mu, spec)
    g, dg, s = aggregated_constraint(mu, dmu, spec)
    assert np.allclose(dg, 1.5 * s * (w @ dmu), rtol=1e-12)


def test_aggregated_gradient_fd():
    rng = np.random.default_rng(9)
    mu = -np.sort(rng.uniform(0.2, 2.0, 5))[::-1]
    for kind in ("pnorm", "ks"):
        spec = ConstraintSpec(kind, 1.2, 1.01, 24.0)
        _, _, s = aggregated_constraint(mu, np.zeros((5, 1)), spec)
        h = 1e-7
        for i in range(5):
            dmu = np.zeros((5, 1))
            dmu[i, 0] = 1.0
            _, dg, _ = aggregated_constraint(mu, dmu, spec, s=s)
            mp = mu.copy(); mp[i] += h
            mm = mu.copy(); mm[i] -= h
            gp, _, _ = aggregated_constraint(mp, dmu, spec, s=s)
            gm, _, _ = aggregated_constraint(mm, dmu, spec, s=s)
            assert dg[0] == pytest.approx((gp - gm) / (2 * h), rel=1e-6, abs=1e-8)


def test_permutation_invariance_of_gradients():
    rng = np.random.default_rng(10)
    mu = np.array([-1.0, -1.0, -0.7, -0.4])  # repeated leading pair
    dmu = rng.standard_normal((4, 8))
    for kind in ("pnorm", "ks"):
        spec = ConstraintSpec(kind, 1.0, 1.01, 50.0)
        g1, dg1, _ = aggregated_constraint(mu, dmu, spec, s=0.9)
        perm = [1, 0, 2, 3]
        g2, dg2, _ = aggregated_constraint(mu[perm], dmu[perm], spec, s=0.9)
        assert g1 == pytest.approx(g2, rel=1e-12)
        assert np.allclose(dg1, dg2, rtol=1e-12, atol=1e-15)
