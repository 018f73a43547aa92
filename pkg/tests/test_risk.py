"""Risk functionals against direct evaluation, grid oracles, closed forms,
and their structural invariants."""

import numpy as np
import pytest

from drrho import risk
from drrho.rng import CounterRng

from oracles import (
    chi2_grid_max,
    chi2_interior_closed_form,
    chi2_interior_holds,
    kl_constrained_grid,
    log_mean_exp_direct,
    softmax_direct,
    topk_mean_direct,
)


def test_loss_vector_validation():
    lv = risk.LossVector(values=[0.1, 0.5], bounds=(0.0, 1.0))
    assert len(lv) == 2
    with pytest.raises(ValueError):
        risk.LossVector(values=[0.1, np.inf])
    with pytest.raises(ValueError):
        risk.LossVector(values=[2.0], bounds=(0.0, 1.0))
    with pytest.raises(ValueError):
        risk.LossVector(values=[])


def test_risk_spec_validation():
    risk.RiskSpec(kind="cvar_topk", k=3)
    with pytest.raises(ValueError):
        risk.RiskSpec(kind="bogus")
    with pytest.raises(ValueError):
        risk.RiskSpec(kind="kl_constrained", rho=-1.0)
    with pytest.raises(ValueError):
        risk.RiskSpec(kind="kl_regularized", tau=0.0)


def test_cvar_topk_hand_cases():
    assert risk.cvar_topk([1.0, 3.0, 2.0], 2) == pytest.approx(2.5, abs=1e-15)
    assert risk.cvar_topk([4.0] * 5, 3) == pytest.approx(4.0, abs=1e-15)
    v = [0.3, -1.0, 2.2, 0.9]
    assert risk.cvar_topk(v, 4) == pytest.approx(np.mean(v), abs=1e-15)
    assert risk.cvar_topk(v, 1) == pytest.approx(max(v), abs=1e-15)
    with pytest.raises(ValueError):
        risk.cvar_topk(v, 0)
    with pytest.raises(ValueError):
        risk.cvar_topk(v, 5)


def test_cvar_topk_matches_sort_oracle_randomized():
    rng = CounterRng(101)
    for _ in range(100):
        m = 2 + int(rng.uniforms(1)[0] * 15)
        v = rng.normals(m)
        k = 1 + int(rng.uniforms(1)[0] * m) % m
        assert risk.cvar_topk(v, k) == pytest.approx(topk_mean_direct(v, k), abs=1e-12)


def test_softmax_weights_known_values():
    p = risk.softmax_weights([0.0, 1.0], 1.0)
    # direct: [1/(1+e), e/(1+e)]
    assert np.allclose(p, [1 / (1 + np.e), np.e / (1 + np.e)], atol=1e-15)
    assert abs(p[0] - 0.26894) < 5e-6 and abs(p[1] - 0.73106) < 5e-6


def test_softmax_weights_uniform_and_one_hot_limit():
    p = risk.softmax_weights([2.0, 2.0, 2.0], 0.7)
    assert np.allclose(p, 1 / 3)
    p = risk.softmax_weights([0.0, 1.0, 0.5], 1e-4)
    assert p[1] == pytest.approx(1.0, abs=1e-12)


def test_softmax_weights_sum_exactly_one_randomized():
    rng = CounterRng(55)
    for _ in range(200):
        m = 2 + int(rng.uniforms(1)[0] * 30)
        v = rng.normals(m) * 3
        p = risk.softmax_weights(v, 0.3)
        assert float(np.sum(p)) == 1.0
        assert (p >= 0).all()


def test_softmax_weights_shift_invariance():
    rng = CounterRng(56)
    v = rng.normals(9)
    a = risk.softmax_weights(v, 0.5)
    b = risk.softmax_weights(v + 13.7, 0.5)
    assert np.allclose(a, b, atol=1e-12)


def test_kl_regularized_known_value():
    got = risk.kl_regularized_risk([0.0, 1.0], 1.0)
    assert got == pytest.approx(np.log((1 + np.e) / 2), abs=1e-15)
    assert got == pytest.approx(0.620115, abs=5e-7)


def test_kl_regularized_constant_and_limit():
    assert risk.kl_regularized_risk([3.3] * 7, 0.2) == pytest.approx(3.3, abs=1e-12)
    v = np.array([0.1, 0.8, 0.4])
    assert risk.kl_regularized_risk(v, 1e6) == pytest.approx(v.mean(), abs=1e-6)


def test_kl_regularized_bounds_and_monotonicity():
    rng = CounterRng(57)
    for _ in range(50):
        v = rng.normals(8)
        taus = [0.05, 0.2, 1.0, 5.0]
        vals = [risk.kl_regularized_risk(v, t) for t in taus]
        for val in vals:
            assert v.mean() - 1e-12 <= val <= v.max() + 1e-12
        assert all(vals[i] >= vals[i + 1] - 1e-12 for i in range(len(vals) - 1))


def test_kl_constrained_constant_vector():
    value, _ = risk.kl_constrained_risk([2.5] * 6, 3.0, 6)
    assert value == pytest.approx(2.5, abs=1e-6)


def test_kl_constrained_matches_grid_oracle():
    rng = CounterRng(58)
    for _ in range(3):
        v = rng.uniforms(5)
        got, tau_star = risk.kl_constrained_risk(v, 2.0, 5)
        want = kl_constrained_grid(v, 2.0, 5)
        assert got == pytest.approx(want, abs=1e-6)
        assert tau_star > 0


def test_kl_constrained_rho_zero_gives_mean():
    rng = CounterRng(59)
    v = rng.normals(6)
    got, _ = risk.kl_constrained_risk(v, 0.0, 6)
    assert got == pytest.approx(v.mean(), abs=1e-6)
    with pytest.raises(ValueError):
        risk.kl_constrained_risk(v, -0.5, 6)


def test_chi2_constant_vector():
    value, weights = risk.chi2_dro_risk([1.5] * 4, 0.3, 4)
    assert value == pytest.approx(1.5, abs=1e-12)
    assert np.allclose(weights, 0.25, atol=1e-12)


def test_chi2_two_point_closed_form():
    value, weights = risk.chi2_dro_risk([0.0, 1.0], 0.08, 2)
    assert value == pytest.approx(0.5 + 0.5 * np.sqrt(0.08), abs=1e-9)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert (weights > 0).all()


def test_chi2_matches_grid_oracle_small_n():
    rng = CounterRng(60)
    for n in (2, 3, 4):
        for _ in range(3):
            v = rng.uniforms(n)
            rho = 0.05 + 0.3 * rng.uniforms(1)[0]
            got, weights = risk.chi2_dro_risk(v, rho, n)
            want = chi2_grid_max(v, rho)
            assert got == pytest.approx(want, abs=1e-5)
            assert weights.sum() == pytest.approx(1.0, abs=1e-9)
            assert (weights >= -1e-12).all()


def test_chi2_interior_closed_form():
    rng = CounterRng(61)
    checked = 0
    for _ in range(40):
        n = 3 + int(rng.uniforms(1)[0] * 6)
        v = rng.normals(n) * 0.2
        rho = 0.02 + 0.05 * rng.uniforms(1)[0]
        if not chi2_interior_holds(v, rho):
            continue
        got, weights = risk.chi2_dro_risk(v, rho, n)
        assert got == pytest.approx(chi2_interior_closed_form(v, rho), abs=1e-8)
        assert (weights > 0).all()
        checked += 1
    assert checked >= 10


def test_chi2_large_rho_puts_mass_on_max():
    v = np.array([0.1, 0.9, 0.4])
    value, weights = risk.chi2_dro_risk(v, 50.0, 3)
    assert value == pytest.approx(0.9, abs=1e-9)
    assert weights[1] == pytest.approx(1.0, abs=1e-9)


def test_shift_invariance_of_all_risks():
    rng = CounterRng(62)
    v = rng.normals(6)
    c = 4.2
    assert risk.cvar_topk(v + c, 3) == pytest.approx(risk.cvar_topk(v, 3) + c, abs=1e-10)
    assert risk.kl_regularized_risk(v + c, 0.4) == pytest.approx(
        risk.kl_regularized_risk(v, 0.4) + c, abs=1e-10
    )
    a, _ = risk.kl_constrained_risk(v + c, 1.5, 6)
    b, _ = risk.kl_constrained_risk(v, 1.5, 6)
    assert a == pytest.approx(b + c, abs=1e-5)
    a, _ = risk.chi2_dro_risk(v + c, 0.4, 6)
    b, _ = risk.chi2_dro_risk(v, 0.4, 6)
    assert a == pytest.approx(b + c, abs=1e-9)


def test_drrho_shift():
    assert np.array_equal(risk.drrho_shift([2.0, 3.0], [1.0, 5.0]), [1.0, -2.0])
    v = CounterRng(63).normals(5)
    assert np.allclose(risk.drrho_shift(v, v), 0.0)
    assert np.array_equal(risk.drrho_shift(v, np.zeros(5)), v)
    with pytest.raises(ValueError):
        risk.drrho_shift([1.0], [1.0, 2.0])


def test_shifted_risk_equals_unshifted_minus_constant_reference():
    rng = CounterRng(64)
    v = rng.normals(7)
    c = 0.73
    shifted = risk.drrho_shift(v, np.full(7, c))
    assert risk.kl_regularized_risk(shifted, 0.3) == pytest.approx(
        risk.kl_regularized_risk(v, 0.3) - c, abs=1e-10
    )


def test_risk_ops_accept_loss_vector_instances():
    lv = risk.LossVector(values=[0.0, 1.0, 0.5])
    assert risk.cvar_topk(lv, 2) == pytest.approx(0.75, abs=1e-15)
    assert risk.kl_regularized_risk(lv, 1.0) > 0


def test_cvar_topk_nondecreasing_as_k_shrinks():
    v = CounterRng(66).normals(9)
    vals = [risk.cvar_topk(v, k) for k in range(9, 0, -1)]
    assert all(vals[i] <= vals[i + 1] + 1e-12 for i in range(len(vals) - 1))


def test_evaluate_risk_dispatch():
    v = np.array([0.1, 0.9, 0.4])
    assert risk.evaluate_risk(risk.RiskSpec(kind="cvar_topk", k=2), v) == risk.cvar_topk(v, 2)
    assert risk.evaluate_risk(risk.RiskSpec(kind="kl_regularized", tau=0.5), v) == (
        risk.kl_regularized_risk(v, 0.5)
    )
    assert risk.evaluate_risk(risk.RiskSpec(kind="kl_constrained", rho=1.0), v) == (
        risk.kl_constrained_risk(v, 1.0, 3)[0]
    )
    assert risk.evaluate_risk(risk.RiskSpec(kind="chi2_constrained", rho=0.2), v) == (
        risk.chi2_dro_risk(v, 0.2, 3)[0]
    )


def test_softmax_and_lse_match_high_precision_direct():
    rng = CounterRng(65)
    for _ in range(25):
        m = 2 + int(rng.uniforms(1)[0] * 10)
        v = rng.normals(m) * 2
        tau = 0.2 + rng.uniforms(1)[0]
        assert np.max(np.abs(risk.softmax_weights(v, tau) - softmax_direct(v, tau))) < 1e-10
        assert abs(risk.kl_regularized_risk(v, tau) - log_mean_exp_direct(v, tau)) < 1e-10
