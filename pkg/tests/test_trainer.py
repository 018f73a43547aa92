"""Estimator maintenance, gradient estimators, optimizer, and the loop."""

import numpy as np
import pytest

from drrho import contrastive, data, encoder, trainer
from drrho.errors import ConfigError, StateError, TrainingError

from oracles import finite_diff_matrix, rel_err


def _setup(n=10, d=4, dx=6, dy=5, tau=0.5, seed=0, **cfg_overrides):
    ds = data.generate_synthetic(n, dx, dy, 3, 0.2, 0.0, seed=seed)
    ref = encoder.init_model(d, dx, dy, seed=seed + 50, tau=tau)
    cache = data.build_reference_cache(ds, ref)
    model = encoder.init_model(d, dx, dy, seed=seed + 1, tau=tau)
    defaults = dict(method="drrho-clip", batch_size=n, embed_dim=d, tau=tau, seed=seed)
    defaults.update(cfg_overrides)
    config = trainer.TrainConfig(**defaults)
    state = trainer.init_trainer_state(model, n, config)
    return ds, cache, state, config


def _batch_means(state, batch, s_t, s_r):
    b = len(batch)
    _, q1, _, q2 = trainer.shifted_gap_exponentials(s_t, s_r, state.model.tau)
    return q1.sum(axis=1) / (b - 1), q2.sum(axis=1) / (b - 1)


def test_update_u_gamma_one_equals_batch_average():
    ds, cache, state, _ = _setup(gamma=1.0)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    u1, u2 = trainer.update_u(state, batch, fwd.s, s_r)
    m1, m2 = _batch_means(state, batch, fwd.s, s_r)
    assert np.allclose(u1, m1, atol=0) and np.allclose(u2, m2, atol=0)


def test_update_u_gamma_zero_is_noop():
    ds, cache, state, _ = _setup(gamma=1.0)
    state.gamma = 0.0
    state.u1[:] = 0.7
    state.u2[:] = 0.4
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    trainer.update_u(state, batch, fwd.s, cache.similarity(batch))
    assert (state.u1 == 0.7).all() and (state.u2 == 0.4).all()


def test_update_u_two_step_hand_recurrence():
    ds, cache, state, _ = _setup(gamma=0.5)
    u0 = 0.3
    state.u1[:] = u0
    state.u2[:] = u0
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    m1, m2 = _batch_means(state, batch, fwd.s, s_r)
    trainer.update_u(state, batch, fwd.s, s_r)
    trainer.update_u(state, batch, fwd.s, s_r)  # same step, same losses
    assert np.allclose(state.u1[batch], 0.25 * u0 + 0.75 * m1, atol=1e-15)
    assert np.allclose(state.u2[batch], 0.25 * u0 + 0.75 * m2, atol=1e-15)


def test_update_u_first_touch_and_untouched_entries():
    ds, cache, state, _ = _setup(gamma=0.5)
    batch = np.arange(4)  # partial batch
    fwd = encoder.batch_forward(state.model, ds.xs[batch], ds.ys[batch])
    s_r = cache.similarity(batch)
    m1, _ = _batch_means(state, batch, fwd.s, s_r)
    trainer.update_u(state, batch, fwd.s, s_r)
    # cold indices take the full average despite gamma=0.5
    assert np.allclose(state.u1[batch], m1, atol=0)
    assert (state.u1[4:] == 0).all() and (state.u2[4:] == 0).all()


def test_update_u_rejects_singleton_batch():
    ds, cache, state, _ = _setup()
    with pytest.raises(ValueError):
        trainer.update_u(state, np.array([3]), np.array([[1.0]]), None)


def test_u_positivity_and_bound():
    ds, cache, state, _ = _setup(gamma=0.7)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    gaps1, _, gaps2, _ = trainer.shifted_gap_exponentials(fwd.s, s_r, state.model.tau)
    trainer.update_u(state, batch, fwd.s, s_r)
    bound = np.exp(max(gaps1.max(), gaps2.max()) / state.model.tau)
    assert (state.u1[batch] > 0).all() and (state.u2[batch] > 0).all()
    assert (state.u1[batch] <= bound + 1e-12).all()


def test_estimator_consistency_at_gamma_one_over_steps():
    # full-dataset batches with gamma 1: u tracks the exact inner mean at
    # every step even as the model moves
    ds, cache, state, config = _setup(gamma=1.0, epsilon=0.0)
    batch = np.arange(ds.n)
    for _ in range(3):
        fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
        s_r = cache.similarity(batch)
        trainer.update_u(state, batch, fwd.s, s_r)
        m1, m2 = _batch_means(state, batch, fwd.s, s_r)
        assert np.max(np.abs(state.u1 - m1)) < 1e-12
        assert np.max(np.abs(state.u2 - m2)) < 1e-12
        grads = trainer.gradient_estimator(state, batch, ds.xs, ds.ys, s_r, fwd=fwd)
        trainer.optimizer_step(state, grads)


def test_gradient_estimator_requires_fresh_u():
    ds, cache, state, _ = _setup()
    batch = np.arange(ds.n)
    with pytest.raises(StateError):
        trainer.gradient_estimator(state, batch, ds.xs, ds.ys)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    trainer.update_u(state, batch, fwd.s, s_r)
    trainer.gradient_estimator(state, batch, ds.xs, ds.ys, s_r, fwd=fwd)
    state.step += 1  # stale now
    with pytest.raises(StateError):
        trainer.gradient_estimator(state, batch, ds.xs, ds.ys, s_r, fwd=fwd)


def _exact_objective_fn(ds, s_r, tau, which, other_w):
    def f(w):
        if which == "w1":
            model = encoder.TwoTowerModel(w1=w, w2=other_w, tau=tau)
        else:
            model = encoder.TwoTowerModel(w1=other_w, w2=w, tau=tau)
        s = encoder.similarity_batch(model, ds.xs, ds.ys)
        return contrastive.global_objective(s, s_r, tau=tau, over=contrastive.OVER_EXCLUDE)

    return f


def test_gradient_matches_finite_differences_of_exact_objective():
    ds, cache, state, _ = _setup(n=12, gamma=1.0, epsilon=0.0, tau=0.5, seed=3)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    trainer.update_u(state, batch, fwd.s, s_r)
    grads = trainer.gradient_estimator(state, batch, ds.xs, ds.ys, s_r, fwd=fwd)
    model = state.model
    fd1 = finite_diff_matrix(_exact_objective_fn(ds, s_r, 0.5, "w1", model.w2), model.w1)
    fd2 = finite_diff_matrix(_exact_objective_fn(ds, s_r, 0.5, "w2", model.w1), model.w2)
    assert rel_err(grads["w1"], fd1) <= 1e-4
    assert rel_err(grads["w2"], fd2) <= 1e-4


def test_gradient_reference_uniform_offdiag_shift_cancels():
    # scaling every exponential by a constant cancels against u when eps=0
    ds, cache, state, _ = _setup(gamma=1.0, epsilon=0.0)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    trainer.update_u(state, batch, fwd.s, s_r)
    base = trainer.gradient_estimator(state, batch, ds.xs, ds.ys, s_r, fwd=fwd)

    shifted = s_r + 0.31 * (1.0 - np.eye(ds.n))
    state2 = trainer.init_trainer_state(state.model.copy(), ds.n, _setup()[3])
    state2.gamma, state2.epsilon = 1.0, 0.0
    trainer.update_u(state2, batch, fwd.s, shifted)
    got = trainer.gradient_estimator(state2, batch, ds.xs, ds.ys, shifted, fwd=fwd)
    assert rel_err(got["w1"], base["w1"]) < 1e-12
    assert rel_err(got["w2"], base["w2"]) < 1e-12


def test_gradient_self_reference_closed_form():
    # target == reference: all exponentials are 1, u = 1, so the gradient is
    # the plain mean of pairwise similarity-gradient gaps over both sides
    ds, cache, state, _ = _setup(n=6, gamma=1.0, epsilon=0.0)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    trainer.update_u(state, batch, fwd.s, fwd.s)
    got = trainer.gradient_estimator(state, batch, ds.xs, ds.ys, fwd.s, fwd=fwd)
    n = ds.n
    want1 = np.zeros_like(state.model.w1)
    want2 = np.zeros_like(state.model.w2)
    for i in range(n):
        gii_1, gii_2 = encoder.similarity_grad(state.model, ds.xs[i], ds.ys[i])
        for j in range(n):
            if j == i:
                continue
            gij_1, gij_2 = encoder.similarity_grad(state.model, ds.xs[i], ds.ys[j])
            gji_1, gji_2 = encoder.similarity_grad(state.model, ds.xs[j], ds.ys[i])
            want1 += (gij_1 - gii_1) + (gji_1 - gii_1)
            want2 += (gij_2 - gii_2) + (gji_2 - gii_2)
    want1 /= n * (n - 1)
    want2 /= n * (n - 1)
    assert rel_err(got["w1"], want1) < 1e-10
    assert rel_err(got["w2"], want2) < 1e-10


def test_tau_gradient_zero_losses_and_mode_guard():
    ds, cache, state, _ = _setup(gamma=1.0, epsilon=0.0, tau_learnable=True, rho_tau=11.0)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    trainer.update_u(state, batch, fwd.s, fwd.s)
    assert trainer.tau_gradient(state, batch, fwd.s, fwd.s) == pytest.approx(22.0, abs=1e-12)
    state.tau_learnable = False
    with pytest.raises(StateError):
        trainer.tau_gradient(state, batch, fwd.s, fwd.s)


def test_tau_gradient_matches_finite_differences():
    from oracles import finite_diff_scalar

    ds, cache, state, _ = _setup(n=12, gamma=1.0, epsilon=0.0, tau=0.4, seed=5, tau_learnable=True, rho_tau=2.0)
    batch = np.arange(ds.n)
    fwd = encoder.batch_forward(state.model, ds.xs, ds.ys)
    s_r = cache.similarity(batch)
    trainer.update_u(state, batch, fwd.s, s_r)
    got = trainer.tau_gradient(state, batch, fwd.s, s_r)

    def objective(tau):
        return (
            contrastive.global_objective(fwd.s, s_r, tau=tau, over=contrastive.OVER_EXCLUDE)
            + 2.0 * tau * state.rho_tau
        )

    fd = finite_diff_scalar(objective, 0.4)
    assert abs(got - fd) / max(1e-8, abs(fd)) <= 1e-4


def test_tau_clamp_at_floor():
    ds, cache, state, _ = _setup(tau_learnable=True)
    state.model.tau = state.tau_min + 1e-5
    state.base_lr = 10.0  # force a huge update
    trainer.optimizer_step(state, {"tau": np.array([100.0])})
    assert state.model.tau == state.tau_min


def test_optimizer_zero_gradient_cases():
    ds, cache, state, _ = _setup(weight_decay=0.0)
    w1_before = state.model.w1.copy()
    trainer.optimizer_step(state, {"w1": np.zeros_like(w1_before)})
    assert np.array_equal(state.model.w1, w1_before)
    assert state.step == 1

    ds, cache, state, _ = _setup(weight_decay=0.1)
    w1_before = state.model.w1.copy()
    lr = state.lr_at(0)
    trainer.optimizer_step(state, {"w1": np.zeros_like(w1_before)})
    assert np.allclose(state.model.w1, w1_before * (1 - lr * 0.1), atol=1e-15)


def test_optimizer_single_step_hand_formula():
    ds, cache, state, _ = _setup(weight_decay=0.0)
    g = encoder.init_model(state.model.d, ds.d_x, ds.d_y, seed=123).w1  # arbitrary values
    w_before = state.model.w1.copy()
    lr = state.lr_at(0)
    trainer.optimizer_step(state, {"w1": g})
    want = w_before - lr * g / (np.abs(g) + state.opt_eps)
    assert np.allclose(state.model.w1, want, atol=1e-12)


def test_optimizer_rejects_non_finite():
    ds, cache, state, _ = _setup()
    bad = np.full_like(state.model.w1, np.nan)
    with pytest.raises(TrainingError):
        trainer.optimizer_step(state, {"w1": bad})


def test_lr_schedule_warmup_then_cosine_to_zero():
    ds, cache, state, _ = _setup()
    state.base_lr, state.warmup_steps, state.total_steps = 1.0, 10, 100
    assert state.lr_at(0) == pytest.approx(0.1)
    assert state.lr_at(9) == pytest.approx(1.0)
    assert state.lr_at(10) == pytest.approx(1.0)
    assert state.lr_at(100) == pytest.approx(0.0, abs=1e-12)
    assert state.lr_at(55) == pytest.approx(0.5, abs=1e-12)


def test_train_deterministic_and_t0():
    ds = data.generate_synthetic(48, 12, 10, 4, 0.2, 0.25, seed=2)
    ref = encoder.init_model(6, 12, 10, seed=77)
    cache = data.build_reference_cache(ds, ref)
    config = trainer.TrainConfig(method="drrho-clip", steps=25, batch_size=12, embed_dim=6, lr=5e-3, seed=9)
    s1, r1 = trainer.train(config, ds, cache)
    s2, r2 = trainer.train(config, ds, cache)
    assert s1.model.w1.tobytes() == s2.model.w1.tobytes()
    assert s1.model.w2.tobytes() == s2.model.w2.tobytes()
    assert r1.to_json_dict() == r2.to_json_dict()

    config0 = trainer.TrainConfig(method="drrho-clip", steps=0, batch_size=12, embed_dim=6, seed=9)
    s0, r0 = trainer.train(config0, ds, cache)
    assert s0.step == 0
    assert r0.series == []
    init = encoder.init_model(6, 12, 10, seed=9, tau=config0.tau)
    assert np.array_equal(s0.model.w1, init.w1)


def test_train_monitored_descent():
    ds = data.generate_synthetic(64, 16, 14, 5, 0.2, 0.0, seed=4)
    ref = encoder.init_model(8, 16, 14, seed=88)
    cache = data.build_reference_cache(ds, ref)
    config = trainer.TrainConfig(
        method="drrho-clip", steps=200, batch_size=16, embed_dim=8, lr=5e-3, tau=0.1, seed=1
    )
    init_model_ = encoder.init_model(8, 16, 14, seed=1, tau=0.1)
    batch = ds.train_indices
    s_ref = cache.similarity(batch)

    def exact(model):
        s = encoder.similarity_batch(model, ds.xs[batch], ds.ys[batch])
        return contrastive.global_objective(s, s_ref, tau=0.1, over=contrastive.OVER_EXCLUDE)

    start = exact(init_model_)
    state, _ = trainer.train(config, ds, cache)
    end = exact(state.model)
    assert end < start


def test_train_cache_mismatch_rejected():
    ds = data.generate_synthetic(32, 12, 10, 4, 0.2, 0.25, seed=2)
    other = data.generate_synthetic(32, 12, 10, 4, 0.2, 0.25, seed=3)
    ref = encoder.init_model(6, 12, 10, seed=77)
    cache_other = data.build_reference_cache(other, ref)
    config = trainer.TrainConfig(method="drrho-clip", steps=5, batch_size=8, embed_dim=6)
    with pytest.raises(ConfigError):
        trainer.train(config, ds, cache_other)


def test_train_missing_cache_rejected():
    ds = data.generate_synthetic(32, 12, 10, 4, 0.2, 0.25, seed=2)
    config = trainer.TrainConfig(method="drrho-clip", steps=5, batch_size=8, embed_dim=6)
    with pytest.raises(ConfigError):
        trainer.train(config, ds, None)


def test_checkpoint_round_trip(tmp_path):
    ds = data.generate_synthetic(32, 12, 10, 4, 0.2, 0.25, seed=2)
    ref = encoder.init_model(6, 12, 10, seed=77)
    cache = data.build_reference_cache(ds, ref)
    config = trainer.TrainConfig(method="drrho-clip", steps=8, batch_size=8, embed_dim=6, seed=5)
    state, _ = trainer.train(config, ds, cache)
    path = tmp_path / "t.ckpt"
    trainer.save_checkpoint(state, path)
    back = trainer.load_checkpoint(path)
    assert back.step == state.step
    assert back.model.w1.tobytes() == state.model.w1.tobytes()
    assert back.u1.tobytes() == state.u1.tobytes()
    assert back.u2.tobytes() == state.u2.tobytes()
    for key in state.moments:
        assert back.moments[key].tobytes() == state.moments[key].tobytes()
    assert back.gamma == state.gamma and back.rho_tau == state.rho_tau


def test_config_validation_names_field():
    with pytest.raises(ConfigError, match="gamma"):
        trainer.TrainConfig(gamma=0.0).validate()
    with pytest.raises(ConfigError, match="method"):
        trainer.TrainConfig(method="bogus").validate()
    with pytest.raises(ConfigError, match="lam"):
        trainer.TrainConfig(lam=1.5).validate()
