"""Stochastic training of the two-tower model against the global objective.

The global contrastive objective averages a soft maximum of (optionally
reference-shifted) similarity gaps per anchor; its inner mean over an
anchor's negatives cannot be estimated unbiasedly from a mini batch alone.
Following the moving-average estimator approach, each pair i carries two
scalars u1[i], u2[i] tracking the inner mean of exponentiated gaps for its
image-side and text-side anchor losses:

    u[i] <- (1 - gamma) * u[i] + gamma * mean_over_batch_negatives exp(gap / tau)

The parameter gradient then weights each anchor's negatives by
exp(gap/tau) / (epsilon + u[i]), which at gamma = 1 with full-dataset
batches is exactly the gradient of the exclude-anchor global objective.
Temperature can be fixed or learned; the learnable variant adds a
2 * tau * rho penalty and its own closed-form gradient.

Everything is deterministic given (config, seed): batches come from a
counter-based shuffle, and the optimizer is a from-scratch decoupled
weight-decay Adam with linear warmup and cosine decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines, container
from .contrastive import OVER_EXCLUDE, global_objective
from .data import EmbeddingCache, PairedDataset
from .encoder import BatchForward, TwoTowerModel, batch_forward, init_model, similarity_backward
from .errors import ConfigError, FormatError, StateError, TrainingError
from .report import ExperimentReport
from .rng import CounterRng

METHODS = ("openclip", "fastclip", "drrho-clip", "jest", "jest-topk")
_U_METHODS = ("fastclip", "drrho-clip")

_STREAM_BATCHES = 10

# Mini-batch descent on tiny models is insensitive to the exact Adam
# constants; these follow common contrastive-pretraining practice.
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.98
DEFAULT_OPT_EPS = 1e-8
DEFAULT_WEIGHT_DECAY = 0.1

DEFAULT_TAU = 0.01
DEFAULT_TAU_INIT = 0.07
DEFAULT_TAU_MIN = 0.005
DEFAULT_TAU_LR_SCALE = 0.25
DEFAULT_RHO_TAU = 11.0
DEFAULT_GAMMA = 0.8
DEFAULT_EPSILON = 1e-8
DEFAULT_LAMBDA = 0.25
DEFAULT_JEST_RATIO = 0.2
DEFAULT_JEST_CHUNKS = 2
DEFAULT_JEST_ITER_MULTIPLIER = 1.87


@dataclass
class TrainConfig:
    method: str = "drrho-clip"
    steps: int = 200
    batch_size: int = 32
    embed_dim: int = 8
    lr: float = 1e-2
    warmup_steps: int | None = None  # default: 10% of effective steps
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    opt_eps: float = DEFAULT_OPT_EPS
    tau: float = DEFAULT_TAU
    tau_learnable: bool | None = None  # default: per-method convention
    tau_init: float = DEFAULT_TAU_INIT
    tau_min: float = DEFAULT_TAU_MIN
    tau_lr_scale: float = DEFAULT_TAU_LR_SCALE
    rho_tau: float = DEFAULT_RHO_TAU
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON
    distill: bool = False
    lam: float = DEFAULT_LAMBDA
    distill_tau_ref: float | None = None  # default: the cache's source temperature
    jest_ratio: float = DEFAULT_JEST_RATIO
    jest_chunks: int = DEFAULT_JEST_CHUNKS
    jest_sample_tau: float = 1.0
    jest_iter_multiplier: float = DEFAULT_JEST_ITER_MULTIPLIER
    train_fraction: float = 1.0
    eval_every: int | None = None  # default: max(1, effective_steps // 50)
    eval_subset: int = 128
    seed: int = 0

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown method {self.method!r}, expected one of {METHODS}")
        checks = [
            ("steps", self.steps >= 0),
            ("batch_size", self.batch_size >= 2),
            ("embed_dim", self.embed_dim >= 1),
            ("lr", self.lr > 0),
            ("weight_decay", self.weight_decay >= 0),
            ("tau", self.tau > 0),
            ("tau_init", self.tau_init > 0),
            ("tau_min", self.tau_min > 0),
            ("rho_tau", self.rho_tau >= 0),
            ("gamma", 0 < self.gamma <= 1),
            ("epsilon", self.epsilon >= 0),
            ("lam", 0 <= self.lam <= 1),
            ("jest_ratio", 0 < self.jest_ratio <= 1),
            ("jest_chunks", self.jest_chunks >= 1),
            ("jest_iter_multiplier", self.jest_iter_multiplier > 0),
            ("train_fraction", 0 < self.train_fraction <= 1),
            ("eval_subset", self.eval_subset >= 4),
            ("seed", self.seed >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"{name}: invalid value {getattr(self, name)!r}")

    @property
    def needs_reference(self) -> bool:
        return self.method in ("drrho-clip", "jest", "jest-topk") or self.distill

    @property
    def learnable_tau(self) -> bool:
        if self.tau_learnable is not None:
            return self.tau_learnable
        # Baselines without a reference conventionally learn their
        # temperature; the reference-shifted method fixes it.
        return self.method in ("openclip", "fastclip", "jest", "jest-topk")

    @property
    def effective_steps(self) -> int:
        if self.method in ("jest", "jest-topk"):
            return int(round(self.steps * self.jest_iter_multiplier))
        return self.steps

    def resolved(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["tau_learnable"] = self.learnable_tau
        out["effective_steps"] = self.effective_steps
        out["warmup_steps"] = self.resolved_warmup()
        out["eval_every"] = self.resolved_eval_every()
        return out

    def resolved_warmup(self) -> int:
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, self.effective_steps // 10)

    def resolved_eval_every(self) -> int:
        if self.eval_every is not None:
            return self.eval_every
        return max(1, self.effective_steps // 50)


@dataclass
class TrainerState:
    model: TwoTowerModel
    u1: np.ndarray  # (n,) image-anchor inner-mean estimators
    u2: np.ndarray  # (n,) text-anchor inner-mean estimators
    step: int = 0
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON
    base_lr: float = 1e-2
    warmup_steps: int = 1
    total_steps: int = 1
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    opt_eps: float = DEFAULT_OPT_EPS
    tau_learnable: bool = False
    tau_min: float = DEFAULT_TAU_MIN
    tau_lr_scale: float = DEFAULT_TAU_LR_SCALE
    rho_tau: float = DEFAULT_RHO_TAU
    rng_seed: int = 0
    moments: dict[str, np.ndarray] = field(default_factory=dict)
    _u_token: tuple[int, int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=np.float64)
        self.u2 = np.asarray(self.u2, dtype=np.float64)
        if not self.moments:
            self.moments = {
                "m_w1": np.zeros_like(self.model.w1),
                "v_w1": np.zeros_like(self.model.w1),
                "m_w2": np.zeros_like(self.model.w2),
                "v_w2": np.zeros_like(self.model.w2),
                "m_tau": np.zeros(1),
                "v_tau": np.zeros(1),
            }

    def lr_at(self, step: int) -> float:
        if step < self.warmup_steps:
            return self.base_lr * (step + 1) / self.warmup_steps
        span = max(1, self.total_steps - self.warmup_steps)
        frac = min(1.0, (step - self.warmup_steps) / span)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def init_trainer_state(model: TwoTowerModel, n: int, config: TrainConfig) -> TrainerState:
    return TrainerState(
        model=model,
        u1=np.zeros(n),
        u2=np.zeros(n),
        gamma=config.gamma,
        epsilon=config.epsilon,
        base_lr=config.lr,
        warmup_steps=config.resolved_warmup(),
        total_steps=config.effective_steps,
        weight_decay=config.weight_decay,
        beta1=config.beta1,
        beta2=config.beta2,
        opt_eps=config.opt_eps,
        tau_learnable=config.learnable_tau,
        tau_min=config.tau_min,
        tau_lr_scale=config.tau_lr_scale,
        rho_tau=config.rho_tau,
        rng_seed=config.seed,
    )


def _batch_token(step: int, batch_indices: np.ndarray) -> tuple[int, int]:
    return (step, hash(tuple(int(i) for i in batch_indices)))


def shifted_gap_exponentials(
    s_target: np.ndarray, s_reference: np.ndarray | None, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-batch shifted gaps and their exponentials, diagonal zeroed.

    Returns (gaps1, q1, gaps2, q2): row a of gaps1 holds the image-anchor
    shifted gaps of batch position a against every text in the batch;
    gaps2 is the text-anchor analogue. q = exp(gaps / tau) with the
    diagonal (the anchor itself) zeroed out.
    """
    s_t = np.asarray(s_target, dtype=np.float64)
    diag_t = np.diag(s_t)
    gaps1 = s_t - diag_t[:, None]
    gaps2 = s_t.T - diag_t[:, None]
    if s_reference is not None:
        s_r = np.asarray(s_reference, dtype=np.float64)
        if s_r.shape != s_t.shape:
            raise ValueError(f"reference similarities shape {s_r.shape} != target {s_t.shape}")
        diag_r = np.diag(s_r)
        gaps1 = gaps1 - (s_r - diag_r[:, None])
        gaps2 = gaps2 - (s_r.T - diag_r[:, None])
    q1 = np.exp(gaps1 / tau)
    q2 = np.exp(gaps2 / tau)
    np.fill_diagonal(q1, 0.0)
    np.fill_diagonal(q2, 0.0)
    return gaps1, q1, gaps2, q2


def update_u(
    state: TrainerState,
    batch_indices: np.ndarray,
    s_target: np.ndarray,
    s_reference: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Moving-average update of u1/u2 for the batch members (others unchanged).

    Any index whose estimator is still at its cold-start value of 0 takes
    the full batch average (first touch), unless gamma is 0, which is a
    no-op by definition.
    """
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    b = len(batch_indices)
    if b < 2:
        raise ValueError("batch must contain at least 2 pairs (negatives required)")
    _, q1, _, q2 = shifted_gap_exponentials(s_target, s_reference, state.model.tau)
    mean1 = q1.sum(axis=1) / (b - 1)
    mean2 = q2.sum(axis=1) / (b - 1)
    g = state.gamma
    for pos, i in enumerate(batch_indices):
        g1 = 1.0 if (state.u1[i] == 0.0 and g > 0.0) else g
        g2 = 1.0 if (state.u2[i] == 0.0 and g > 0.0) else g
        state.u1[i] = (1.0 - g1) * state.u1[i] + g1 * mean1[pos]
        state.u2[i] = (1.0 - g2) * state.u2[i] + g2 * mean2[pos]
    state._u_token = _batch_token(state.step, batch_indices)
    return state.u1[batch_indices].copy(), state.u2[batch_indices].copy()


def _require_fresh_u(state: TrainerState, batch_indices: np.ndarray) -> None:
    if state._u_token != _batch_token(state.step, batch_indices):
        raise StateError("u estimators are stale: call update_u for this batch and step first")


def anchor_weight_coefficients(
    state: TrainerState,
    batch_indices: np.ndarray,
    s_target: np.ndarray,
    s_reference: np.ndarray | None = None,
) -> np.ndarray:
    """dObjectiveEstimate/dS for the batch: the coefficient on each
    similarity entry, combining both anchor directions."""
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    b = len(batch_indices)
    _, q1, _, q2 = shifted_gap_exponentials(s_target, s_reference, state.model.tau)
    w1 = 1.0 / (state.epsilon + state.u1[batch_indices])
    w2 = 1.0 / (state.epsilon + state.u2[batch_indices])
    scale = 1.0 / (b * (b - 1))
    coef = (w1[:, None] * q1) * scale
    coef += (w2[:, None] * q2).T * scale
    diag = -(w1 * q1.sum(axis=1) + w2 * q2.sum(axis=1)) * scale
    idx = np.arange(b)
    coef[idx, idx] += diag
    return coef


def gradient_estimator(
    state: TrainerState,
    batch_indices: np.ndarray,
    xs_batch: np.ndarray,
    ys_batch: np.ndarray,
    s_reference: np.ndarray | None = None,
    fwd: BatchForward | None = None,
) -> dict[str, np.ndarray]:
    """Parameter gradient G1 + G2 for the batch, through both towers.

    Requires update_u to have run for this exact batch and step; the
    weights 1/(epsilon + u) must be the freshly updated ones.
    """
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    _require_fresh_u(state, batch_indices)
    if fwd is None:
        fwd = batch_forward(state.model, xs_batch, ys_batch)
    coef = anchor_weight_coefficients(state, batch_indices, fwd.s, s_reference)
    return similarity_backward(fwd, xs_batch, ys_batch, coef)


def tau_gradient(
    state: TrainerState,
    batch_indices: np.ndarray,
    s_target: np.ndarray,
    s_reference: np.ndarray | None = None,
) -> float:
    """Gradient of the learnable-temperature objective in tau.

    Per side: mean_i [ log(eps + u_i) - weighted mean of gap/tau under the
    exponentiated-gap weights, normalized by (eps + u_i) ]; plus the
    2 * rho penalty shared by both sides.
    """
    if not state.tau_learnable:
        raise StateError("tau_gradient requires a learnable-temperature trainer")
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    _require_fresh_u(state, batch_indices)
    b = len(batch_indices)
    tau = state.model.tau
    gaps1, q1, gaps2, q2 = shifted_gap_exponentials(s_target, s_reference, tau)
    total = 0.0
    for u, q, gaps in ((state.u1, q1, gaps1), (state.u2, q2, gaps2)):
        denom = state.epsilon + u[batch_indices]
        inner = (q * gaps).sum(axis=1) / ((b - 1) * tau)
        total += float(np.mean(np.log(denom) - inner / denom))
    return total + 2.0 * state.rho_tau


def optimizer_step(state: TrainerState, grads: dict[str, np.ndarray]) -> TwoTowerModel:
    """Decoupled-weight-decay adaptive-moment update with bias correction.

    Applies the warmup/cosine learning rate at the current step, then
    increments the step counter. The temperature uses its own moment pair,
    a scaled learning rate, no weight decay, and a floor at tau_min.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise TrainingError(f"non-finite gradient for {name!r} ({bad} entries); training aborted")
    lr = state.lr_at(state.step)
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t

    def adam(m: np.ndarray, v: np.ndarray, g: np.ndarray) -> np.ndarray:
        m[...] = state.beta1 * m + (1.0 - state.beta1) * g
        v[...] = state.beta2 * v + (1.0 - state.beta2) * g * g
        return (m / bc1) / (np.sqrt(v / bc2) + state.opt_eps)

    model = state.model
    for name, w in (("w1", model.w1), ("w2", model.w2)):
        if name not in grads:
            continue
        direction = adam(state.moments[f"m_{name}"], state.moments[f"v_{name}"], grads[name])
        w *= 1.0 - lr * state.weight_decay
        w -= lr * direction
    if "tau" in grads:
        if not state.tau_learnable:
            raise StateError("tau gradient supplied but temperature is fixed")
        g = np.asarray(grads["tau"], dtype=np.float64).reshape(1)
        direction = adam(state.moments["m_tau"], state.moments["v_tau"], g)
        model.tau = max(state.tau_min, model.tau - lr * state.tau_lr_scale * float(direction[0]))
    state.step += 1
    return model


class _EpochSampler:
    """Without-replacement batches from a seeded shuffle; drops remainders."""

    def __init__(self, pool: np.ndarray, batch: int, rng: CounterRng):
        if batch > len(pool):
            raise ConfigError(f"batch_size: batch {batch} exceeds training pool {len(pool)}")
        self.pool = np.asarray(pool, dtype=np.int64)
        self.batch = batch
        self.rng = rng
        self._order = None
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._order is None or self._pos + self.batch > len(self.pool):
            self._order = self.pool[self.rng.permutation(len(self.pool))]
            self._pos = 0
        out = self._order[self._pos : self._pos + self.batch]
        self._pos += self.batch
        return out


def _train_pool(dataset: PairedDataset, fraction: float) -> np.ndarray:
    pool = dataset.train_indices
    keep = int(np.floor(fraction * len(pool)))
    return pool[:keep]


def train(
    config: TrainConfig,
    dataset: PairedDataset,
    cache: EmbeddingCache | None = None,
) -> tuple[TrainerState, ExperimentReport]:
    """Run the full training loop; pure function of (config, dataset, cache)."""
    config.validate()
    if config.needs_reference:
        if cache is None:
            raise ConfigError(f"method: {config.method!r} (distill={config.distill}) requires a reference cache")
        if cache.n != dataset.n:
            raise ConfigError(f"cache: holds {cache.n} pairs but dataset has {dataset.n}")
        if cache.dataset_id and cache.dataset_id != dataset.content_hash():
            raise ConfigError("cache: dataset_id does not match this dataset (id_hash mismatch)")

    pool = _train_pool(dataset, config.train_fraction)
    if len(pool) < config.batch_size:
        raise ConfigError(
            f"train_fraction: pool of {len(pool)} samples cannot fill batches of {config.batch_size}"
        )
    jest = config.method in ("jest", "jest-topk")
    super_size = int(round(config.batch_size / config.jest_ratio)) if jest else config.batch_size
    if jest and len(pool) < super_size:
        raise ConfigError(f"jest_ratio: pool of {len(pool)} cannot fill super batches of {super_size}")

    tau0 = config.tau_init if config.learnable_tau else config.tau
    model = init_model(config.embed_dim, dataset.d_x, dataset.d_y, config.seed, tau=tau0)
    state = init_trainer_state(model, dataset.n, config)
    report = ExperimentReport(
        config_snapshot=config.resolved(),
        provenance={
            "dataset_hash": dataset.content_hash(),
            "cache_source_id": cache.source_id if cache is not None else "",
            "seed": config.seed,
        },
    )
    steps = config.effective_steps
    if steps == 0:
        return state, report

    rng = CounterRng(config.seed, _STREAM_BATCHES)
    sampler = _EpochSampler(pool, super_size, rng)
    eval_every = config.resolved_eval_every()
    distill_tau_ref = config.distill_tau_ref
    if distill_tau_ref is None and cache is not None and cache.source_tau > 0:
        distill_tau_ref = cache.source_tau
    if distill_tau_ref is None:
        distill_tau_ref = DEFAULT_TAU

    for t in range(steps):
        batch = sampler.next_batch()
        if jest:
            s_t_super = batch_forward(model, dataset.xs[batch], dataset.ys[batch]).s
            s_r_super = cache.similarity(batch)
            outcome = baselines.jest_select(
                s_t_super,
                s_r_super,
                batch,
                ratio=config.jest_ratio,
                n_chunks=config.jest_chunks,
                mode="topk" if config.method == "jest-topk" else "sample",
                seed=config.seed + t,
                score_tau=model.tau,
                sample_tau=config.jest_sample_tau,
            )
            batch = outcome.selected
        xs_b, ys_b = dataset.xs[batch], dataset.ys[batch]
        fwd = batch_forward(model, xs_b, ys_b)
        needs_ref_sims = config.method == "drrho-clip" or config.distill
        s_ref = cache.similarity(batch) if needs_ref_sims else None

        grads: dict[str, np.ndarray]
        if config.method in _U_METHODS:
            shift_ref = s_ref if config.method == "drrho-clip" else None
            update_u(state, batch, fwd.s, shift_ref)
            grads = gradient_estimator(state, batch, xs_b, ys_b, shift_ref, fwd=fwd)
            tau_grad = tau_gradient(state, batch, fwd.s, shift_ref) if state.tau_learnable else None
        else:
            coef = baselines.infonce_grad_s(fwd.s, model.tau)
            grads = similarity_backward(fwd, xs_b, ys_b, coef)
            tau_grad = baselines.infonce_tau_gradient(fwd.s, model.tau) if state.tau_learnable else None

        if config.distill:
            dist_coef = baselines.distillation_grad_s(fwd.s, s_ref, model.tau, distill_tau_ref)
            dist_grads = similarity_backward(fwd, xs_b, ys_b, dist_coef)
            lam = config.lam
            for name in grads:
                grads[name] = (1.0 - lam) * grads[name] + lam * dist_grads[name]
            if tau_grad is not None:
                # distillation's temperature pull is intentionally excluded
                tau_grad = (1.0 - lam) * tau_grad
        if tau_grad is not None:
            grads["tau"] = np.asarray([tau_grad])

        optimizer_step(state, grads)

        if (t + 1) % eval_every == 0 or t == steps - 1:
            _record_metrics(report, state, config, dataset, cache, t + 1)
    return state, report


def _record_metrics(
    report: ExperimentReport,
    state: TrainerState,
    config: TrainConfig,
    dataset: PairedDataset,
    cache: EmbeddingCache | None,
    step: int,
) -> None:
    from . import experiments  # local import; experiments drives trainer for sweeps

    pool = _train_pool(dataset, config.train_fraction)
    subset = pool[: min(config.eval_subset, len(pool))]
    fwd = batch_forward(state.model, dataset.xs[subset], dataset.ys[subset])
    use_ref = config.method == "drrho-clip" and cache is not None
    s_ref = cache.similarity(subset) if use_ref else None
    if config.method in _U_METHODS:
        objective = global_objective(fwd.s, s_ref, tau=state.model.tau, over=OVER_EXCLUDE)
    else:
        objective = baselines.infonce_loss(fwd.s, state.model.tau)
    report.add(step, "objective", objective)
    if len(subset) >= 3:
        var = experiments.loss_variance(fwd.s, s_ref)
        report.add(step, "loss_variance_image", var.image_mean)
        report.add(step, "loss_variance_text", var.text_mean)
    test = dataset.test_indices
    if len(test) >= 2:
        s_test = batch_forward(state.model, dataset.xs[test], dataset.ys[test]).s
        report.add(step, "recall_at_1", experiments.recall_at_1(s_test))
    if state.tau_learnable:
        report.add(step, "tau", state.model.tau)


def save_checkpoint(state: TrainerState, path: str | Path) -> None:
    arrays = {
        "w1": state.model.w1,
        "w2": state.model.w2,
        "tau": np.asarray([state.model.tau]),
        "u1": state.u1,
        "u2": state.u2,
    }
    arrays.update(state.moments)
    container.write_container(
        path,
        container.KIND_TRAINER,
        arrays,
        meta={
            "step": state.step,
            "gamma": state.gamma,
            "epsilon": state.epsilon,
            "base_lr": state.base_lr,
            "warmup_steps": state.warmup_steps,
            "total_steps": state.total_steps,
            "weight_decay": state.weight_decay,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "opt_eps": state.opt_eps,
            "tau_learnable": state.tau_learnable,
            "tau_min": state.tau_min,
            "tau_lr_scale": state.tau_lr_scale,
            "rho_tau": state.rho_tau,
            "rng_seed": state.rng_seed,
            "model_id_hash": state.model.id_hash,
        },
    )


def load_checkpoint(path: str | Path) -> TrainerState:
    arrays, meta = container.read_container(path, expect_kind=container.KIND_TRAINER)
    required = {"w1", "w2", "tau", "u1", "u2", "m_w1", "v_w1", "m_w2", "v_w2", "m_tau", "v_tau"}
    missing = required - arrays.keys()
    if missing:
        raise FormatError(f"{path}: trainer checkpoint missing arrays {sorted(missing)}")
    model = TwoTowerModel(w1=arrays["w1"], w2=arrays["w2"], tau=float(arrays["tau"][0]))
    moments = {k: arrays[k] for k in ("m_w1", "v_w1", "m_w2", "v_w2", "m_tau", "v_tau")}
    return TrainerState(
        model=model,
        u1=arrays["u1"],
        u2=arrays["u2"],
        step=int(meta["step"]),
        gamma=float(meta["gamma"]),
        epsilon=float(meta["epsilon"]),
        base_lr=float(meta["base_lr"]),
        warmup_steps=int(meta["warmup_steps"]),
        total_steps=int(meta["total_steps"]),
        weight_decay=float(meta["weight_decay"]),
        beta1=float(meta["beta1"]),
        beta2=float(meta["beta2"]),
        opt_eps=float(meta["opt_eps"]),
        tau_learnable=bool(meta["tau_learnable"]),
        tau_min=float(meta["tau_min"]),
        tau_lr_scale=float(meta["tau_lr_scale"]),
        rho_tau=float(meta["rho_tau"]),
        rng_seed=int(meta["rng_seed"]),
        moments=moments,
    )


def make_variant(config: TrainConfig, **overrides) -> TrainConfig:
    """A copy of config with fields replaced (sweep helper)."""
    return replace(config, **overrides)
