"""Evaluation metrics and the verifiable empirical procedures: retrieval
accuracy, per-anchor loss variance, data-efficiency sweeps, and power-law
fits of error against compute.

Compute is counted in abstract units of trainable-parameter count times
samples seen. Any consistent unit works: rescaling compute by a constant
shifts the fitted log-intercept but leaves the exponent untouched, and the
cross-method comparisons here are about exponents.
"""

from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import EmbeddingCache, PairedDataset, build_reference_cache, generate_synthetic
from .encoder import batch_forward
from .errors import ConfigError
from .report import ExperimentReport
from .trainer import TrainConfig, make_variant, train

ERROR_CLIP = 1e-6  # keeps error rates inside the open unit interval for log fits


def recall_at_1(s_test: np.ndarray) -> float:
    """Fraction of anchors whose top similarity is their own pair, averaged
    over both retrieval directions. Ties resolve to the lowest index."""
    s = np.asarray(s_test, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"test similarity matrix must be square, got {s.shape}")
    if s.size == 0:
        raise ValueError("test similarity matrix is empty")
    idx = np.arange(len(s))
    image_hits = np.argmax(s, axis=1) == idx
    text_hits = np.argmax(s, axis=0) == idx
    return float(0.5 * (image_hits.mean() + text_hits.mean()))


@dataclass
class VarianceSummary:
    """Per-anchor pairwise-loss variances, summarized per direction."""

    image_variances: np.ndarray  # (b,) variance over negatives, image anchors
    text_variances: np.ndarray  # (b,) text anchors

    @property
    def image_mean(self) -> float:
        return float(self.image_variances.mean())

    @property
    def image_std(self) -> float:
        return float(self.image_variances.std())

    @property
    def text_mean(self) -> float:
        return float(self.text_variances.mean())

    @property
    def text_std(self) -> float:
        return float(self.text_variances.std())


def loss_variance(s_target: np.ndarray, s_reference: np.ndarray | None = None) -> VarianceSummary:
    """Variance over negatives of each anchor's pairwise loss (shifted by
    the reference when one is given), per direction."""
    s_t = np.asarray(s_target, dtype=np.float64)
    if s_t.ndim != 2 or s_t.shape[0] != s_t.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {s_t.shape}")
    b = len(s_t)
    if b < 3:
        raise ValueError("need at least 2 negatives per anchor (3 pairs)")
    gaps1 = s_t - np.diag(s_t)[:, None]
    gaps2 = s_t.T - np.diag(s_t)[:, None]
    if s_reference is not None:
        s_r = np.asarray(s_reference, dtype=np.float64)
        if s_r.shape != s_t.shape:
            raise ValueError(f"reference shape {s_r.shape} != target {s_t.shape}")
        gaps1 = gaps1 - (s_r - np.diag(s_r)[:, None])
        gaps2 = gaps2 - (s_r.T - np.diag(s_r)[:, None])
    mask = ~np.eye(b, dtype=bool)
    image_var = gaps1[mask].reshape(b, b - 1).var(axis=1)
    text_var = gaps2[mask].reshape(b, b - 1).var(axis=1)
    return VarianceSummary(image_variances=image_var, text_variances=text_var)


@dataclass
class ScalingPoint:
    compute: float
    error: float

    def __post_init__(self):
        if not self.compute > 0:
            raise ValueError("compute must be positive")
        if not 0.0 < self.error < 1.0:
            raise ValueError("error must lie in the open unit interval")


def clip_error(error: float) -> float:
    return float(np.clip(error, ERROR_CLIP, 1.0 - ERROR_CLIP))


def compute_units(model_params: int, samples_seen: int) -> float:
    """Abstract compute: trainable parameters times samples seen."""
    return float(model_params) * float(samples_seen)


def fit_scaling_law(points) -> tuple[float, float, float]:
    """Ordinary least squares of log(error) on log(compute).

    Returns (alpha, beta, rms_residual) for error = alpha * compute**beta.
    """
    points = list(points)
    if len(points) < 2:
        raise ValueError("need at least 2 points to fit")
    compute = np.array([p.compute for p in points], dtype=np.float64)
    error = np.array([p.error for p in points], dtype=np.float64)
    if (compute <= 0).any() or (error <= 0).any():
        raise ValueError("compute and error must be positive")
    if np.unique(compute).size < 2:
        raise ValueError("need at least 2 distinct compute values")
    x = np.log(compute)
    y = np.log(error)
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    log_alpha, beta = coef
    residuals = y - design @ coef
    return float(np.exp(log_alpha)), float(beta), float(np.sqrt(np.mean(residuals**2)))


def best_error_per_compute(groups: dict[float, list[float]]) -> list[ScalingPoint]:
    """Minimum error within each compute group, sorted by compute."""
    points = []
    for compute, errors in sorted(groups.items()):
        errors = list(errors)
        if not errors:
            raise ValueError(f"compute group {compute} is empty")
        points.append(ScalingPoint(compute=float(compute), error=min(errors)))
    return points


# ---------------------------------------------------------------------------
# pipelines


def evaluate_recall(model, dataset: PairedDataset, indices: np.ndarray | None = None) -> float:
    idx = dataset.test_indices if indices is None else np.asarray(indices, dtype=np.int64)
    if len(idx) < 2:
        raise ValueError("need at least 2 pairs to evaluate retrieval")
    fwd = batch_forward(model, dataset.xs[idx], dataset.ys[idx])
    return recall_at_1(fwd.s)


def worker_count() -> int:
    """Worker bound for sweeps: the DRRHO_THREADS env var, defaulting to
    hardware concurrency."""
    raw = os.environ.get("DRRHO_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"DRRHO_THREADS: not an integer: {raw!r}")
    return os.cpu_count() or 1


def _run_jobs(jobs: list, fn, workers: int | None = None) -> list:
    """Map fn over jobs, in parallel processes when allowed; results keep
    job order so downstream assembly is deterministic."""
    workers = worker_count() if workers is None else workers
    workers = min(workers, len(jobs))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            return list(pool.map(fn, jobs))
    except (OSError, ValueError):
        return [fn(job) for job in jobs]


def _sweep_job(args) -> tuple:
    method, fraction, seed, config, dataset, cache = args
    run_config = make_variant(config, method=method, train_fraction=fraction, seed=seed)
    _, run_report = train(run_config, dataset, cache)
    summary = run_report.summary
    return (method, fraction, seed, summary.get("recall_at_1", 0.0), summary.get("objective", 0.0))


def data_efficiency_sweep(
    config: TrainConfig,
    dataset: PairedDataset,
    cache: EmbeddingCache | None,
    fractions,
    methods=None,
    seeds=None,
) -> ExperimentReport:
    """Train one model per (method, fraction, seed) on nested subsets with a
    fixed step budget, and tabulate final retrieval accuracy.

    The report carries one summary row per (method, fraction), averaged
    over seeds; per-run values go into the series keyed by row index.
    """
    fractions = [float(f) for f in fractions]
    methods = [config.method] if methods is None else list(methods)
    seeds = [config.seed] if seeds is None else [int(s) for s in seeds]
    if any(not 0 < f <= 1 for f in fractions):
        raise ConfigError("fractions: every fraction must lie in (0, 1]")
    pool = dataset.train_indices
    for f in fractions:
        if int(np.floor(f * len(pool))) < 2 * config.batch_size:
            raise ConfigError(
                f"fractions: fraction {f} yields fewer than 2*batch_size={2 * config.batch_size} samples"
            )

    jobs = [
        (method, fraction, seed, config, dataset, cache)
        for method in methods
        for fraction in fractions
        for seed in seeds
    ]
    results = _run_jobs(jobs, _sweep_job)

    report = ExperimentReport(
        config_snapshot={**config.resolved(), "fractions": fractions, "methods": methods, "seeds": seeds},
        provenance={
            "dataset_hash": dataset.content_hash(),
            "cache_source_id": cache.source_id if cache is not None else "",
            "seed": config.seed,
        },
    )
    rows = []
    by_cell: dict[tuple[str, float], list[float]] = {}
    for method, fraction, seed, recall, objective in results:
        by_cell.setdefault((method, fraction), []).append(recall)
    for row, (method, fraction) in enumerate(
        (m, f) for m in methods for f in fractions
    ):
        recalls = by_cell[(method, fraction)]
        rows.append({"method": method, "fraction": fraction, "recall_at_1": float(np.mean(recalls))})
        report.add(row, f"recall_at_1/{method}/frac={fraction}", float(np.mean(recalls)))
        for k, r in enumerate(recalls):
            report.add(row, f"recall_at_1/{method}/frac={fraction}/seed={seeds[k]}", r)
    report.config_snapshot["rows"] = rows
    return report


def variance_reduction_trial(
    seed: int,
    n_target_pool: int = 192,
    d_x: int = 24,
    d_y: int = 20,
    d_latent: int = 6,
    noise_sigma: float = 0.25,
    embed_dim: int = 8,
    reference_steps: int = 300,
    target_steps: int = 150,
    eval_anchors: int = 96,
) -> dict[str, float]:
    """One seeded trial of the variance-reduction effect.

    A reference is trained on a 4x pool; a target is trained fresh on a
    quarter of it; then per-anchor pairwise-loss variances of the target
    are measured with and without the reference shift on an evaluation
    subset of the target's training data.
    """
    n = 4 * n_target_pool
    dataset = generate_synthetic(
        n=n + max(32, n // 8),
        d_x=d_x,
        d_y=d_y,
        d_latent=d_latent,
        noise_sigma=noise_sigma,
        test_fraction=max(32, n // 8) / (n + max(32, n // 8)),
        seed=seed,
    )
    ref_config = TrainConfig(
        method="fastclip", steps=reference_steps, batch_size=48, embed_dim=embed_dim, lr=5e-3, seed=seed + 1
    )
    ref_state, _ = train(ref_config, dataset)
    target_config = TrainConfig(
        method="fastclip",
        steps=target_steps,
        batch_size=48,
        embed_dim=embed_dim,
        lr=5e-3,
        train_fraction=0.25,
        seed=seed + 2,
    )
    target_state, _ = train(target_config, dataset)

    anchors = dataset.train_indices[: min(eval_anchors, n_target_pool)]
    s_target = batch_forward(target_state.model, dataset.xs[anchors], dataset.ys[anchors]).s
    s_reference = batch_forward(ref_state.model, dataset.xs[anchors], dataset.ys[anchors]).s
    plain = loss_variance(s_target)
    shifted = loss_variance(s_target, s_reference)
    return {
        "plain_image": plain.image_mean,
        "plain_text": plain.text_mean,
        "rho_image": shifted.image_mean,
        "rho_text": shifted.text_mean,
    }


def data_efficiency_trial(
    seed: int,
    n: int = 640,
    d_x: int = 24,
    d_y: int = 20,
    d_latent: int = 4,
    noise_sigma: float = 0.3,
    test_fraction: float = 0.2,
    ref_dim: int = 16,
    ref_steps: int = 800,
    target_steps: int = 150,
    batch: int = 48,
    lr: float = 5e-3,
) -> dict[str, float]:
    """One seeded data-efficiency comparison against a strong reference.

    Trains a reference on the full pool, then the reference-shifted method
    on half and on all of the pool, and the no-reference baseline on all of
    it, every run with the same step budget and learnable temperature.
    Returns final test retrieval accuracies.
    """
    dataset = generate_synthetic(n, d_x, d_y, d_latent, noise_sigma, test_fraction, seed=seed)
    ref_model, cache = train_reference(
        dataset, embed_dim=ref_dim, steps=ref_steps, batch_size=64, lr=lr, seed=seed + 1000
    )
    base = TrainConfig(
        steps=target_steps,
        batch_size=batch,
        embed_dim=8,
        lr=lr,
        seed=seed,
        eval_subset=32,
        tau_learnable=True,
    )
    out = {"reference": evaluate_recall(ref_model, dataset)}
    runs = (
        ("drrho_half", "drrho-clip", 0.5),
        ("drrho_full", "drrho-clip", 1.0),
        ("baseline_full", "fastclip", 1.0),
    )
    for key, method, fraction in runs:
        config = make_variant(base, method=method, train_fraction=fraction)
        _, run_report = train(config, dataset, cache if method == "drrho-clip" else None)
        out[key] = run_report.summary["recall_at_1"]
    return out


def _scaling_job(args) -> tuple:
    method, embed_dim, steps, fraction, config, dataset, cache = args
    run_config = make_variant(
        config, method=method, embed_dim=embed_dim, steps=steps, train_fraction=fraction
    )
    state, run_report = train(run_config, dataset, cache if run_config.needs_reference else None)
    recall = run_report.summary.get("recall_at_1", 0.0)
    params = state.model.w1.size + state.model.w2.size
    samples = run_config.effective_steps * run_config.batch_size
    return (method, compute_units(params, samples), clip_error(1.0 - recall))


def scaling_suite(
    dataset: PairedDataset,
    cache: EmbeddingCache,
    methods=("drrho-clip", "openclip"),
    embed_dims=(4, 8, 16),
    step_budgets=(40, 110, 300),
    fractions=(0.6, 1.0),
    base_config: TrainConfig | None = None,
) -> dict[str, dict]:
    """Error-versus-compute grids per method, with fitted power laws.

    For each method and model size, every step budget is run at several
    dataset fractions; the best error per compute value forms the points
    for the log-log fit (mirroring best-over-dataset-size selection).
    """
    config = base_config or TrainConfig(batch_size=32, lr=5e-3, eval_subset=32)
    jobs = [
        (method, d, steps, fraction, config, dataset, cache)
        for method in methods
        for d in embed_dims
        for steps in step_budgets
        for fraction in fractions
    ]
    results = _run_jobs(jobs, _scaling_job)
    out: dict[str, dict] = {}
    for method in methods:
        groups: dict[float, list[float]] = {}
        for m, compute, error in results:
            if m == method:
                groups.setdefault(compute, []).append(error)
        points = best_error_per_compute(groups)
        alpha, beta, residual = fit_scaling_law(points)
        out[method] = {
            "points": points,
            "alpha": alpha,
            "beta": beta,
            "residual": residual,
        }
    return out


def train_reference(
    dataset: PairedDataset,
    embed_dim: int = 10,
    steps: int = 400,
    batch_size: int = 48,
    lr: float = 5e-3,
    seed: int = 1000,
):
    """Train a no-reference model on the full pool and cache its embeddings;
    the standard way benchmarks obtain a strong reference."""
    config = TrainConfig(
        method="fastclip", steps=steps, batch_size=batch_size, embed_dim=embed_dim, lr=lr, seed=seed
    )
    state, _ = train(config, dataset)
    return state.model, build_reference_cache(dataset, state.model)
