"""Per-anchor contrastive losses built from similarity-gap pairwise losses.

The pairwise loss of a negative j against anchor i is the similarity gap
s(i, j) - s(i, i); the reference-shifted variant subtracts the same gap
computed under a reference model. Each anchor aggregates its gaps with the
soft maximum tau * log-mean-exp, once per direction (image anchor over
text negatives, text anchor over image negatives). ``global_objective``
averages both directions over all anchors and serves as the exact
ground truth that the stochastic trainer is verified against.

Averaging set: "full" includes j = i (whose shifted gap is identically 0),
"exclude-anchor" drops it. The trainer's estimators target the
exclude-anchor variant, so gradient checks against it are exact; the full
variant is what makes target == reference give an objective of exactly 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IMAGE_SIDE = "image"
TEXT_SIDE = "text"

OVER_FULL = "full"
OVER_EXCLUDE = "exclude-anchor"


@dataclass
class AnchorLossBundle:
    """One anchor's aggregated loss and the per-negative losses behind it.

    ``losses`` always holds the negatives only (j != anchor); in full-set
    mode the aggregated ``value`` additionally averages the anchor's own
    zero term.
    """

    anchor_index: int
    direction: str
    losses: np.ndarray  # shifted (or plain) pairwise losses of the negatives
    value: float


def _check_square(s: np.ndarray, name: str = "s") -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"{name} must be a square similarity matrix, got {s.shape}")
    return s


def _check_index(i: int, n: int) -> None:
    if not 0 <= i < n:
        raise IndexError(f"index {i} out of range for {n} pairs")


def pairwise_loss(s: np.ndarray, i: int, j: int, direction: str = IMAGE_SIDE) -> float:
    """Similarity gap of negative j against anchor i's positive pair."""
    s = _check_square(s)
    _check_index(i, len(s))
    _check_index(j, len(s))
    if direction == IMAGE_SIDE:
        return float(s[i, j] - s[i, i])
    if direction == TEXT_SIDE:
        return float(s[j, i] - s[i, i])
    raise ValueError(f"direction must be {IMAGE_SIDE!r} or {TEXT_SIDE!r}")


def rho_pairwise_loss(
    s_target: np.ndarray,
    s_reference: np.ndarray,
    i: int,
    j: int,
    direction: str = IMAGE_SIDE,
) -> float:
    """Target gap minus reference gap for the same (i, j, direction)."""
    s_t = _check_square(s_target, "s_target")
    s_r = _check_square(s_reference, "s_reference")
    if s_t.shape != s_r.shape:
        raise ValueError(f"matrices differ in shape: {s_t.shape} vs {s_r.shape}")
    return pairwise_loss(s_t, i, j, direction) - pairwise_loss(s_r, i, j, direction)


def _gap_row(s: np.ndarray, i: int, direction: str) -> np.ndarray:
    """All pairwise losses of anchor i in one direction, as a length-n row."""
    if direction == IMAGE_SIDE:
        return s[i, :] - s[i, i]
    if direction == TEXT_SIDE:
        return s[:, i] - s[i, i]
    raise ValueError(f"direction must be {IMAGE_SIDE!r} or {TEXT_SIDE!r}")


def _lse_mean(losses: np.ndarray, tau: float) -> float:
    m = losses.max()
    return float(m + tau * np.log(np.mean(np.exp((losses - m) / tau))))


def _anchor_loss(
    gaps: np.ndarray, i: int, direction: str, tau: float, over: str
) -> AnchorLossBundle:
    if over == OVER_EXCLUDE:
        averaged = np.delete(gaps, i)
    elif over == OVER_FULL:
        averaged = gaps
    else:
        raise ValueError(f"over must be {OVER_FULL!r} or {OVER_EXCLUDE!r}")
    if averaged.size == 0:
        raise ValueError("anchor has an empty negative set")
    return AnchorLossBundle(
        anchor_index=i, direction=direction, losses=np.delete(gaps, i), value=_lse_mean(averaged, tau)
    )


def drrho_anchor_loss(
    s_target: np.ndarray,
    s_reference: np.ndarray,
    i: int,
    direction: str = IMAGE_SIDE,
    tau: float = 0.01,
    over: str = OVER_FULL,
) -> AnchorLossBundle:
    """Soft maximum of anchor i's reference-shifted gaps."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    s_t = _check_square(s_target, "s_target")
    s_r = _check_square(s_reference, "s_reference")
    if s_t.shape != s_r.shape:
        raise ValueError(f"matrices differ in shape: {s_t.shape} vs {s_r.shape}")
    _check_index(i, len(s_t))
    gaps = _gap_row(s_t, i, direction) - _gap_row(s_r, i, direction)
    return _anchor_loss(gaps, i, direction, tau, over)


def gcl_anchor_loss(
    s_target: np.ndarray,
    i: int,
    direction: str = IMAGE_SIDE,
    tau: float = 0.01,
    over: str = OVER_FULL,
) -> AnchorLossBundle:
    """Soft maximum of anchor i's plain gaps (no reference model)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    s_t = _check_square(s_target, "s_target")
    _check_index(i, len(s_t))
    return _anchor_loss(_gap_row(s_t, i, direction), i, direction, tau, over)


def global_objective(
    s_target: np.ndarray,
    s_reference: np.ndarray | None = None,
    tau: float = 0.01,
    over: str = OVER_FULL,
) -> float:
    """(1/n) sum over anchors of image-side plus text-side anchor losses.

    Reference-shifted when s_reference is given, plain otherwise. This is
    the exact objective the batch estimators approximate.
    """
    s_t = _check_square(s_target, "s_target")
    n = len(s_t)
    total = 0.0
    for i in range(n):
        for direction in (IMAGE_SIDE, TEXT_SIDE):
            if s_reference is None:
                total += gcl_anchor_loss(s_t, i, direction, tau, over).value
            else:
                total += drrho_anchor_loss(s_t, s_reference, i, direction, tau, over).value
    return total / n
