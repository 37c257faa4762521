"""Utility and consensus metrics over released estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "compute_are",
    "compute_ace",
    "are_by_timestamp",
    "ace_by_timestamp",
    "MetricsSummary",
    "summarize",
]


def _as_3d(estimates) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[:, :, None]
    if est.ndim != 3:
        raise ValueError(f"estimates must be (m, T) or (m, T, d), got shape {est.shape}")
    return est


def _truth_2d(truth, timestamps: int, d: int) -> np.ndarray:
    tr = np.asarray(truth, dtype=float)
    if tr.ndim == 1:
        tr = tr[:, None]
    if tr.shape != (timestamps, d):
        raise ValueError(f"truth shape {tr.shape} does not match estimates ({timestamps}, {d})")
    return tr


def are_by_timestamp(estimates, truth, floor: float = 1.0) -> np.ndarray:
    """Mean relative error per timestamp, averaged over servers and dimensions.

    Relative error of one release is |estimate - true| / max(true, floor);
    the floor keeps near-zero counts from exploding the ratio.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    est = _as_3d(estimates)
    tr = _truth_2d(truth, est.shape[1], est.shape[2])
    denom = np.maximum(tr, floor)[None, :, :]
    return (np.abs(est - tr[None, :, :]) / denom).mean(axis=(0, 2))


def compute_are(estimates, truth, floor: float = 1.0) -> float:
    """Average relative error over servers, timestamps, and dimensions."""
    return float(are_by_timestamp(estimates, truth, floor).mean())


def ace_by_timestamp(estimates) -> np.ndarray:
    """Mean absolute deviation from the cross-server mean, per timestamp."""
    est = _as_3d(estimates)
    center = est.mean(axis=0, keepdims=True)
    # the mean of m equal values is that value; summation rounding would
    # otherwise report a one-ulp disagreement for servers in exact consensus
    center = np.where((est == est[:1]).all(axis=0, keepdims=True), est[:1], center)
    return np.abs(est - center).mean(axis=(0, 2))


def compute_ace(estimates) -> float:
    """Average consensus error: how far servers disagree, averaged over the run."""
    return float(ace_by_timestamp(estimates).mean())


@dataclass(frozen=True)
class MetricsSummary:
    are: float
    ace: float
    are_trace: np.ndarray
    ace_trace: np.ndarray


def summarize(estimates, truth, floor: float = 1.0) -> MetricsSummary:
    are_trace = are_by_timestamp(estimates, truth, floor)
    ace_trace = ace_by_timestamp(estimates)
    return MetricsSummary(
        are=float(are_trace.mean()),
        ace=float(ace_trace.mean()),
        are_trace=are_trace,
        ace_trace=ace_trace,
    )
