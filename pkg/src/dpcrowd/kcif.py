"""Kalman-consensus information filtering over one-hop neighborhoods.

With a diagonal process-noise covariance and scalar observation coefficients
the d-dimensional filter decomposes into d independent scalar filters, so
every operation here works element-wise on arrays of any matching shape
(per-server vectors or stacked (m, d) blocks alike).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KcifParams",
    "KcifState",
    "NeighborMessage",
    "effective_variance",
    "prediction_gain",
    "predict",
    "initialize",
    "build_message",
    "fuse",
    "update",
    "update_from_delta",
    "message_num_bytes",
    "encode_message",
    "decode_message",
]

# Fallback prior weight for a server that starts with no usable observation.
UNINFORMED_VARIANCE_SCALE = 1e6


@dataclass(frozen=True)
class KcifParams:
    """Filter-wide constants.

    alpha scales the effective observation variance; consensus_step is the
    relative step size of the consensus correction; variance_floor keeps the
    effective variance strictly positive in noiseless configurations.
    """

    alpha: float = 1.0
    consensus_step: float = 0.05
    variance_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.consensus_step < 0:
            raise ValueError("consensus step must be non-negative")
        if self.variance_floor < 0:
            raise ValueError("variance floor must be non-negative")


@dataclass
class KcifState:
    """One server's filter state; arrays are per-dimension."""

    prior: np.ndarray
    prior_var: np.ndarray
    posterior: np.ndarray
    posterior_var: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class NeighborMessage:
    """One broadcast: the sender's prior plus its information contribution."""

    sender: int
    t: int
    prior: np.ndarray
    weighted_value: np.ndarray  # u = H z / R_hat, zero when the sender did not sample
    weight: np.ndarray  # U = H^2 / R_hat, zero when the sender did not sample

    def __post_init__(self) -> None:
        prior = np.atleast_1d(np.asarray(self.prior, dtype=float))
        u = np.atleast_1d(np.asarray(self.weighted_value, dtype=float))
        w = np.atleast_1d(np.asarray(self.weight, dtype=float))
        if not (prior.shape == u.shape == w.shape):
            raise ValueError("message fields must share one shape")
        if not (np.all(np.isfinite(prior)) and np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
            raise ValueError("message fields must be finite")
        if np.any(w < 0):
            raise ValueError("information weights must be non-negative")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "weighted_value", u)
        object.__setattr__(self, "weight", w)

    @property
    def d(self) -> int:
        return self.prior.shape[0]


def effective_variance(coefficient, eps_t, sensitivity, process_var, alpha: float = 1.0):
    """Combined variance of perturbation plus sensing noise on one aggregate.

    R_hat = alpha * (2 * (sensitivity / eps_t)^2 + coefficient^2 * process_var).
    Passing eps_t = inf drops the perturbation term (the non-private path).
    """
    coefficient = np.asarray(coefficient, dtype=float)
    eps_t = np.asarray(eps_t, dtype=float)
    process_var = np.asarray(process_var, dtype=float)
    if np.any(eps_t <= 0):
        raise ValueError("per-release budget must be positive (inf for non-private)")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    scale = sensitivity / eps_t
    perturb_var = np.where(np.isinf(eps_t), 0.0, 2.0 * scale * scale)
    out = alpha * (perturb_var + coefficient * coefficient * process_var)
    return out if out.ndim else float(out)


def prediction_gain(transition: np.ndarray) -> np.ndarray:
    """Per-dimension variance gain bound: squared row sums of |transition|.

    Exact for diagonal transitions; a conservative upper bound otherwise
    (per-dimension variances cannot carry cross terms).
    """
    g = np.abs(np.asarray(transition, dtype=float)).sum(axis=1)
    return g * g


def predict(posterior, posterior_var, transition, process_var):
    """Time update: propagate the posterior one step forward."""
    posterior = np.asarray(posterior, dtype=float)
    prior = posterior @ np.asarray(transition, dtype=float).T
    prior_var = prediction_gain(transition) * np.asarray(posterior_var, dtype=float) + process_var
    return prior, prior_var


def initialize(released, coefficient, rhat, transition, process_var):
    """First-timestamp prior from the first released observation.

    prior = released / coefficient with initial weight coefficient^2 / rhat;
    a server with no users starts at 0 with an uninformative variance.
    """
    released = np.asarray(released, dtype=float)
    rhat = np.asarray(rhat, dtype=float)
    process_var = np.asarray(process_var, dtype=float)
    coefficient = np.asarray(coefficient, dtype=float)
    safe = np.where(coefficient > 0, coefficient, 1.0)
    estimate = np.where(coefficient > 0, released / safe, 0.0)
    fallback = np.where(
        process_var > 0, UNINFORMED_VARIANCE_SCALE * process_var, UNINFORMED_VARIANCE_SCALE
    )
    m0 = np.where(coefficient > 0, coefficient * coefficient / rhat, fallback)
    prior_var = prediction_gain(transition) * m0 + process_var
    prior = estimate @ np.asarray(transition, dtype=float).T
    return prior, prior_var


def build_message(sender: int, t: int, prior, coefficient, released, rhat) -> NeighborMessage:
    """Assemble the broadcast for one sampling timestamp."""
    coefficient = np.asarray(coefficient, dtype=float)
    released = np.asarray(released, dtype=float)
    rhat = np.asarray(rhat, dtype=float)
    if np.any(rhat <= 0):
        raise ValueError("effective variance must be strictly positive")
    u = coefficient * released / rhat
    w = coefficient * coefficient / rhat
    return NeighborMessage(sender=sender, t=t, prior=np.asarray(prior, dtype=float),
                           weighted_value=u, weight=w)


def fuse(own: NeighborMessage | None, inbox: list[NeighborMessage]):
    """Sum information contributions over the closed neighborhood.

    A server that did not sample passes own=None and contributes nothing
    itself. Duplicate senders indicate a broken delivery layer.
    """
    messages = ([own] if own is not None else []) + list(inbox)
    if not messages:
        raise ValueError("nothing to fuse: no own message and empty inbox")
    senders = [msg.sender for msg in messages]
    if len(set(senders)) != len(senders):
        raise ValueError(f"duplicate sender in fusion inputs: {sorted(senders)}")
    d = messages[0].d
    y = np.zeros(d)
    w = np.zeros(d)
    for msg in messages:
        if msg.d != d:
            raise ValueError("mixed message dimensions in fusion inputs")
        y += msg.weighted_value
        w += msg.weight
    return y, w


def update_from_delta(prior, prior_var, fused_value, fused_weight, prior_delta, consensus_step):
    """Measurement-and-consensus update given a precomputed prior disagreement.

    prior_delta = sum over broadcasting neighbors j of (prior_j - prior_own).
    """
    prior = np.asarray(prior, dtype=float)
    prior_var = np.asarray(prior_var, dtype=float)
    fused_weight = np.asarray(fused_weight, dtype=float)
    posterior_var = 1.0 / (1.0 / prior_var + fused_weight)
    gain = consensus_step * prior_var / (np.abs(prior_var) + 1.0)
    posterior = (
        prior
        + posterior_var * (np.asarray(fused_value, dtype=float) - fused_weight * prior)
        + gain * np.asarray(prior_delta, dtype=float)
    )
    return posterior, posterior_var


def update(prior, prior_var, fused_value, fused_weight, neighbor_priors, consensus_step):
    """Per-server update; neighbor_priors are the priors received this round."""
    prior = np.asarray(prior, dtype=float)
    if len(neighbor_priors):
        stack = np.asarray(neighbor_priors, dtype=float)
        delta = stack.sum(axis=0) - stack.shape[0] * prior
    else:
        delta = np.zeros_like(prior)
    return update_from_delta(prior, prior_var, fused_value, fused_weight, delta, consensus_step)


# Canonical wire format: sender and timestamp as little-endian uint32, then
# one (prior, weighted_value, weight) float64 triple per dimension.
_HEADER = struct.Struct("<II")


def message_num_bytes(d: int) -> int:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return _HEADER.size + 24 * d


def encode_message(msg: NeighborMessage) -> bytes:
    body = struct.pack(
        f"<{3 * msg.d}d",
        *(x for k in range(msg.d) for x in (msg.prior[k], msg.weighted_value[k], msg.weight[k])),
    )
    return _HEADER.pack(msg.sender, msg.t) + body


def decode_message(blob: bytes) -> NeighborMessage:
    sender, t = _HEADER.unpack_from(blob, 0)
    body = blob[_HEADER.size:]
    if len(body) % 24 != 0 or not body:
        raise ValueError(f"malformed message body of {len(body)} bytes")
    d = len(body) // 24
    flat = struct.unpack(f"<{3 * d}d", body)
    triples = np.asarray(flat, dtype=float).reshape(d, 3)
    return NeighborMessage(
        sender=sender, t=t, prior=triples[:, 0],
        weighted_value=triples[:, 1], weight=triples[:, 2],
    )
