"""Collision counts and sharing efficiency of a power profile."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkInstance, check_profile, sum_rate

__all__ = ["CollisionStats", "activity", "count_collisions", "efficiency"]

RELATIVE_ACTIVITY = 1e-6


def activity(inst: NetworkInstance, p, activity_threshold=None) -> np.ndarray:
    """Boolean (N, K) matrix of users active on each channel.

    The default threshold is ``1e-6 * budget_i / K`` per user, so rescaling
    power units leaves the pattern unchanged. A scalar or per-user array
    overrides it.
    """
    p = np.asarray(p, dtype=float)
    if activity_threshold is None:
        thr = RELATIVE_ACTIVITY * inst.budget / inst.n_channels
    else:
        thr = np.broadcast_to(np.asarray(activity_threshold, dtype=float), (inst.n_users,))
    return p > thr[:, None]


@dataclass(frozen=True)
class CollisionStats:
    collided_channels: int
    total_collisions: int
    threshold: object = None

    def to_dict(self) -> dict:
        return {"collided_channels": self.collided_channels,
                "total_collisions": self.total_collisions}


def count_collisions(inst: NetworkInstance, p, activity_threshold=None) -> CollisionStats:
    """A channel is collided when two or more users are active on it; ``n``
    users on one channel count as ``n(n-1)/2`` collisions."""
    p = check_profile(inst, p)
    n_active = activity(inst, p, activity_threshold).sum(axis=0)
    collided = int(np.count_nonzero(n_active >= 2))
    total = int(np.sum(n_active * (n_active - 1) // 2))
    thr = "relative" if activity_threshold is None else activity_threshold
    return CollisionStats(collided, total, thr)


def efficiency(inst: NetworkInstance, p, cert) -> float:
    """Sum rate under single-user decoding relative to the certified optimum.

    Can exceed 1 only by ``cert.gap_bound / cert.value``.
    """
    if cert.value <= 0:
        raise ValueError("certificate value must be positive")
    return sum_rate(inst, p) / cert.value
