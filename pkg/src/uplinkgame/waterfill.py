"""Single-user water-filling best response and the best-response residual map."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import FEASIBILITY_TOL, NetworkInstance, aggregate_broadcast, check_profile

__all__ = [
    "InfeasibleMaskError",
    "WaterfillResult",
    "clamped_level",
    "water_fill",
    "best_response",
    "best_responses",
    "br_residual",
]


class InfeasibleMaskError(ValueError):
    """The per-channel caps cannot absorb the whole budget."""


@dataclass(frozen=True)
class WaterfillResult:
    allocation: np.ndarray
    water_level: float

    @property
    def active_set(self) -> frozenset:
        return frozenset(np.flatnonzero(self.allocation > 0).tolist())


def clamped_level(offset: np.ndarray, total: float, caps: np.ndarray) -> float:
    """Find ``L`` with ``sum(clip(L - offset, 0, caps)) == total``.

    The left-hand side is piecewise linear and nondecreasing in ``L`` with
    kinks at ``offset`` (slope +1) and ``offset + caps`` (slope -1), so the
    level is located exactly by walking the sorted kinks, then recomputed in
    closed form from the free set it identifies. Requires
    ``0 < total <= sum(caps)``.
    """
    finite = np.isfinite(caps)
    if not finite.any():
        return _free_level(offset, total)
    points = np.concatenate([offset, (offset + caps)[finite]])
    deltas = np.concatenate([np.ones(offset.size), -np.ones(int(finite.sum()))])
    order = np.argsort(points, kind="stable")
    points, deltas = points[order], deltas[order]
    slope = np.cumsum(deltas)
    # value of the sum at each kink
    values = np.concatenate([[0.0], np.cumsum(slope[:-1] * np.diff(points))])
    j = int(np.searchsorted(values, total, side="left"))
    if j == 0:
        level = points[0]
    elif j >= points.size:
        # past the last kink; a zero slope there means every channel is capped
        level = points[-1] if slope[-1] == 0 else points[-1] + (total - values[-1]) / slope[-1]
    else:
        level = points[j - 1] + (total - values[j - 1]) / slope[j - 1]

    # closed-form polish on the identified free set
    alloc = np.minimum(np.maximum(level - offset, 0.0), caps)
    free = (alloc > 0) & (alloc < caps)
    if free.any():
        capped = alloc >= caps
        level = (total - caps[capped].sum() + offset[free].sum()) / free.sum()
    return float(level)


@lru_cache(maxsize=64)
def _counts(k):
    return np.arange(1, k + 1, dtype=float)


def _free_level(offset, total):
    # uncapped case: level = (total + sum of the m smallest offsets) / m
    u = np.sort(offset)
    css = np.cumsum(u)
    m = _counts(u.size)
    # the free set is the largest prefix whose level clears its last offset
    m_star = int(np.count_nonzero((total + css) / m > u))
    return float((total + css[m_star - 1]) / m_star)


def water_fill(effective_noise, budget: float, mask=None) -> WaterfillResult:
    """Maximize ``sum_k log(1 + x_k / effective_noise_k)`` subject to
    ``sum(x) = budget`` and ``0 <= x <= mask``.

    Parameters
    ----------
    effective_noise : array_like, shape (K,)
        Interference plus noise divided by the user's own gain.
    budget : float
        Total power to distribute; always used in full.
    mask : array_like, optional
        Per-channel caps, ``inf`` meaning uncapped.

    Returns
    -------
    WaterfillResult
        ``allocation(k) = clip(level - effective_noise(k), 0, mask(k))``.
    """
    e = np.asarray(effective_noise, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("effective_noise must be a non-empty vector")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("effective_noise must be finite and strictly positive")
    if not (np.isfinite(budget) and budget > 0):
        raise ValueError("budget must be finite and positive")
    caps = np.full(e.shape, np.inf) if mask is None else np.asarray(mask, dtype=float)
    if caps.shape != e.shape or np.any(np.isnan(caps)) or np.any(caps <= 0):
        raise ValueError("mask must be a positive vector matching effective_noise")
    if caps.sum() < budget:
        raise InfeasibleMaskError(f"mask sums to {caps.sum():.6g} < budget {budget:.6g}")

    return _water_fill(e, budget, caps)


def _water_fill(e, budget, caps=None):
    # unchecked core, for callers that already validated their inputs;
    # caps=None is the uncapped fast path
    if caps is None:
        level = _free_level(e, budget)
        alloc = np.maximum(level - e, 0.0)
        # hand the rounding leftover to the largest entry so the budget is met
        j = int(np.argmax(alloc))
        alloc[j] = max(alloc[j] + (budget - alloc.sum()), 0.0)
        return WaterfillResult(alloc, level)
    level = clamped_level(e, budget, caps)
    alloc = np.minimum(np.maximum(level - e, 0.0), caps)
    free = np.flatnonzero(alloc < caps)
    if free.size:
        j = free[np.argmax(alloc[free])]
        alloc[j] = min(max(alloc[j] + (budget - alloc.sum()), 0.0), caps[j])
    return WaterfillResult(alloc, level)


def _row_caps(inst: NetworkInstance) -> list:
    """Per-user caps for ``_water_fill``: ``None`` rows when there is no mask."""
    if inst.mask is None:
        return [None] * inst.n_users
    return [None if np.all(np.isinf(row)) else row for row in inst.mask]


def _effective_noise(inst: NetworkInstance, total: np.ndarray, p: np.ndarray, i: int) -> np.ndarray:
    # user i only needs the broadcast total and its own row
    return (total - inst.gain[i] * p[i]) / inst.gain[i]


def best_response(inst: NetworkInstance, p, i: int) -> WaterfillResult:
    """Water-filling reply of user ``i`` against the other users' powers in ``p``."""
    if not (0 <= i < inst.n_users):
        raise IndexError(f"user index {i} out of range for {inst.n_users} users")
    p = check_profile(inst, p)
    total = aggregate_broadcast(inst, p)
    mask = None if inst.mask is None else inst.mask[i]
    return water_fill(_effective_noise(inst, total, p, i), inst.budget[i], mask)


def best_responses(inst: NetworkInstance, p) -> np.ndarray:
    """All users' best replies computed from the same snapshot ``p``, shape (N, K)."""
    p = check_profile(inst, p)
    total = aggregate_broadcast(inst, p)
    caps = _row_caps(inst)
    out = np.empty_like(p)
    for i in range(inst.n_users):
        e = _effective_noise(inst, total, p, i)
        out[i] = _water_fill(e, inst.budget[i], caps[i]).allocation
    return out


def br_residual(inst: NetworkInstance, p) -> np.ndarray:
    """``s(p) = Phi(p) - p``. Requires every user to spend exactly its budget."""
    p = check_profile(inst, p)
    slack = inst.budget - p.sum(axis=1)
    if np.any(np.abs(slack) > FEASIBILITY_TOL * np.maximum(1.0, inst.budget)):
        i = int(np.argmax(np.abs(slack)))
        raise ValueError(f"user {i} does not spend its budget (slack {slack[i]:.3g})")
    return best_responses(inst, p) - p
