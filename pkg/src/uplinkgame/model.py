"""Network data model and the closed-form quantities of the power allocation game.

All rates are in nats and carry the ``1/K`` bandwidth normalization, so that
``potential_gradient`` is exactly the gradient of ``potential``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

__all__ = [
    "FEASIBILITY_TOL",
    "InfeasibleProfileError",
    "NetworkInstance",
    "check_profile",
    "uniform_profile",
    "user_rate",
    "user_rates",
    "sum_rate",
    "potential",
    "potential_gradient",
    "ipn",
    "aggregate_broadcast",
]

FEASIBILITY_TOL = 1e-9


class InfeasibleProfileError(ValueError):
    """A power profile violates nonnegativity, a budget or a mask."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Static data of an N-user, K-channel single access point network.

    Parameters
    ----------
    gain : array_like, shape (N, K)
        Channel power gains ``|h_i(k)|^2``. Must be strictly positive.
    noise : array_like, shape (K,)
        Noise power ``n(k)`` on each channel.
    budget : array_like, shape (N,)
        Sum power budget of each user.
    mask : array_like, shape (N, K), optional
        Per-channel power caps. ``None`` means no cap (``+inf``).
    """

    gain: np.ndarray
    noise: np.ndarray
    budget: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        budget = np.atleast_1d(np.asarray(self.budget, dtype=float))
        if gain.ndim != 2:
            raise ValueError("gain must be an N x K matrix")
        n, k = gain.shape
        if n < 1 or k < 1:
            raise ValueError("need at least one user and one channel")
        if noise.shape != (k,):
            raise ValueError(f"noise must have shape ({k},), got {noise.shape}")
        if budget.shape != (n,):
            raise ValueError(f"budget must have shape ({n},), got {budget.shape}")
        if not np.all(np.isfinite(gain)) or np.any(gain <= 0):
            raise ValueError("all channel gains must be finite and strictly positive")
        if not np.all(np.isfinite(noise)) or np.any(noise <= 0):
            raise ValueError("noise must be finite and strictly positive")
        if not np.all(np.isfinite(budget)) or np.any(budget <= 0):
            raise ValueError("budgets must be finite and strictly positive")
        object.__setattr__(self, "gain", _readonly(gain))
        object.__setattr__(self, "noise", _readonly(noise))
        object.__setattr__(self, "budget", _readonly(budget))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=float)
            if mask.shape != (n, k):
                raise ValueError(f"mask must have shape ({n}, {k}), got {mask.shape}")
            if np.any(np.isnan(mask)) or np.any(mask <= 0):
                raise ValueError("mask entries must be positive (inf allowed)")
            if np.any(mask.sum(axis=1) < budget):
                raise ValueError("each user's mask must sum to at least its budget")
            object.__setattr__(self, "mask", _readonly(mask))

    @property
    def n_users(self) -> int:
        return self.gain.shape[0]

    @property
    def n_channels(self) -> int:
        return self.gain.shape[1]

    @property
    def caps(self) -> np.ndarray:
        """Per-channel caps with ``inf`` where no mask applies."""
        if self.mask is None:
            return np.full(self.gain.shape, np.inf)
        return self.mask

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "n_users": self.n_users,
            "n_channels": self.n_channels,
            "gain": self.gain.ravel().tolist(),
            "noise": self.noise.tolist(),
            "budget": self.budget.tolist(),
        }
        if self.mask is not None:
            # JSON has no infinity literal; uncapped entries are written as null
            d["mask"] = [None if math.isinf(v) else v for v in self.mask.ravel()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkInstance":
        n, k = int(d["n_users"]), int(d["n_channels"])
        gain = np.asarray(d["gain"], dtype=float)
        if gain.size != n * k:
            raise ValueError(f"gain has {gain.size} entries, expected {n * k}")
        mask = d.get("mask")
        if mask is not None:
            mask = np.array([np.inf if v is None else v for v in mask], dtype=float)
            if mask.size != n * k:
                raise ValueError(f"mask has {mask.size} entries, expected {n * k}")
            mask = mask.reshape(n, k)
        return cls(gain.reshape(n, k), d["noise"], d["budget"], mask)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NetworkInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_profile(inst: NetworkInstance, p, tol: float = FEASIBILITY_TOL) -> np.ndarray:
    """Return ``p`` as a float array after checking it is feasible for ``inst``."""
    p = np.asarray(p, dtype=float)
    if p.shape != inst.gain.shape:
        raise InfeasibleProfileError(
            f"profile shape {p.shape} does not match instance {inst.gain.shape}")
    if not np.all(np.isfinite(p)):
        raise InfeasibleProfileError("profile has non-finite entries")
    if np.any(p < -tol):
        raise InfeasibleProfileError("profile has negative powers")
    excess = p.sum(axis=1) - inst.budget
    if np.any(excess > tol):
        i = int(np.argmax(excess))
        raise InfeasibleProfileError(f"user {i} exceeds its budget by {excess[i]:.3g}")
    if inst.mask is not None and np.any(p > inst.mask + tol):
        raise InfeasibleProfileError("profile exceeds a per-channel mask")
    return p


def uniform_profile(inst: NetworkInstance) -> np.ndarray:
    """Each user spreads its budget evenly; with masks, the even split is
    projected onto the capped budget face."""
    p = np.repeat(inst.budget[:, None] / inst.n_channels, inst.n_channels, axis=1)
    if inst.mask is not None and np.any(p > inst.mask):
        from .waterfill import water_fill

        for i in range(inst.n_users):
            p[i] = water_fill(np.ones(inst.n_channels), inst.budget[i], inst.mask[i]).allocation
    return p


def _check_user(inst: NetworkInstance, i: int) -> int:
    if not (0 <= i < inst.n_users):
        raise IndexError(f"user index {i} out of range for {inst.n_users} users")
    return int(i)


def aggregate_broadcast(inst: NetworkInstance, p) -> np.ndarray:
    """Per-channel noise plus total received power, the quantity the access
    point broadcasts. It is the only cross-user information the distributed
    algorithms use."""
    p = check_profile(inst, p)
    return inst.noise + np.einsum("ik,ik->k", inst.gain, p)


def ipn(inst: NetworkInstance, p, i: int) -> np.ndarray:
    """Interference plus noise seen by user ``i``: the broadcast minus the
    user's own received power."""
    i = _check_user(inst, i)
    p = np.asarray(p, dtype=float)
    return aggregate_broadcast(inst, p) - inst.gain[i] * p[i]


def user_rates(inst: NetworkInstance, p) -> np.ndarray:
    """Rates of all users under single-user decoding, shape (N,)."""
    p = check_profile(inst, p)
    return _user_rates(inst, p)


def _user_rates(inst, p):
    received = inst.gain * p
    total = inst.noise + received.sum(axis=0)
    terms = np.log1p(received / (total - received))
    return np.array([math.fsum(row) for row in terms]) / inst.n_channels


def _sum_rate(inst, p):
    # pairwise summation over all N*K terms; used where sum_rate runs every iteration
    received = inst.gain * p
    total = inst.noise + received.sum(axis=0)
    return float(np.sum(np.log1p(received / (total - received)))) / inst.n_channels


def _potential(inst, p):
    snr = np.einsum("ik,ik->k", inst.gain, p) / inst.noise
    return math.fsum(np.log1p(snr)) / inst.n_channels


def user_rate(inst: NetworkInstance, p, i: int) -> float:
    """Rate of user ``i`` treating all other users as noise."""
    i = _check_user(inst, i)
    p = check_profile(inst, p)
    signal = inst.gain[i] * p[i]
    interference = ipn(inst, p, i)
    return math.fsum(np.log1p(signal / interference)) / inst.n_channels


def sum_rate(inst: NetworkInstance, p) -> float:
    return math.fsum(user_rates(inst, p))


def potential(inst: NetworkInstance, p) -> float:
    """Potential of the game: normalized log of received-power-plus-noise over
    noise, summed over channels with compensated summation."""
    return _potential(inst, check_profile(inst, p))


def potential_gradient(inst: NetworkInstance, p) -> np.ndarray:
    """Gradient of ``potential`` with respect to every ``p_i(k)``, shape (N, K)."""
    total = aggregate_broadcast(inst, p)
    return inst.gain / total / inst.n_channels
