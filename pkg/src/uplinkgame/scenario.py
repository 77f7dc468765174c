"""Seeded random network instances and the canonical two-user fixture.

Random numbers come from Philox-4x64-10 keyed directly with the 64-bit seed
(counter starting at zero); doubles are ``(next_uint64 >> 11) * 2**-53``,
numpy's ``Generator.random``. Draw order per instance:

1. access point position, ``(x, y)``, two uniforms;
2. each user in turn, ``(x, y)``, redrawn while closer than ``d_min`` to the AP;
3. each user in turn, ``K + L - 1`` complex taps, each from two uniforms
   ``(u1, u2)`` via Box-Muller: ``r = sqrt(-log(1 - u1))``,
   ``g = r * (cos(2 pi u2) + 1j sin(2 pi u2))``, so ``E|g|^2 = 1``.

Channel ``k`` of user ``i`` is the normalized moving average of taps
``k .. k+L-1`` and its power gain is ``|h_i(k)|^2 / d_i^2``. Independent
fading is the window ``L = 1``, so ``|h|^2`` is exponential with mean
``1/d_i^2``; with coherence bandwidth ``B_c`` the window is
``L = max(1, round(B_c * K))``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .model import NetworkInstance

__all__ = [
    "ScenarioSpec",
    "make_example1",
    "example1_equilibria",
    "make_rng",
    "generate",
    "generate_correlated",
    "window_length",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """Recipe for a random instance.

    ``budget`` is one value for all users or a per-user sequence; ``noise``
    is the per-channel noise power. ``coherence_bandwidth=None`` means
    independent fading across channels.
    """

    n_users: int
    n_channels: int
    seed: int = 0
    area_side: float = 10.0
    budget: Union[float, Sequence[float]] = 1.0
    noise: float = 1e-2
    coherence_bandwidth: Optional[float] = None
    d_min: float = 0.1

    def __post_init__(self):
        if self.n_users < 1 or self.n_channels < 1:
            raise ValueError("need at least one user and one channel")
        if not self.area_side > 0 or not self.noise > 0:
            raise ValueError("area_side and noise must be positive")
        if not (0 <= self.d_min < self.area_side / 2):
            raise ValueError("d_min must be in [0, area_side / 2)")
        bc = self.coherence_bandwidth
        if bc is not None and not (0 < bc <= 1):
            raise ValueError("coherence bandwidth must lie in (0, 1]")
        if not (0 <= self.seed < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def budgets(self) -> np.ndarray:
        b = np.broadcast_to(np.asarray(self.budget, dtype=float), (self.n_users,)).copy()
        if np.any(b <= 0):
            raise ValueError("budgets must be positive")
        return b

    def to_dict(self) -> dict:
        b = self.budget if np.isscalar(self.budget) else list(self.budget)
        return {"n_users": self.n_users, "n_channels": self.n_channels, "seed": self.seed,
                "area_side": self.area_side, "budget": b, "noise": self.noise,
                "coherence_bandwidth": self.coherence_bandwidth, "d_min": self.d_min}


def make_example1() -> NetworkInstance:
    """Two users, two channels, identical gains 1 and 2, unit noise and budgets.

    The game has a connected set of equilibria; see :func:`example1_equilibria`.
    """
    return NetworkInstance(gain=[[1.0, 2.0], [1.0, 2.0]], noise=[1.0, 1.0], budget=[1.0, 1.0])


def example1_equilibria():
    """The two pure equilibria of :func:`make_example1`, ``(p_tilde, p_hat)``."""
    p_tilde = np.array([[0.75, 0.25], [0.0, 1.0]])
    return p_tilde, p_tilde[::-1].copy()


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


def window_length(coherence_bandwidth: Optional[float], n_channels: int) -> int:
    if coherence_bandwidth is None:
        return 1
    return max(1, int(round(coherence_bandwidth * n_channels)))


def _positions(rng, spec: ScenarioSpec):
    ap = rng.random(2) * spec.area_side
    users = np.empty((spec.n_users, 2))
    for i in range(spec.n_users):
        while True:
            xy = rng.random(2) * spec.area_side
            if np.hypot(*(xy - ap)) >= spec.d_min:
                break
        users[i] = xy
    return ap, users


def _taps(rng, n):
    u = rng.random((n, 2))
    r = np.sqrt(-np.log1p(-u[:, 0]))
    phase = 2.0 * np.pi * u[:, 1]
    return r * np.cos(phase) + 1j * r * np.sin(phase)


def _build(spec: ScenarioSpec, window: int) -> NetworkInstance:
    rng = make_rng(spec.seed)
    ap, users = _positions(rng, spec)
    dist2 = np.sum((users - ap) ** 2, axis=1)
    k = spec.n_channels
    gain = np.empty((spec.n_users, k))
    for i in range(spec.n_users):
        g = _taps(rng, k + window - 1)
        if window == 1:
            h = g
        else:
            c = np.concatenate([[0.0], np.cumsum(g)])
            h = (c[window:] - c[:-window]) / np.sqrt(window)
        gain[i] = np.abs(h) ** 2 / dist2[i]
    # an exact zero would need u1 == 0 in every tap of a window; guard anyway
    gain = np.maximum(gain, np.finfo(float).tiny)
    return NetworkInstance(gain, np.full(k, spec.noise), spec.budgets())


def generate(spec: ScenarioSpec) -> NetworkInstance:
    """Random instance; independent Rayleigh fading unless
    ``spec.coherence_bandwidth`` is set."""
    if spec.coherence_bandwidth is not None:
        return generate_correlated(spec)
    return _build(spec, 1)


def generate_correlated(spec: ScenarioSpec, coherence_bandwidth: Optional[float] = None
                        ) -> NetworkInstance:
    """Random instance whose channels are correlated over a window of
    ``round(B_c * K)`` adjacent channels."""
    if coherence_bandwidth is not None:
        spec = replace(spec, coherence_bandwidth=coherence_bandwidth)
    if spec.coherence_bandwidth is None:
        raise ValueError("generate_correlated needs a coherence bandwidth")
    return _build(spec, window_length(spec.coherence_bandwidth, spec.n_channels))
