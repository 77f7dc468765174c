"""Centralized ground truth for the power allocation game.

The certified optimum comes from a Frank-Wolfe solver over the product of the
users' budget simplices. Its linear subproblem is exact (each user puts its
whole budget on its steepest channel) and the Frank-Wolfe duality gap upper
bounds the distance to the optimal potential, so the result can arbitrate the
water-filling dynamics without sharing their code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    NetworkInstance,
    check_profile,
    ipn,
    potential,
    potential_gradient,
)
from .waterfill import br_residual

__all__ = [
    "OracleError",
    "NotEquilibriumError",
    "OptimumCertificate",
    "EquilibriumReport",
    "FdmaReport",
    "DiagonalCheck",
    "duality_gap",
    "solve_max_potential",
    "verify_ne",
    "interference_matrices",
    "spectral_radius",
    "diagonal_optimality_check",
    "fdma_condition_check",
]


class OracleError(RuntimeError):
    """The oracle did not reach its requested accuracy."""

    def __init__(self, msg, best_gap=math.inf, best=None):
        super().__init__(msg)
        self.best_gap = best_gap
        self.best = best


class NotEquilibriumError(ValueError):
    pass


@dataclass(frozen=True)
class OptimumCertificate:
    """``value`` is the potential at ``p_star``; the true maximum lies in
    ``[value, value + gap_bound]``."""

    p_star: np.ndarray
    value: float
    gap_bound: float
    iterations: int

    @property
    def upper_bound(self) -> float:
        return self.value + self.gap_bound

    def to_dict(self) -> dict:
        return {"value": self.value, "gap_bound": self.gap_bound,
                "iterations": self.iterations, "p_star": self.p_star.tolist()}


def duality_gap(inst: NetworkInstance, p) -> float:
    """Frank-Wolfe gap ``max_s <grad P(p), s - p>`` over the feasible set.

    By concavity it bounds ``max P - P(p)`` from above.
    """
    p = check_profile(inst, p)
    g = potential_gradient(inst, p)
    if inst.mask is None:
        best = inst.budget * g.max(axis=1)
    else:
        best = np.array([_greedy_capped(g[i], inst.budget[i], inst.mask[i]) @ g[i]
                         for i in range(inst.n_users)])
    return max(0.0, math.fsum(best) - math.fsum((g * p).ravel()))


def _greedy_capped(g, budget, caps):
    # linear maximization over {0 <= x <= caps, sum x <= budget}: fill steepest first
    x = np.zeros_like(g)
    left = budget
    for k in np.argsort(-g, kind="stable"):
        x[k] = min(caps[k], left)
        left -= x[k]
        if left <= 0:
            break
    return x


def _pairwise_move(gi, pi, A, budget_cap, f, a):
    """Exact line search for moving power of one user from channel ``a`` to ``f``.

    The potential restricted to this move is concave in the amount ``d``
    with derivative proportional to ``g_f/(A_f + g_f d) - g_a/(A_a - g_a d)``,
    which vanishes at ``d = (g_f A_a - g_a A_f) / (2 g_f g_a)``.
    """
    d = (gi[f] * A[a] - gi[a] * A[f]) / (2.0 * gi[f] * gi[a])
    return min(max(d, 0.0), pi[a], budget_cap)


def solve_max_potential(inst: NetworkInstance, tol: float = 1e-10, max_iter: int = 200_000,
                        p0=None, method: str = "pairwise") -> OptimumCertificate:
    """Maximize the potential over the joint feasible set with a certificate.

    Parameters
    ----------
    inst : NetworkInstance
    tol : float
        Required Frank-Wolfe duality gap at the returned point.
    max_iter : int
        Cap on outer iterations.
    p0 : array_like, optional
        Starting point (default: each user's whole budget on its best channel).
    method : {"pairwise", "vanilla"}
        ``"pairwise"`` moves power from each user's worst active channel to
        its steepest channel (with headroom under the mask) with an exact
        line search, one user at a time.
        ``"vanilla"`` is plain Frank-Wolfe with exact line search; it is
        kept for comparison and is much slower to reach small gaps.

    Raises
    ------
    OracleError
        If ``tol`` is not reached within ``max_iter`` iterations.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if method not in ("pairwise", "vanilla"):
        raise ValueError(f"unknown method {method!r}")
    n, k = inst.gain.shape
    gain = inst.gain
    if p0 is None:
        p = np.zeros((n, k))
        best_ch = np.argmax(gain / inst.noise, axis=1)
        if inst.mask is None:
            p[np.arange(n), best_ch] = inst.budget
        else:
            for i in range(n):
                p[i] = _greedy_capped(gain[i] / inst.noise, inst.budget[i], inst.mask[i])
    else:
        from .dynamics import prepare_start

        p = prepare_start(inst, p0)

    caps = inst.mask
    gap = duality_gap(inst, p)
    it = 0
    while gap > tol and it < max_iter:
        it += 1
        if method == "pairwise":
            A = inst.noise + (gain * p).sum(axis=0)
            for i in range(n):
                gi = gain[i] / A
                if caps is None:
                    f = int(np.argmax(gi))
                    room = math.inf
                else:
                    # steepest channel that can still take power
                    open_ = np.flatnonzero(p[i] < caps[i])
                    if open_.size == 0:
                        continue
                    f = int(open_[np.argmax(gi[open_])])
                    room = caps[i, f] - p[i, f]
                active = np.flatnonzero(p[i] > 0)
                a = int(active[np.argmin(gi[active])])
                if a == f or gi[f] <= gi[a]:
                    continue
                d = min(_pairwise_move(gain[i], p[i], A, inst.budget[i], f, a), room)
                if d <= 0:
                    continue
                p[i, a] -= d
                p[i, f] += d
                if p[i, a] < 1e-300:
                    p[i, a] = 0.0
                A[a] -= gain[i, a] * d
                A[f] += gain[i, f] * d
        else:
            g = potential_gradient(inst, p)
            s = np.zeros_like(p)
            for i in range(n):
                if inst.mask is None:
                    s[i, int(np.argmax(g[i]))] = inst.budget[i]
                else:
                    s[i] = _greedy_capped(g[i], inst.budget[i], inst.mask[i])
            p = p + _line_search(inst, p, s - p) * (s - p)
        if it % 10 == 0 or method == "vanilla":
            gap = duality_gap(inst, p)
    gap = duality_gap(inst, p)
    if gap > tol:
        raise OracleError(f"duality gap {gap:.3g} > tol {tol:.3g} after {it} iterations",
                          best_gap=gap, best=p)
    return OptimumCertificate(p, potential(inst, p), gap, it)


def _line_search(inst, p, d, iters=100):
    # maximize P(p + g d) over g in [0, 1]: bisection on the directional derivative
    signal = (inst.gain * p).sum(axis=0) + inst.noise
    slope = (inst.gain * d).sum(axis=0)

    def deriv(g):
        return np.sum(slope / (signal + g * slope))

    if deriv(1.0) >= 0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class EquilibriumReport:
    residual_inf: float
    potential_gap: float
    is_ne: bool
    gap_ok: bool
    supports: list
    collisions: object = None

    @property
    def consistent(self) -> bool:
        """Both equilibrium tests (fixed point and potential maximizer) agree."""
        return self.is_ne == self.gap_ok

    def to_dict(self) -> dict:
        d = {"residual_inf": self.residual_inf, "potential_gap": self.potential_gap,
             "is_ne": self.is_ne, "gap_ok": self.gap_ok, "consistent": self.consistent}
        if self.collisions is not None:
            d["collisions"] = self.collisions.to_dict()
        return d


def verify_ne(inst: NetworkInstance, p, cert: OptimumCertificate, tol: float = 1e-8,
              gap_tol: Optional[float] = None) -> EquilibriumReport:
    """Check ``p`` both as a best-response fixed point and as a potential maximizer.

    ``potential_gap`` is measured against the certified upper bound
    ``cert.value + cert.gap_bound``, so a true equilibrium has a gap of at
    most ``cert.gap_bound`` up to rounding. ``gap_tol`` defaults to
    ``max(100 * tol, 10 * cert.gap_bound)``.
    """
    from .metrics import count_collisions

    p = check_profile(inst, p)
    residual = float(np.max(np.abs(br_residual(inst, p))))
    gap = cert.upper_bound - potential(inst, p)
    if gap_tol is None:
        gap_tol = max(100 * tol, 10 * cert.gap_bound)
    is_ne = residual <= tol
    active = p > 0
    supports = [np.flatnonzero(active[:, k]).tolist() for k in range(inst.n_channels)]
    return EquilibriumReport(residual, gap, is_ne, gap <= gap_tol, supports,
                             count_collisions(inst, p))


# -- spectral analysis of the simultaneous IWF condition ---------------------

def interference_matrices(inst: NetworkInstance):
    """Normalized cross-interference matrices of the access point network.

    Returns ``(H, H_max)`` where ``H[k, q, r] = g_r(k) / g_q(k)`` off the
    diagonal and 0 on it, and ``H_max`` is the entrywise maximum over ``k``.
    """
    g = inst.gain.T  # (K, N)
    H = g[:, None, :] / g[:, :, None]
    idx = np.arange(inst.n_users)
    H[:, idx, idx] = 0.0
    return H, H.max(axis=0)


def _balance(M, sweeps=50):
    # Osborne balancing: diagonal similarity that leaves the spectrum unchanged
    B = np.array(M, dtype=float, copy=True)
    n = B.shape[0]
    for _ in range(sweeps):
        done = True
        for i in range(n):
            r = B[i].sum() - B[i, i]
            c = B[:, i].sum() - B[i, i]
            if r > 0 and c > 0:
                f = math.sqrt(c / r)
                if abs(f - 1) > 1e-3:
                    done = False
                B[i, :] *= f
                B[:, i] /= f
        if done:
            break
    return B


def _components(M):
    """Strongly connected components of the support graph of ``M``."""
    n = M.shape[0]
    reach = (M > 0) | np.eye(n, dtype=bool)
    for k in range(n):  # transitive closure, Warshall
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    mutual = reach & reach.T
    seen = np.zeros(n, dtype=bool)
    comps = []
    for i in range(n):
        if not seen[i]:
            members = np.flatnonzero(mutual[i])
            seen[members] = True
            comps.append(members)
    return comps


def _perron_root(B, tol, max_iter, delta):
    # B is irreducible and nonnegative; the shift makes it primitive
    c = B.sum(axis=1).max() + delta
    S = B + c * np.eye(B.shape[0])
    x = np.ones(B.shape[0])
    lo = hi = math.nan
    for _ in range(max_iter):
        y = S @ x
        ratio = y / x
        lo, hi = ratio.min(), ratio.max()
        if hi - lo <= tol * hi:
            return float(0.5 * (lo + hi) - c)
        x = y / np.linalg.norm(y)
    raise OracleError(f"power iteration did not converge (bounds {lo - c:.6g}, {hi - c:.6g})")


def spectral_radius(M, tol: float = 1e-13, max_iter: int = 100_000, delta: float = 1e-12) -> float:
    """Spectral radius of a square nonnegative matrix by power iteration.

    The matrix is split into strongly connected components (its spectral
    radius is the largest over the irreducible diagonal blocks). Each block
    is balanced, then shifted by ``c = max row sum + delta`` so that periodic
    (e.g. bipartite) blocks converge and iterates stay positive. Iteration
    stops when the Collatz-Wielandt bounds ``min (Bx)_i/x_i <= rho <=
    max (Bx)_i/x_i`` agree to relative ``tol``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise ValueError("matrix must be finite and nonnegative")
    rho = 0.0
    for comp in _components(M):
        block = M[np.ix_(comp, comp)]
        if not block.any():
            continue  # a single vertex without a self-loop
        rho = max(rho, _perron_root(_balance(block), tol, max_iter, delta))
    return rho


# -- diagonal input optimality (K = 2 brute force) ---------------------------

@dataclass(frozen=True)
class DiagonalCheck:
    full_grid_max: float
    diagonal_grid_max: float
    diagonal_optimum: float
    best_full: tuple

    @property
    def diagonal_dominates(self) -> bool:
        return self.diagonal_optimum >= self.full_grid_max - 1e-12

    def gap(self) -> float:
        return abs(self.diagonal_optimum - self.full_grid_max)


def _psd_grid(budget, steps):
    """Real 2x2 covariances with trace <= budget, as (a, b, c) entries
    ``[[a, c], [c, b]]``, parameterized by diagonal entries and a correlation
    coefficient in [-1, 1]."""
    levels = np.linspace(0.0, budget, steps + 1)
    a, b = np.meshgrid(levels, levels, indexing="ij")
    keep = a + b <= budget * (1 + 1e-12)
    a, b = a[keep], b[keep]
    rho = np.linspace(-1.0, 1.0, 2 * (steps // 2) + 1)  # odd count keeps rho = 0
    c = rho[None, :] * np.sqrt(a * b)[:, None]
    a = np.broadcast_to(a[:, None], c.shape).ravel()
    b = np.broadcast_to(b[:, None], c.shape).ravel()
    return a, b, c.ravel(), (np.abs(rho) < 1e-15)[None, :].repeat(keep.sum(), 0).ravel()


def _logdet_objective(h, noise, covs):
    # (1/K)(log|sum_i H_i S_i H_i^T + Sigma_z| - log|Sigma_z|) for K = 2, diagonal H_i
    m11 = noise[0] + sum(h[i, 0] ** 2 * a for i, (a, b, c) in enumerate(covs))
    m22 = noise[1] + sum(h[i, 1] ** 2 * b for i, (a, b, c) in enumerate(covs))
    m12 = sum(h[i, 0] * h[i, 1] * c for i, (a, b, c) in enumerate(covs))
    det = m11 * m22 - m12 ** 2
    return 0.5 * (np.log(det) - math.log(noise[0] * noise[1]))


def diagonal_optimality_check(inst: NetworkInstance, grid_steps: int = 100,
                              budget=None) -> DiagonalCheck:
    """Brute-force comparison of full versus diagonal input covariances.

    Only ``K = 2`` and ``N <= 2`` are supported. Covariances are gridded by
    their diagonal entries (step ``budget / grid_steps``) and correlation;
    the diagonal optimum itself is computed exactly (water-filling for one
    user, the certified potential maximum for two). ``budget`` overrides the
    instance budgets and may contain zeros.
    """
    n, k = inst.gain.shape
    if k != 2 or n > 2:
        raise ValueError("diagonal_optimality_check supports K = 2 and N <= 2 only")
    budget = inst.budget if budget is None else np.asarray(budget, dtype=float)
    if budget.shape != (n,) or np.any(budget < 0):
        raise ValueError("budget override must be a nonnegative vector of length N")
    h = np.sqrt(inst.gain)
    noise = inst.noise
    if n == 2 and (grid_steps + 1) ** 4 * (grid_steps + 1) ** 2 > 5e7:
        raise ValueError("grid too large for two users; lower grid_steps")

    grids = [_psd_grid(b, grid_steps) for b in budget]
    if n == 1:
        a, b, c, diag = grids[0]
        vals = _logdet_objective(h, noise, [(a, b, c)])
        full = float(vals.max())
        j = int(np.argmax(vals))
        best = ((a[j], b[j], c[j]),)
        dgrid = float(vals[diag].max())
    else:
        (a0, b0, c0, d0), (a1, b1, c1, d1) = grids
        vals = _logdet_objective(h, noise, [(a0[:, None], b0[:, None], c0[:, None]),
                                            (a1[None, :], b1[None, :], c1[None, :])])
        full = float(vals.max())
        j0, j1 = np.unravel_index(int(np.argmax(vals)), vals.shape)
        best = ((a0[j0], b0[j0], c0[j0]), (a1[j1], b1[j1], c1[j1]))
        dgrid = float(vals[np.ix_(d0, d1)].max())

    if np.all(budget == 0):
        exact = 0.0
    else:
        sub = NetworkInstance(inst.gain[budget > 0], noise, budget[budget > 0])
        exact = solve_max_potential(sub, tol=1e-13).upper_bound
    return DiagonalCheck(full, dgrid, exact, best)


# -- finite-K FDMA optimality conditions ------------------------------------

@dataclass
class FdmaReport:
    levels: np.ndarray
    single_channels: list
    shared_channels: list
    idle_channels: list
    violations: list = field(default_factory=list)

    @property
    def fraction_satisfied(self) -> float:
        if not self.single_channels:
            return 1.0
        bad = {k for k, *_ in self.violations}
        return 1.0 - len(bad) / len(self.single_channels)

    @property
    def passed(self) -> bool:
        return not self.violations


def fdma_condition_check(inst: NetworkInstance, p, tol: float = 1e-6,
                         residual_tol: float = 1e-6, activity_threshold=None) -> FdmaReport:
    """Check the equilibrium channel-ownership condition channel by channel.

    Water levels are recovered as ``sigma_i = max_k (p_i(k) + ipn_i(k)/g_i(k))``
    over active channels. On each channel with a single active user ``i``,
    every other user must satisfy ``sigma_j g_j(k) <= sigma_i g_i(k)`` up to
    a relative tolerance ``tol``.
    """
    from .metrics import activity

    p = check_profile(inst, p)
    residual = float(np.max(np.abs(br_residual(inst, p))))
    if residual > residual_tol:
        raise NotEquilibriumError(f"residual {residual:.3g} > {residual_tol:.3g}: "
                                  "water levels are undefined away from equilibrium")
    act = activity(inst, p, activity_threshold)
    n = inst.n_users
    levels = np.empty(n)
    for i in range(n):
        floor = ipn(inst, p, i) / inst.gain[i]
        on = act[i] if act[i].any() else p[i] > 0
        levels[i] = np.max(p[i, on] + floor[on])
    counts = act.sum(axis=0)
    single = np.flatnonzero(counts == 1).tolist()
    shared = np.flatnonzero(counts > 1).tolist()
    idle = np.flatnonzero(counts == 0).tolist()
    score = levels[:, None] * inst.gain  # sigma_j g_j(k)
    violations = []
    for k in single:
        owner = int(np.flatnonzero(act[:, k])[0])
        ref = score[owner, k]
        for j in range(n):
            if j != owner and score[j, k] > ref * (1 + tol):
                violations.append((k, owner, j, float(score[j, k] / ref - 1)))
    return FdmaReport(levels, single, shared, idle, violations)
