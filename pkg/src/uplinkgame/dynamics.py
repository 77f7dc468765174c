"""Distributed power allocation dynamics.

Three equilibrium-seeking algorithms (averaged IWF, sequential IWF and
projected gradient ascent with diminishing steps) plus the classical
simultaneous IWF, which does not converge on this network. Every run returns
a :class:`RunTrace`.

Inside the algorithm bodies a user only touches the broadcast aggregate and
its own row of gains, budget and mask.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import (
    FEASIBILITY_TOL,
    NetworkInstance,
    _potential,
    _sum_rate,
    check_profile,
    uniform_profile,
)
from .waterfill import _row_caps, _water_fill, clamped_level, water_fill

__all__ = [
    "StepSchedule",
    "StoppingRule",
    "RunTrace",
    "project_simplex",
    "project_rows",
    "prepare_start",
    "run_aiwf",
    "run_siwf",
    "run_pgd",
    "run_simultaneous_iwf",
]


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing steps ``alpha_t = a / (b + t)`` for ``t >= 1``.

    The family is divergent-sum and square-summable by construction; the
    constraint ``0 < a < b + 1`` keeps every step strictly inside (0, 1).
    """

    a: float = 1.0
    b: float = 2.0

    def __post_init__(self):
        if not (self.a > 0 and self.b >= 0):
            raise ValueError("need a > 0 and b >= 0")
        if not self.a < self.b + 1:
            raise ValueError(f"a={self.a} must be < b+1={self.b + 1} so that alpha_1 < 1")

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError("step index starts at 1")
        return self.a / (self.b + t)


@dataclass(frozen=True)
class StoppingRule:
    """Composable stopping criteria; the first one satisfied wins.

    ``residual_tol`` bounds the sup-norm of the best-response residual,
    ``gap_tol`` bounds ``p_star - potential`` (requires ``p_star``) and
    ``max_iters`` caps the number of updates.
    """

    residual_tol: Optional[float] = None
    gap_tol: Optional[float] = None
    p_star: Optional[float] = None
    max_iters: int = 10_000

    def __post_init__(self):
        if self.gap_tol is not None and self.p_star is None:
            raise ValueError("gap_tol needs p_star")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def converged(self, pot: float, residual: float) -> bool:
        if self.residual_tol is not None and residual <= self.residual_tol:
            return True
        if self.gap_tol is not None and self.p_star - pot <= self.gap_tol:
            return True
        return False


@dataclass
class RunTrace:
    """Per-iterate record of a run.

    Row ``t`` describes the iterate after ``t`` updates; ``alpha[t]`` and
    ``epsilon[t]`` belong to the update that produced it (NaN for ``t = 0``).
    ``residual_inf`` is NaN on rows where the residual was not evaluated.
    """

    algorithm: str
    t: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    sum_rate: list = field(default_factory=list)
    residual_inf: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    reason: str = ""
    final: Optional[np.ndarray] = None

    def append(self, t, pot, rate, residual, alpha=math.nan, eps=math.nan):
        if not math.isfinite(pot):
            raise FloatingPointError(f"non-finite potential at iteration {t}")
        self.t.append(t)
        self.potential.append(pot)
        self.sum_rate.append(rate)
        self.residual_inf.append(residual)
        self.alpha.append(alpha)
        self.epsilon.append(eps)

    def __len__(self):
        return len(self.t)

    @property
    def has_epsilon(self) -> bool:
        return any(math.isfinite(e) for e in self.epsilon)

    def columns(self) -> list:
        cols = ["t", "potential", "sum_rate", "residual_inf", "alpha"]
        return cols + ["epsilon_t"] if self.has_epsilon else cols

    def rows(self):
        eps = self.has_epsilon
        for r in zip(self.t, self.potential, self.sum_rate, self.residual_inf,
                     self.alpha, self.epsilon):
            yield r if eps else r[:-1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for row in self.rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        d = {
            "algorithm": self.algorithm,
            "reason": self.reason,
            "iterations": self.t[-1] if self.t else 0,
            "columns": self.columns(),
            "rows": [[row[0]] + [_json_float(v) for v in row[1:]] for row in self.rows()],
        }
        if self.final is not None:
            d["final"] = self.final.tolist()
        return d


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


# -- projection -------------------------------------------------------------

def project_simplex(v, budget: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0, sum(x) <= budget}``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    if not budget > 0:
        raise ValueError("budget must be positive")
    pos = np.maximum(v, 0.0)
    if pos.sum() <= budget:
        return pos
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - budget
    ind = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / ind > 0)[-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_rows(v: np.ndarray, budget: np.ndarray, caps: Optional[np.ndarray] = None) -> np.ndarray:
    """Row-wise projection onto each user's feasible set, vectorized over rows
    when there are no caps."""
    v = np.asarray(v, dtype=float)
    if caps is None or np.all(np.isinf(caps)):
        pos = np.maximum(v, 0.0)
        over = pos.sum(axis=1) > budget
        if not over.any():
            return pos
        out = pos
        w = v[over]
        u = -np.sort(-w, axis=1)
        css = np.cumsum(u, axis=1) - budget[over, None]
        ind = np.arange(1, v.shape[1] + 1)
        ok = u - css / ind > 0
        rho = v.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1)
        theta = css[np.arange(w.shape[0]), rho] / (rho + 1)
        out[over] = np.maximum(w - theta[:, None], 0.0)
        return out
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        out[i] = _project_capped(v[i], budget[i], caps[i])
    return out


def _project_capped(v, budget, caps):
    clipped = np.clip(v, 0.0, caps)
    if clipped.sum() <= budget:
        return clipped
    # x = clip(v - theta, 0, caps) with sum(x) = budget; clamped_level solves for -theta
    level = clamped_level(-v, budget, caps)
    return np.clip(v + level, 0.0, caps)


# -- shared plumbing ----------------------------------------------------------

def _clamp(inst: NetworkInstance, p: np.ndarray) -> np.ndarray:
    np.maximum(p, 0.0, out=p)
    if inst.mask is not None:
        np.minimum(p, inst.mask, out=p)
    return p


def prepare_start(inst: NetworkInstance, p0=None) -> np.ndarray:
    """Feasible, budget-tight starting profile.

    ``None`` gives the uniform profile. Rows violating their constraints are
    projected back; rows with slack get the leftover budget water-filled on
    top of their current powers.
    """
    if p0 is None:
        return uniform_profile(inst)
    p = np.array(p0, dtype=float, copy=True)
    if p.shape != inst.gain.shape or not np.all(np.isfinite(p)):
        raise ValueError("p0 must be a finite N x K array")
    caps = inst.caps
    bad = (np.any(p < 0, axis=1) | (p.sum(axis=1) > inst.budget)
           | np.any(p > caps, axis=1))
    if bad.any():
        p[bad] = project_rows(p[bad], inst.budget[bad], caps[bad])
    total = inst.noise + (inst.gain * p).sum(axis=0)
    for i in range(inst.n_users):
        slack = inst.budget[i] - p[i].sum()
        if slack > FEASIBILITY_TOL * max(1.0, inst.budget[i]):
            # own current power counts toward the floor of the extra allocation
            floor = total / inst.gain[i]
            room = caps[i] - p[i]
            open_ = room > 0
            extra = np.zeros(inst.n_channels)
            extra[open_] = water_fill(floor[open_], slack, room[open_]).allocation
            p[i] += extra
            total = total + inst.gain[i] * extra
    return _clamp(inst, p)


def _best_replies(inst: NetworkInstance, p: np.ndarray, total: np.ndarray, caps: np.ndarray,
                  users: Sequence[int]) -> np.ndarray:
    out = np.empty((len(users), inst.n_channels))
    for row, i in enumerate(users):
        e = (total - inst.gain[i] * p[i]) / inst.gain[i]
        out[row] = _water_fill(e, inst.budget[i], caps[i]).allocation
    return out


def _residual_inf(inst, p, caps) -> float:
    total = inst.noise + (inst.gain * p).sum(axis=0)
    phi = _best_replies(inst, p, total, caps, range(inst.n_users))
    return float(np.max(np.abs(phi - p)))


def _record(trace, inst, p, t, residual, alpha=math.nan, eps=math.nan):
    trace.append(t, _potential(inst, p), _sum_rate(inst, p), residual, alpha, eps)


def _finish(trace, p, reason):
    trace.reason = reason
    trace.final = p.copy()
    return trace


def _snap(trace, p, t, snapshot_every):
    if snapshot_every and t % snapshot_every == 0:
        trace.snapshots[t] = p.copy()


def _simultaneous_run(name, inst, p0, stop, step, snapshot_every, callback, residual_every,
                      exhausted_reason="max_iters", after_step=None):
    """Common loop for the algorithms that update all users from one snapshot.

    ``step(p, t)`` returns ``(p_next, alpha, eps, phi)`` where ``phi`` is the
    best-reply matrix of ``p`` if the step happened to compute it.
    """
    caps = _row_caps(inst)
    p = check_profile(inst, prepare_start(inst, p0)).copy()
    trace = RunTrace(name)
    residual = _residual_inf(inst, p, caps)
    _record(trace, inst, p, 0, residual)
    _snap(trace, p, 0, snapshot_every)
    if callback is not None:
        callback(0, p)
    if stop.converged(trace.potential[-1], residual):
        return _finish(trace, p, "converged")
    for t in range(1, stop.max_iters + 1):
        p, alpha, eps = step(p, t)
        _clamp(inst, p)
        if residual_every and (t % residual_every == 0 or t == stop.max_iters):
            residual = _residual_inf(inst, p, caps)
        else:
            residual = math.nan
        _record(trace, inst, p, t, residual, alpha, eps)
        _snap(trace, p, t, snapshot_every)
        if callback is not None:
            callback(t, p)
        if stop.converged(trace.potential[-1], residual if math.isfinite(residual) else math.inf):
            return _finish(trace, p, "converged")
    return _finish(trace, p, exhausted_reason)


# -- algorithms -------------------------------------------------------------

def run_aiwf(inst: NetworkInstance, p0=None, schedule: StepSchedule = StepSchedule(),
             per_user_schedules: Optional[Sequence[StepSchedule]] = None,
             stop: StoppingRule = StoppingRule(residual_tol=1e-8),
             snapshot_every: Optional[int] = None,
             callback: Optional[Callable] = None,
             residual_every: int = 1) -> RunTrace:
    """Averaged iterative water-filling.

    Every user moves a fraction ``alpha_t`` of the way from its current row to
    its best reply, all replies computed from the same snapshot. With
    ``per_user_schedules`` each user follows its own step sequence; the trace
    then records the mean step.
    """
    if per_user_schedules is not None and len(per_user_schedules) != inst.n_users:
        raise ValueError("need one schedule per user")
    caps = _row_caps(inst)
    users = range(inst.n_users)

    def step(p, t):
        total = inst.noise + (inst.gain * p).sum(axis=0)
        phi = _best_replies(inst, p, total, caps, users)
        if per_user_schedules is None:
            a = schedule(t)
            return (1 - a) * p + a * phi, a, math.nan
        a = np.array([s(t) for s in per_user_schedules])
        return (1 - a)[:, None] * p + a[:, None] * phi, float(a.mean()), math.nan

    return _simultaneous_run("aiwf", inst, p0, stop, step, snapshot_every, callback, residual_every)


def run_simultaneous_iwf(inst: NetworkInstance, p0=None,
                         stop: StoppingRule = StoppingRule(residual_tol=1e-3),
                         divergence_guard: int = 10_000,
                         snapshot_every: Optional[int] = None,
                         callback: Optional[Callable] = None,
                         residual_every: int = 1) -> RunTrace:
    """Classical simultaneous IWF: every user jumps to its best reply at once.

    Non-convergence is an expected outcome; the run then ends with reason
    ``"diverged-guard"`` after ``divergence_guard`` updates.
    """
    caps = _row_caps(inst)
    users = range(inst.n_users)
    stop = StoppingRule(stop.residual_tol, stop.gap_tol, stop.p_star, divergence_guard)

    def step(p, t):
        total = inst.noise + (inst.gain * p).sum(axis=0)
        return _best_replies(inst, p, total, caps, users), 1.0, math.nan

    return _simultaneous_run("simultaneous_iwf", inst, p0, stop, step, snapshot_every, callback,
                             residual_every, exhausted_reason="diverged-guard")


def run_pgd(inst: NetworkInstance, p0=None, schedule: StepSchedule = StepSchedule(),
            stop: StoppingRule = StoppingRule(residual_tol=1e-8),
            snapshot_every: Optional[int] = None,
            callback: Optional[Callable] = None,
            residual_every: int = 1,
            step_scale: Optional[float] = None) -> RunTrace:
    """Projected gradient ascent on the potential with diminishing steps.

    Each user steps along its own gradient row (computed from the broadcast)
    and projects back onto its budget set. The step actually taken is
    ``step_scale * alpha_t``. The default ``step_scale = K`` is the iteration
    written with the gradient of the unnormalized (sum over channels)
    potential; ``step_scale = 1`` steps along ``potential_gradient`` itself.
    The trace records the step taken and the error term
    ``eps_t = 2 step_t (Psi(p^t) - p^t) . grad P(p^t)``.
    """
    if step_scale is None:
        step_scale = float(inst.n_channels)
    if not step_scale > 0:
        raise ValueError("step_scale must be positive")
    caps = None if inst.mask is None else inst.mask
    k = inst.n_channels

    def step(p, t):
        a = step_scale * schedule(t)
        total = inst.noise + (inst.gain * p).sum(axis=0)
        grad = inst.gain / total / k
        nxt = project_rows(p + a * grad, inst.budget, caps)
        eps = 2.0 * a * math.fsum(((nxt - p) * grad).ravel())
        return nxt, a, eps

    return _simultaneous_run("pgd", inst, p0, stop, step, snapshot_every, callback, residual_every)


def run_siwf(inst: NetworkInstance, p0=None,
             stop: StoppingRule = StoppingRule(residual_tol=1e-8),
             order: Optional[Sequence[int]] = None,
             seed: Optional[int] = None,
             snapshot_every: Optional[int] = None,
             callback: Optional[Callable] = None,
             residual_every: Optional[int] = None,
             record_every: int = 1,
             gate_residual: bool = False) -> RunTrace:
    """Sequential iterative water-filling (Gauss-Seidel best replies).

    One user per update replaces its row by its exact best reply, round-robin
    over ``order`` (default ``0..N-1``). With ``seed`` given, each sweep uses
    a fresh random permutation drawn from that seed instead.

    The full residual costs N water-fills, so by default it is evaluated once
    per sweep (``residual_every = N``); rows in between carry NaN. With
    ``record_every > 1`` the trace only keeps every such row plus the rows
    where the residual was evaluated, which is enough when only the endpoint
    matters. ``gate_residual=True`` skips the residual at the end of any
    sweep whose largest single-entry change exceeded ``stop.residual_tol``;
    the stop decision still rests on the full residual.
    """
    n = inst.n_users
    if order is None:
        order = list(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the users")
    rng = np.random.default_rng(seed) if seed is not None else None
    if residual_every is None:
        residual_every = n
    if record_every < 1:
        raise ValueError("record_every must be positive")
    caps = _row_caps(inst)
    p = check_profile(inst, prepare_start(inst, p0)).copy()
    trace = RunTrace("siwf")
    residual = _residual_inf(inst, p, caps)
    _record(trace, inst, p, 0, residual)
    _snap(trace, p, 0, snapshot_every)
    if callback is not None:
        callback(0, p)
    if stop.converged(trace.potential[-1], residual):
        return _finish(trace, p, "converged")
    total = inst.noise + (inst.gain * p).sum(axis=0)
    sweep = list(order)
    gate = stop.residual_tol if gate_residual and stop.residual_tol is not None else math.inf
    moved = 0.0
    for t in range(1, stop.max_iters + 1):
        pos = (t - 1) % n
        if rng is not None and pos == 0:
            sweep = list(rng.permutation(n))
        i = sweep[pos]
        e = (total - inst.gain[i] * p[i]) / inst.gain[i]
        new = _water_fill(e, inst.budget[i], caps[i]).allocation
        if gate < math.inf:
            moved = max(moved, float(np.max(np.abs(new - p[i]))))
        total += inst.gain[i] * (new - p[i])
        p[i] = new
        if pos == n - 1:
            # exact recompute once per sweep so incremental updates cannot drift
            total = inst.noise + (inst.gain * p).sum(axis=0)
        check = t % residual_every == 0 or t == stop.max_iters
        if check and moved > gate and t < stop.max_iters:
            check = False
        if t % residual_every == 0:
            moved = 0.0
        if check:
            residual = _residual_inf(inst, p, caps)
        else:
            residual = math.nan
            if t % record_every:
                _snap(trace, p, t, snapshot_every)
                if callback is not None:
                    callback(t, p)
                continue
        _record(trace, inst, p, t, residual, 1.0)
        _snap(trace, p, t, snapshot_every)
        if callback is not None:
            callback(t, p)
        if stop.converged(trace.potential[-1], residual if math.isfinite(residual) else math.inf):
            return _finish(trace, p, "converged")
    return _finish(trace, p, "max_iters")
