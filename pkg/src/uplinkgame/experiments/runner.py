"""Seeded Monte Carlo harness.

Each replicate is independent (its own seed), so replicates may run in worker
processes; results are always reduced in replicate order, which keeps the CSV
byte-identical whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from ..dynamics import (
    StepSchedule,
    StoppingRule,
    run_aiwf,
    run_pgd,
    run_siwf,
    run_simultaneous_iwf,
)
from ..metrics import count_collisions, efficiency
from ..model import potential, sum_rate
from ..oracle import solve_max_potential, verify_ne
from ..scenario import ScenarioSpec, generate
from .config import ExperimentConfig

CSV_COLUMNS = ("experiment", "replicate", "algorithm", "K", "N", "B_c", "t", "metric", "value")
TREND_METRICS = ("collided_channels", "total_collisions", "efficiency", "sum_rate", "potential_gap")


class ReplicateError(RuntimeError):
    """A replicate failed; the message carries the seed needed to rerun it."""


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    replicates: list
    summary: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(_format_row(row))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"experiment": self.config.kind, "config": self.config.to_dict(),
                "summary": self.summary, "checks": self.checks, "passed": self.passed,
                "replicates": self.replicates}

    def write(self, out_dir) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.config.output}.csv"
        json_path = out / f"{self.config.output}.json"
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.csv_text())
        json_path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")
        return csv_path, json_path


def _format_bc(bc) -> str:
    return "independent" if bc is None else repr(float(bc))


def _format_row(row):
    exp, rep, alg, k, n, bc, t, metric, value = row
    v = repr(int(value)) if isinstance(value, (int, np.integer)) else repr(float(value))
    return [exp, rep, alg, k, n, _format_bc(bc), t, metric, v]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


# -- one replicate --------------------------------------------------------------

def _instance(config, n, k, bc, seed):
    spec = ScenarioSpec(n, k, seed=seed, area_side=config.area_side, budget=config.budget,
                        noise=config.noise, coherence_bandwidth=bc)
    return generate(spec)


def _run_algorithm(config, name, inst):
    sched = StepSchedule(**config.schedule)
    stop = StoppingRule(max_iters=config.max_iters)
    if name == "aiwf":
        return run_aiwf(inst, None, sched, stop=stop)
    if name == "siwf":
        return run_siwf(inst, None, stop=stop)
    if name == "pgd":
        return run_pgd(inst, None, StepSchedule(**config.pgd_schedule), stop=stop,
                       step_scale=config.pgd_step_scale)
    return run_simultaneous_iwf(inst, None, stop=StoppingRule(residual_tol=1e-3),
                                divergence_guard=config.divergence_guard)


def _convergence(config, r, n, k, bc, inst, cert, rows, finals):
    exp = config.kind
    runs = {}
    for name in config.algorithms:
        tr = _run_algorithm(config, name, inst)
        last = len(tr) - 1
        for j, t in enumerate(tr.t):
            if t % config.record_every and j != last:
                continue
            key = (exp, r, name, k, n, bc, t)
            rows.append(key + ("potential_gap", cert.upper_bound - tr.potential[j]))
            rows.append(key + ("sum_rate", tr.sum_rate[j]))
            if math.isfinite(tr.residual_inf[j]):
                rows.append(key + ("residual_inf", tr.residual_inf[j]))
        finals.append((name, k, n, bc, "potential_gap", cert.upper_bound - tr.potential[-1]))
        finals.append((name, k, n, bc, "sum_rate", tr.sum_rate[-1]))
        res = tr.residual_inf[-1]
        done = tr.reason == "converged" or (math.isfinite(res) and res <= config.residual_tol)
        finals.append((name, k, n, bc, "converged", int(done)))
        runs[name] = {"reason": tr.reason, "iterations": tr.t[-1],
                      "final_potential_gap": cert.upper_bound - tr.potential[-1],
                      "final_residual_inf": _finite(tr.residual_inf[-1])}
    return runs


def _equilibrium(config, r, n, k, bc, inst, cert, rows, finals):
    alg = config.equilibrium_algorithm
    if alg == "siwf":
        tr = run_siwf(inst, None, StoppingRule(residual_tol=config.residual_tol,
                                               max_iters=config.siwf_max_iters),
                      record_every=10 * config.siwf_max_iters, gate_residual=True)
    else:
        tr = run_aiwf(inst, None, StepSchedule(**config.schedule),
                      stop=StoppingRule(max_iters=config.max_iters), residual_every=0)
    p = tr.final
    stats = count_collisions(inst, p)
    values = {"collided_channels": stats.collided_channels,
              "total_collisions": stats.total_collisions,
              "sum_rate": sum_rate(inst, p), "potential": potential(inst, p)}
    doc = {"reason": tr.reason, "iterations": tr.t[-1]}
    if cert is not None:
        values["efficiency"] = efficiency(inst, p, cert)
        values["potential_gap"] = cert.upper_bound - values["potential"]
        doc["equilibrium"] = verify_ne(inst, p, cert).to_dict()
    t = tr.t[-1]
    for metric, v in values.items():
        rows.append((config.kind, r, alg, k, n, bc, t, metric, v))
        finals.append((alg, k, n, bc, metric, v))
    return doc


def run_replicate(config: ExperimentConfig, r: int):
    """Rows, final values and a JSON-ready record for replicate ``r``."""
    seed = config.base_seed + r
    rows, finals, instances = [], [], []
    for n, k, bc in product(config.n_users, config.n_channels, config.coherence_bandwidths):
        try:
            inst = _instance(config, n, k, bc, seed)
            cert = None
            if config.kind == "convergence" or config.certify:
                cert = solve_max_potential(inst)
            rec = {"N": n, "K": k, "B_c": bc}
            if cert is not None:
                rec["certificate"] = {"value": cert.value, "gap_bound": cert.gap_bound,
                                      "iterations": cert.iterations}
            if config.kind == "convergence":
                rec["runs"] = _convergence(config, r, n, k, bc, inst, cert, rows, finals)
            else:
                rec.update(_equilibrium(config, r, n, k, bc, inst, cert, rows, finals))
        except Exception as exc:
            raise ReplicateError(
                f"replicate {r} (seed {seed}) failed at N={n}, K={k}, B_c={_format_bc(bc)}: "
                f"{type(exc).__name__}: {exc}") from exc
        instances.append(rec)
    return rows, finals, {"replicate": r, "seed": seed, "instances": instances}


def _worker(args):
    return run_replicate(*args)


# -- aggregation and checks -------------------------------------------------------

def mean_stderr(values):
    a = np.asarray(values, dtype=float)
    m = float(np.mean(a))
    se = float(np.std(a, ddof=1) / np.sqrt(a.size)) if a.size > 1 else math.nan
    return m, se


def aggregate(finals_by_rep) -> list:
    groups = {}
    for finals in finals_by_rep:
        for alg, k, n, bc, metric, v in finals:
            groups.setdefault((alg, k, n, bc, metric), []).append(v)
    out = []
    for (alg, k, n, bc, metric), vals in groups.items():
        m, se = mean_stderr(vals)
        out.append({"algorithm": alg, "K": k, "N": n, "B_c": bc, "metric": metric,
                    "mean": m, "stderr": _finite(se), "n": len(vals)})
    return out


def _lookup(summary, metric, **key):
    for s in summary:
        if s["metric"] == metric and all(s[f] == v for f, v in key.items()):
            return s
    return None


def _se(s):
    return s["stderr"] if s["stderr"] is not None else 0.0


def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def _monotone(seq, direction, slack=True):
    """``seq`` is a list of summary entries; ``direction`` is +1 for
    non-decreasing, -1 for non-increasing. With ``slack`` each step may go
    against the direction by one standard error (the larger of the two)."""
    bad = []
    for a, b in zip(seq, seq[1:]):
        tol = max(_se(a), _se(b)) if slack else 0.0
        if direction * (b["mean"] - a["mean"]) < -tol:
            bad.append((a["mean"], b["mean"]))
    return bad


def trend_checks(config: ExperimentConfig, summary: list) -> list:
    """Directional assertions evaluated in ``--check`` mode."""
    checks = []
    kind = config.kind
    alg = config.equilibrium_algorithm
    ks = sorted(config.n_channels)
    bcs = sorted(config.coherence_bandwidths, key=lambda b: -1.0 if b is None else b)
    if kind == "convergence":
        for name in ("aiwf", "siwf"):
            for n, k, bc in product(config.n_users, ks, bcs):
                s = _lookup(summary, "potential_gap", algorithm=name, K=k, N=n, B_c=bc)
                if s is not None:
                    checks.append(_check(f"{name} gap < 1e-4 (N={n}, K={k})", s["mean"] < 1e-4,
                                         f"mean final gap {s['mean']:.3e}"))
        for n, k, bc in product(config.n_users, ks, bcs):
            s = _lookup(summary, "converged", algorithm="simultaneous_iwf", K=k, N=n, B_c=bc)
            if s is not None:
                checks.append(_check(f"simultaneous_iwf diverged (N={n}, K={k})", s["mean"] == 0,
                                     f"fraction converged {s['mean']:.3f}"))
    elif kind in ("collision_vs_K", "efficiency_vs_K"):
        for n, bc in product(config.n_users, bcs):
            if kind == "collision_vs_K":
                seq = [_lookup(summary, "collided_channels", algorithm=alg, K=k, N=n, B_c=bc)
                       for k in ks]
                bad = _monotone(seq, -1)
                checks.append(_check(f"collided channels decrease in K (N={n})", not bad,
                                     f"means {[round(s['mean'], 4) for s in seq]}"))
            if config.certify:
                seq = [_lookup(summary, "efficiency", algorithm=alg, K=k, N=n, B_c=bc)
                       for k in ks]
                bad = _monotone(seq, +1)
                checks.append(_check(f"efficiency non-decreasing in K (N={n})", not bad,
                                     f"means {[round(s['mean'], 6) for s in seq]}"))
    elif kind == "efficiency_vs_Bc":
        for n, k in product(config.n_users, ks):
            ind = _lookup(summary, "efficiency", algorithm=alg, K=k, N=n, B_c=None)
            full = _lookup(summary, "efficiency", algorithm=alg, K=k, N=n, B_c=1.0)
            if ind is None or full is None:
                continue
            tol = max(_se(ind), _se(full))
            checks.append(_check(f"B_c=1 no more efficient than independent (N={n}, K={k})",
                                 full["mean"] <= ind["mean"] + tol,
                                 f"{full['mean']:.6f} vs {ind['mean']:.6f}"))
    elif kind == "table1":
        for n, k in product(config.n_users, ks):
            seq = [_lookup(summary, "total_collisions", algorithm=alg, K=k, N=n, B_c=bc)
                   for bc in bcs]
            bad = _monotone(seq, +1)
            checks.append(_check(f"collisions increase with correlation (N={n}, K={k})", not bad,
                                 f"means {[round(s['mean'], 3) for s in seq]}"))
        for n, bc in product(config.n_users, bcs):
            seq = [_lookup(summary, "total_collisions", algorithm=alg, K=k, N=n, B_c=bc)
                   for k in ks]
            bad = _monotone(seq, -1)
            checks.append(_check(f"collisions decrease in K (N={n}, B_c={_format_bc(bc)})",
                                 not bad, f"means {[round(s['mean'], 3) for s in seq]}"))
    return checks


def run_experiment(config: ExperimentConfig, out_dir=None, threads: int = 1) -> ExperimentResult:
    """Run every replicate, aggregate, evaluate the trend checks and
    optionally write ``<output>.csv`` and ``<output>.json`` into ``out_dir``."""
    jobs = [(config, r) for r in range(config.replicates)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_worker, jobs))
    else:
        parts = [_worker(j) for j in jobs]
    rows = [row for part in parts for row in part[0]]
    summary = aggregate([part[1] for part in parts])
    result = ExperimentResult(config, rows, [part[2] for part in parts], summary)
    result.checks = trend_checks(config, summary)
    if out_dir is not None:
        result.write(out_dir)
    return result
