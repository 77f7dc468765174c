"""
Collisions thin out as channels are added
=========================================

A small version of the collision study: for each channel count, ten seeded
networks are driven to equilibrium and the shared channels are counted.
"""

from uplinkgame.experiments import ExperimentConfig, run_experiment

config = ExperimentConfig(kind="collision_vs_K", n_users=(10,), n_channels=(32, 64, 128),
                          replicates=10, output="demo")
result = run_experiment(config)

# %%
# Means and standard errors over the replicates.
for metric in ("collided_channels", "total_collisions", "efficiency"):
    rows = sorted((s for s in result.summary if s["metric"] == metric), key=lambda s: s["K"])
    cells = "  ".join(f"K={s['K']}: {s['mean']:.4f} +/- {s['stderr']:.4f}" for s in rows)
    print(f"{metric:18s} {cells}")

for c in result.checks:
    print("PASS" if c["passed"] else "FAIL", c["name"])
