"""
Two users, two channels
=======================

Both users see gain 1 on the first channel and gain 2 on the second, with
unit noise and unit budgets. The game has a whole segment of equilibria.
"""

import numpy as np

from uplinkgame import (
    StoppingRule,
    br_residual,
    potential,
    run_siwf,
    run_simultaneous_iwf,
    solve_max_potential,
    sum_rate,
    verify_ne,
)
from uplinkgame.scenario import example1_equilibria, make_example1

inst = make_example1()
cert = solve_max_potential(inst)
print(f"certified maximum potential {cert.value:.7f} nats (gap bound {cert.gap_bound:.1e})")

# %%
# The two pure equilibria and their midpoint all reach the maximum.
p_tilde, p_hat = example1_equilibria()
for name, p in [("p_tilde", p_tilde), ("p_hat", p_hat), ("midpoint", (p_tilde + p_hat) / 2)]:
    rep = verify_ne(inst, p, cert)
    print(f"{name:9s} residual {rep.residual_inf:.1e}  potential {potential(inst, p):.7f}"
          f"  sum rate {sum_rate(inst, p):.7f}")

# %%
# Sequential best replies settle after two updates from the uniform start.
tr = run_siwf(inst, None, StoppingRule(residual_tol=1e-12))
print("sequential IWF:", tr.reason, "after", tr.t[-1], "updates")
print(np.round(tr.final, 6))

# %%
# Simultaneous best replies from a shared start jump back and forth forever.
tr = run_simultaneous_iwf(inst, [[1.0, 0.0], [1.0, 0.0]], divergence_guard=20)
print("simultaneous IWF:", tr.reason)
for t in range(4):
    print(f"  t={t} residual {tr.residual_inf[t]:.3f}")
print("final residual", np.abs(br_residual(inst, tr.final)).max())
