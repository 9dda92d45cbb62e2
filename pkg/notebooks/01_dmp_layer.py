"""
The DMP layer on its own
========================

A DMP turns a handful of numbers (basis weights and a goal) into a smooth
trajectory.  This script rolls one out, shows how the weights bend it, and
checks the analytic Jacobians against finite differences.
"""

from pathlib import Path

import numpy as np

from ndp.dmp import DmpConfig, DmpParams, rollout
from ndp.gradients import fd_check
from ndp.plot import Series, render

out = Path("notebook_out")
out.mkdir(exist_ok=True)

# Two degrees of freedom, six Gaussian basis functions, 100 integration steps.
cfg = DmpConfig(n_basis=6, m_steps=100, k_rollout=10, dt=0.01)
y0 = np.array([-0.5, -0.5])
goal = np.array([0.5, 0.4])

# With zero weights the system is a critically damped spring pulled to the goal.
straight = rollout(DmpParams(np.zeros((2, 6)), goal), y0, np.zeros(2), cfg)
print("end point with w = 0:", straight.y[-1].round(4), "goal:", goal)

# Non-zero weights add a phase-dependent forcing term.  The end point stays
# near the goal because the forcing fades with the phase variable.
w = np.array([[0, 300, -200, 0, 0, 0], [400, 0, 0, -300, 0, 0]], dtype=float)
bent = rollout(DmpParams(w, goal), y0, np.zeros(2), cfg)
print("end point with forcing:", bent.y[-1].round(4))

svg = render([Series("w = 0", straight.y[:, 0], straight.y[:, 1]),
              Series("with forcing", bent.y[:, 0], bent.y[:, 1])],
             "two DMP rollouts", "x", "y", equal_aspect=True)
(out / "dmp_rollouts.svg").write_text(svg)

# The layer is differentiable: the analytic Jacobians of every position with
# respect to w and g agree with central differences.
report = fd_check(DmpParams(w, goal), y0, np.zeros(2), cfg)
print(f"max relative Jacobian error: {report.max_rel_error:.2e} ({report.n_checked} entries)")
