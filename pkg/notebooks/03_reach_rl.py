"""
Reaching with PPO
=================

The agent is a point mass in the unit square that must touch a random goal.
An NDP policy picks DMP parameters once every five env steps; vanilla PPO
picks a target position every step.  Both are trained for the same number of
env samples.
"""

from pathlib import Path

from ndp.plot import Series, render
from ndp.ppo import baseline_ppo, steps_to_success, train_ndp

out = Path("notebook_out")
out.mkdir(exist_ok=True)
budget = 60_000

ndp_log, ndp_trainer = train_ndp("reach", seed=0, total_steps=budget)
ppo_log, _ = baseline_ppo("reach", seed=0, total_steps=budget)

for name, log in (("ndp", ndp_log), ("ppo", ppo_log)):
    print(f"{name}: 50% success after {steps_to_success(log, 0.5):.0f} env steps, "
          f"final eval success {log.records[-1]['success_rate']:.2f}")

# Five env steps per decision means five times fewer actor forward passes.
print("ndp forward passes:", ndp_trainer.forward_passes, "for", ndp_trainer.env_steps, "env steps")

curves = [Series(name, [r["env_steps"] for r in log.records], [r["success_rate"] for r in log.records])
          for name, log in (("ndp", ndp_log), ("ppo", ppo_log))]
(out / "reach_success.svg").write_text(render(curves, "reach", "env steps", "success rate"))
