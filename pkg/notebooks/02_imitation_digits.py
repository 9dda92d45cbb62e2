"""
Imitating digit strokes
=======================

Ten synthetic pen strokes, one per digit, each jittered by a small random
affine map.  A network that outputs DMP parameters is compared with one of
the same size that regresses the raw trajectory.
"""

from pathlib import Path

import numpy as np

from ndp.imitation import (baseline_train_direct, generate_digit_dataset, split_dataset, stroke_spec,
                           train_imitation)
from ndp.plot import Series, render

out = Path("notebook_out")
out.mkdir(exist_ok=True)

# 10 samples per class at 300 time steps; 20% of each class is held out.
data = generate_digit_dataset(10, T=300, seed=0)
train, held = split_dataset(data, seed=0)
print(len(train), "training strokes,", len(held), "held out")

# The condition is the one-hot class.  The NDP also receives the start point,
# as the initial state of its DMP.
ndp, ndp_log = train_imitation(train, held, epochs=150, seed=0)
direct, direct_log = baseline_train_direct(train, held, match_params=ndp.params.net.n_params, seed=0)
print("parameters:", ndp.params.net.n_params, "(ndp) vs", direct.params.net.n_params, "(direct)")
print(f"held-out per-point loss: ndp {ndp_log.records[-1]['held_out_loss']:.4f}, "
      f"direct {direct_log.records[-1]['held_out_loss']:.4f}")

# Overlay one held-out stroke per model.
demo = next(d for d in held if d.digit == 2)
cond, start = demo.condition[None], demo.start[None]
pn, pd = ndp.predict(cond, start)[0], direct.predict(cond, start)[0]
svg = render([Series("target", demo.target[:, 0], demo.target[:, 1]),
              Series("ndp", pn[:, 0], pn[:, 1]), Series("direct", pd[:, 0], pd[:, 1])],
             "digit 2, held out", "x", "y", equal_aspect=True)
(out / "digit2.svg").write_text(svg)

# The class template itself, for reference.
template = stroke_spec(2).curve()
print("template arc length:", round(float(np.linalg.norm(np.diff(template, axis=0), axis=-1).sum()), 3))
