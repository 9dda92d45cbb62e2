"""Neural dynamic policies: a differentiable DMP layer on top of an MLP.

The network predicts DMP weights and goal; the DMP integrates a short
trajectory whose sub-sampled positions become the policy's actions.  The
package covers the DMP integrator and its analytic Jacobians, a small numpy
MLP/Adam stack, behaviour cloning on synthetic strokes, PPO with a k-head
critic, planar point-mass tasks and a command-line runner.
"""

from __future__ import annotations

from .dmp import DmpConfig, DmpParams, RolloutTape, rollout, subsample, subsample_indices
from .envs import PushEnv, ReachEnv, ThrowEnv, make_env
from .errors import ConfigError, ContractError, NdpError, NumericalError, ShapeError
from .gradients import backward, fd_check, gradient_sweep, trajectory_jacobians
from .imitation import baseline_train_direct, generate_digit_dataset, train_imitation
from .nets import Adam, DmpHead, Mlp, MlpSpec
from .ppo import PpoConfig, RlConfig, Trainer, baseline_ppo, baseline_ppo_multi, train_ndp

__version__ = "0.1.0"

__all__ = [
    "Adam", "ConfigError", "ContractError", "DmpConfig", "DmpHead", "DmpParams", "Mlp", "MlpSpec",
    "NdpError", "NumericalError", "PpoConfig", "PushEnv", "ReachEnv", "RlConfig", "RolloutTape",
    "ShapeError", "ThrowEnv", "Trainer", "backward", "baseline_ppo", "baseline_ppo_multi",
    "baseline_train_direct", "fd_check", "generate_digit_dataset", "gradient_sweep", "make_env",
    "rollout", "subsample", "subsample_indices", "train_imitation", "train_ndp", "trajectory_jacobians",
]
