"""Multi-critic PPO for whole-body loco-manipulation with twist-based
end-effector commands, trained against a deterministic desk-scale simulator."""

from .commands import (
    CommandVector,
    FrameCurriculum,
    GaitState,
    TrajectorySpec,
    Twist,
    advance_gait,
    boxminus,
    boxplus,
    express_in_frame,
    foot_heights,
    interpolate,
    lerp,
    resample_base_command,
    sample_goal_pose,
    slerp,
    twist_command,
)
from .config import ConfigError, ExperimentConfig, load_config, save_snapshot
from .env import (
    ActionConfig,
    DisturbanceConfig,
    EnvConfig,
    PhysicsConfig,
    RobotState,
    ToyVecEnv,
    apply_action,
    ee_forward_kinematics,
    observe,
    randomize_episode,
)
from .lie import Pose
from .neural import Adam, GaussianPolicy, Mlp, RunningNormalizer, log_prob_and_entropy
from .ppo import (
    DistillConfig,
    MultiCriticAgent,
    PpoConfig,
    RolloutBuffer,
    gae,
    normalize_advantages,
    ppo_loss,
    total_advantage,
)
from .rewards import GroupedReward, RewardConfig, compute_rewards, gaussian_kernel
from .task import CommandConfig, LocomanipTask
from .trainer import distill, load_policy, train

__version__ = "0.1.0"
