"""Scripted-controller probe: legs track the gait command, arm tracks the
commanded twist via differential IK. Measures achievable reward levels."""
import numpy as np
from locomanip.config import load_config
from locomanip.trainer import make_task
from locomanip.lie import quat_from_rpy, quat_rotate, quat_rotate_inverse, quat_conjugate, quat_mul

cfg = load_config(profile='desk')
task = make_task(cfg, 0)
task.set_iteration(10**9)
env = task.env
sig = env.sigma_a
stats = {k: [] for k in ('gq','bv_err','roll','pitch','term','wp_err','btrack','etrack')}
for t in range(1500):
    # leg actions toward commanded heights
    leg_target = task.foot_cmd
    # arm actions via damped least squares on the waypoint error (ctrl frame)
    arm_t = np.zeros((env.n, 6))
    for i in range(env.n):
        q_arm = env.joints[i, env.n_leg_dof:]
        J = env.arm.jacobian(q_arm)  # mount frame
        r, p, y = env.base_rpy[i]
        q_rp = quat_from_rpy(r, p, 0.0)
        v_ctrl = task.vee_cmd[i]; w_ctrl = task.wee_cmd[i]
        v_b = quat_rotate_inverse(q_rp, v_ctrl)
        w_b = quat_rotate_inverse(q_rp, w_ctrl)
        tw = np.r_[v_b, w_b]
        JJt = J @ J.T + 1e-3*np.eye(6)
        dq = J.T @ np.linalg.solve(JJt, tw)
        arm_t[i] = q_arm + np.clip(dq*env.cfg.action.control_dt*1.0, -0.08, 0.08)
    targets = np.concatenate([leg_target, arm_t], axis=1)
    actions = sig * np.clip(targets - env.joints, -1, 1)
    rewards, dones, timeouts, diag = task.step(actions)
    stats['gq'].append(env.gait_quality.mean())
    stats['bv_err'].append(diag['base_vel_err'].mean())
    stats['roll'].append(np.abs(env.base_rpy[:,0]).max())
    stats['pitch'].append(np.abs(env.base_rpy[:,1]).max())
    stats['term'].append(diag['terminated'].sum())
    stats['wp_err'].append(diag['ee_pos_err'].mean())
    stats['btrack'].append(diag['base_track_reward'].mean())
    stats['etrack'].append(diag['ee_track_reward'].mean())
w = 300
for k, v in stats.items():
    v = np.array(v)
    print(f"{k:8s} first300={v[:w].mean():8.4f}  last300={v[-w:].mean():8.4f}  max={v.max():8.4f}")
