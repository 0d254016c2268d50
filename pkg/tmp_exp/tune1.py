"""Param study: does multi-critic walk now? log_std variants."""
import numpy as np
from locomanip.config import load_config
from locomanip.trainer import train
from locomanip.metrics import read_csv

def run(name, overrides, iters=400):
    o = dict(overrides)
    o.setdefault('ppo', {})['iterations'] = iters
    cfg = load_config(profile='desk', overrides=o)
    res = train(cfg, f'/root/pkg/tmp_exp/{name}')
    cols, rows = read_csv(res['metrics'])
    arr = np.asarray(rows, dtype=float)
    ix = {c: i for i, c in enumerate(cols)}
    line = f"{name:24s}"
    for c in ('base_track_reward','ee_track_reward','gait_quality','base_vel_rmse','terminations'):
        line += f" {c.split('_')[0][:4]}={arr[-40:, ix[c]].mean():7.3f}"
    print(line, flush=True)

run('m_std0', {'mode': 'multi_critic', 'seed': 0})
run('m_stdlow', {'mode': 'multi_critic', 'seed': 0, 'ppo': {'log_std_init': -1.0}})
run('s_std0', {'mode': 'single_critic', 'seed': 0})
run('s_stdlow', {'mode': 'single_critic', 'seed': 0, 'ppo': {'log_std_init': -1.0}})
