"""Multi vs single critic learning probe at desk scale."""
import sys
import numpy as np
from locomanip.config import load_config
from locomanip.trainer import train
from locomanip.metrics import read_csv

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 300
for mode in ("multi_critic", "single_critic"):
    cfg = load_config(profile='desk', overrides={'ppo': {'iterations': iters}, 'mode': mode, 'seed': 0})
    res = train(cfg, f'/root/pkg/tmp_exp/run_{mode}')
    cols, rows = read_csv(res['metrics'])
    arr = np.asarray(rows, dtype=float)
    ix = {c: i for i, c in enumerate(cols)}
    def tail(c, n=30): return arr[-n:, ix[c]].mean()
    print(f"== {mode} ({res['wall_s']:.0f}s) ==")
    for c in ('base_track_reward','ee_track_reward','base_vel_rmse','ee_pos_rmse','gait_quality','terminations','entropy'):
        first = arr[:30, ix[c]].mean()
        print(f"  {c:18s} first30={first:9.4f} last30={tail(c):9.4f}")
