"""Linear-speedup trend on the toy MAML task.

With T fixed and the step size and sync period taken from the FCSG schedule,
adding workers lowers the final gradient norm: each step consumes N times
more samples and the prescribed step size grows like sqrt(N).
"""

import warnings

import numpy as np

from fedcso import FederationConfig, TaskSpec, make_task, run
from fedcso.schedules import fcsg_schedule

spec = TaskSpec("maml-toy", 10)
T = 1000
print(f"{'N':>3} {'q':>3} {'alpha':>8} {'mean final ||grad F||^2':>24}")
for N in (1, 2, 4, 8, 16):
    finals = []
    for seed in range(5):
        task = make_task(spec, N, seed=seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = fcsg_schedule(N, T, task.constants.S_F)
        cfg = FederationConfig(spec, "fcsg", n_workers=N, steps=T, local_steps=s.q, lr=s.alpha, seed=seed)
        finals.append(run(cfg, task=task).rows[-1].grad_norm_sq)
    print(f"{N:3d} {s.q:3d} {s.alpha:8.4f} {np.mean(finals):24.4e}")
