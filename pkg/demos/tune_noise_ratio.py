"""Step-size selection for the noise-ratio experiment.

Invariant logistic regression at sigma2/sigma1 = 2 with 4 workers, 5000 steps
and a sync every 50.  The learning rate is chosen from {0.01, 0.005, 0.001}
by FCSG's mean final test accuracy at m = 1 on tuning seeds 100-104, which
are never used for evaluation.  The acceptance test hard-codes the winner.
Takes a couple of minutes.
"""

import numpy as np

from fedcso import FederationConfig, TaskSpec, make_task, run

spec = TaskSpec("invlogreg", 10, {"sigma1": 1.0, "sigma2": 2.0})
seeds = range(100, 105)
tasks = {s: make_task(spec, 4, seed=s) for s in seeds}

scores = {}
for lr in (0.01, 0.005, 0.001):
    acc = []
    for s in seeds:
        cfg = FederationConfig(spec, "fcsg", n_workers=4, steps=5000, local_steps=50, lr=lr, inner_batch=1, seed=s,
                               eval_outer=1000, eval_inner=100)
        acc.append(run(cfg, task=tasks[s]).rows[-1].test_metric)
    scores[lr] = float(np.mean(acc))
    print(f"lr={lr:<6} mean final accuracy {scores[lr]:.4f}")

print("selected lr:", max(scores, key=scores.get))
