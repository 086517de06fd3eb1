"""Inner batch size versus noise ratio, FCSG against FCSG-M.

A scaled-down version of the invariant-logistic-regression study: for each
noise ratio sigma2/sigma1 and inner batch size m, run both algorithms and
report the final held-out accuracy and its spread over the last 50 rounds.  Larger noise ratios need larger m.
The same grid is available from the command line as

    fedcso sweep --task invlogreg --algo-list fcsg,fcsg-m --m-list 1,10,100 \
        --noise-ratio-list 1,1.5,2 --workers 4 --steps 5000 --local-steps 50 \
        --lr 0.005 --out runs/
"""

import numpy as np

from fedcso import FederationConfig, TaskSpec, run
from fedcso.objectives import make_task

LR = 0.005
rows = []
for ratio in (1.0, 1.5, 2.0):
    spec = TaskSpec("invlogreg", 10, {"sigma1": 1.0, "sigma2": ratio, "eval_size": 20000})
    task = make_task(spec, 4, seed=0)
    beta = 5 * task.constants.S_F * LR
    for m in (1, 10, 100):
        for algo, mom in (("fcsg", None), ("fcsg-m", beta)):
            cfg = FederationConfig(spec, algo, n_workers=4, steps=5000, local_steps=50, lr=LR, momentum=mom,
                                   inner_batch=m, seed=0, eval_outer=500, eval_inner=50)
            acc = run(cfg, task=task).column("test_metric")
            rows.append((ratio, m, algo, acc[-1], np.std(acc[-50:])))

print(f"{'ratio':>5} {'m':>4} {'algo':>7} {'final acc':>9} {'std last 50':>11}")
for ratio, m, algo, acc, sd in rows:
    print(f"{ratio:5.1f} {m:4d} {algo:>7} {acc:9.4f} {sd:11.2e}")
