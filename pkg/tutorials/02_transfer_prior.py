"""Transfer a learned prior from one search to a larger space.

A first search runs on a 4-parameter space.  A tabular VAE is fitted on its
best 10% of configurations, then composed with uniform priors for two
parameters that only exist in the second search's space.

    python tutorials/02_transfer_prior.py
"""

import numpy as np

from abotune import (
    HistoryTable,
    Parameter,
    ParameterSpace,
    SearchBudget,
    SyntheticWorkload,
    TvaeConfig,
    best_trace,
    compose_prior,
    fit_vae_prior,
    load_fixture,
    mean_best,
    run_search,
)

old_space, old_workload = load_fixture("toy4")
source = run_search(
    old_space, None, {"n_candidates": 1000}, old_workload, workers=4, budget=SearchBudget(max_evaluations=80), seed=1
)

prior = fit_vae_prior(HistoryTable.from_search(source), q=0.10, config=TvaeConfig(epochs=200), seed=1)

new_space = ParameterSpace(
    old_space.params
    + (
        Parameter("prefetch", "integer", 0, 8),
        Parameter("codec", "categorical", labels=("none", "lz4", "zstd")),
    )
)
target = {**old_workload.target, "prefetch": 2, "codec": "lz4"}
new_workload = SyntheticWorkload(
    new_space,
    target,
    {**old_workload.weights, "prefetch": 4.0},
    {**old_workload.penalties, "codec": 1.0},
    base=old_workload.base,
)
composed = compose_prior(prior, old_space, new_space)

sample = composed.sample(np.random.default_rng(0))
print("a draw from the composed prior:", sample)

budget = SearchBudget(max_evaluations=40)
tl = run_search(new_space, composed, {"n_candidates": 1000}, new_workload, 4, budget, seed=2)
notl = run_search(new_space, None, {"n_candidates": 1000}, new_workload, 4, budget, seed=2)
t_max = min(tl.metadata["t_stop"], notl.metadata["t_stop"])
for name, h in (("transfer", tl), ("uniform", notl)):
    print(f"{name:8s} E[R] = {mean_best(best_trace(h, t_max)):.3f}")
