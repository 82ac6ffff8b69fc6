"""Run a small asynchronous search on the toy workload and report its metrics.

    python tutorials/01_search_and_metrics.py
"""

from abotune import SearchBudget, best_trace, load_fixture, mean_best, metrics_report, run_search

space, workload = load_fixture("toy4")
budget = SearchBudget(max_evaluations=60)

rf = run_search(space, None, {"surrogate": "rf", "n_candidates": 1000}, workload, workers=4, budget=budget, seed=0)
rand = run_search(space, None, {"surrogate": "rand"}, workload, workers=4, budget=budget, seed=0)

print("best configuration:", rf.metadata["best_config"])
print("optimum:           ", space.normalize(workload.target))

# compare both searches over the shorter of their two horizons
t_max = min(rf.metadata["t_stop"], rand.metadata["t_stop"])
for name, h in (("rf", rf), ("rand", rand)):
    trace = best_trace(h, t_max)
    print(f"{name:5s} R_best={trace.final:7.3f}  E[R]={mean_best(trace):7.3f}")

report = metrics_report(rf, workers=4, t_max=t_max, baseline=rand)
print(f"speedup over random: {report.search_speedup:.2f} (reached={report.speedup_reached})")
print(f"utilization: {report.worker_utilization:.3f}")
