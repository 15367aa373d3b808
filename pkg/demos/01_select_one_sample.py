"""Simulate one sample of a Cox-type truth and pick an intensity from explicit nets.

Run: python3 demos/01_select_one_sample.py
"""

from poissel import harness

sc = harness.Scenario.load("parametric")
n = 200
X, T = sc.X(n), sc.T
truth = sc.truth_for(n)

# Each replicate seed is derived from (scenario seed, n, replicate).
sample = harness.simulate(truth, X, T, harness.replicate_seed(sc.seed, n, 0))
print(f"{n} processes, {sample.flat()[0].size} events in total")

res = harness.estimate(sc, n, sample)
print("chosen candidate :", res.selected.ident)
print("from net         :", res.net_label)
print("candidates, rows :", res.n_candidates, res.rows_computed)
print("squared Hellinger loss to the truth:", harness.hellinger_sq(truth, res.selected, X, T))
