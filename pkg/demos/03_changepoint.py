"""Recover a change in the parameters of Duane intensities across processes.

Processes 0..119 follow 1.0 * t^0 and processes 120..199 follow 4.0 * t^1.
The selector chooses both the partition of the indices and the parameters.

Run: python3 demos/03_changepoint.py
"""

from poissel import harness
from poissel.point_process import PiecewiseParam

sc = harness.Scenario.load("changepoint")
sc.truth.pop("jitter")
n = 200
truth = sc.truth_for(n)
for rep in range(5):
    sample = harness.simulate(truth, sc.X(n), sc.T, harness.replicate_seed(sc.seed, n, rep))
    res = harness.estimate(sc, n, sample)
    sel = res.selected
    assert isinstance(sel, PiecewiseParam)
    params = [tuple(round(float(v), 3) for v in p) for p in sel.params]
    print(f"replicate {rep}: segment starts {sel.starts}, parameters {params}, "
          f"loss {harness.hellinger_sq(truth, sel, sc.X(n), sc.T):.4f}")
