"""Mean loss against n for the parametric scenario, with a log-log slope.

A reduced replicate count keeps this under a minute; the CLI command
``poissel benchmark --scenario parametric`` runs the full study.

Run: python3 demos/04_risk_rates.py
"""

from poissel import harness

sc = harness.Scenario.load("parametric")
sc.replicates = 8
rep = harness.run_benchmark(sc)
for n, m, se in zip(rep.n_grid, rep.mean, rep.se):
    print(f"n={n:4d} mean loss {m:.5f} (se {se:.5f})")
print(f"log-log slope {harness.rate_slope(rep):.3f} (parametric rate is -1)")
