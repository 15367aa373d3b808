"""Command line entry point: ``poissel {simulate,estimate,benchmark,changepoint,verify}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from . import harness
from .point_process import ProcessSample, simulate


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file or built-in name "
                            f"({', '.join(harness.BUILTIN_SCENARIOS)})")
    p.add_argument("--seed", type=int, default=None, help="seed (u64); overrides the scenario")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes for replicates")
    p.add_argument("--constants", choices=("paper", "calibrated"), default=None,
                   help="test constants; the scenario decides when omitted")
    p.add_argument("--epsilon", type=float, default=None, help="penalty multiplier")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poissel", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one sample of the scenario truth")
    _common(p)
    p.add_argument("--n", type=int, default=None, help="number of processes")

    p = sub.add_parser("estimate", help="select a candidate for one sample")
    _common(p)
    p.add_argument("--n", type=int, default=None, help="number of processes")
    p.add_argument("--sample", default=None, help="sample JSON written by 'simulate'")

    for name, text in (("benchmark", "Monte Carlo risk over the scenario's n grid"),
                       ("changepoint", "change-point recovery report")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--replicates", type=int, default=None)

    p = sub.add_parser("verify", help="closed-form, concentration and covering checks")
    _common(p, scenario=False)
    p.add_argument("--suite", choices=("identities", "concentration", "covering", "all"),
                   default="all")
    p.add_argument("--quad-tol", type=float, default=1e-6,
                   help="tolerance of the quadrature comparisons")
    p.add_argument("--eta-scale", type=float, default=1.0,
                   help="scale applied to the advertised net radii before covering checks")
    p.add_argument("--reps", type=int, default=10_000, help="Monte Carlo replicates")
    return ap


def _scenario(args) -> harness.Scenario:
    sc = harness.Scenario.load(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    if getattr(args, "replicates", None):
        sc.replicates = args.replicates
    return sc


def _emit(obj: dict, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text + "\n")
    print(text)


def _checks(checks) -> int:
    if checks:
        print(harness.format_checks(checks))
    return 0 if all(c.passed for c in checks) else 1


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "verify":
        checks = harness.verify(args.suite, args.quad_tol, args.eta_scale, args.reps,
                                args.seed or 0)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, "verify.json"), "w") as fh:
                json.dump([asdict(c) for c in checks], fh, indent=2)
        return _checks(checks)

    sc = _scenario(args)
    if args.command in ("simulate", "estimate"):
        n = args.n or int(sc.n_grid[0])
        seed = sc.seed
        truth = sc.truth_for(n)
        if args.command == "estimate" and args.sample:
            with open(args.sample) as fh:
                sample = ProcessSample.from_json(fh.read())
            if sample.n != n and args.n is None:
                n = sample.n
                truth = sc.truth_for(n)
        else:
            sample = simulate(truth, sc.X(n), sc.T, seed)
        if args.command == "simulate":
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                with open(os.path.join(args.out, "sample.json"), "w") as fh:
                    fh.write(sample.to_json())
            counts = [int(e.size) for e in sample.events]
            print(json.dumps({"n": n, "seed": seed, "events": sum(counts),
                              "max_per_process": max(counts) if counts else 0}))
            return 0
        res = harness.estimate(sc, n, sample, args.constants, args.epsilon)
        out = res.summary()
        out["risk"] = harness.hellinger_sq(truth, res.selected, sc.X(n), sc.T)
        _emit(out, args.out, "estimate.json")
        return 0

    if args.command == "benchmark":
        rep = harness.run_benchmark(sc, args.workers, args.constants, args.epsilon)
        if args.out:
            rep.write(args.out, f"{sc.name}")
        print(json.dumps(rep.to_json_dict(), indent=2))
        return _checks(harness.evaluate_checks(sc, rep))

    cp = harness.changepoint_report(sc, args.workers, args.constants, args.epsilon)
    if args.out:
        cp["report"].write(args.out, f"{sc.name}")
        with open(os.path.join(args.out, f"{sc.name}_changepoint.json"), "w") as fh:
            json.dump(cp["per_n"], fh, indent=2)
    print(json.dumps(cp["per_n"], indent=2))
    return _checks(harness.evaluate_checks(sc, cp=cp))


if __name__ == "__main__":
    sys.exit(main())
