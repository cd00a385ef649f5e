"""Command-line entry point.

Exit codes: 0 when every check passes, 1 when any check fails or a run
records cell errors, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import ConfigError, StratRLHFError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _status(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float)


def _experiment_config(args):
    from .bench.experiment import ExperimentConfig
    from .env import load_config

    data = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(data)
    changes = {}
    if args.cf is not None:
        changes["c_f"] = args.cf
    if args.seeds is not None:
        changes["seeds"] = args.seeds
    if args.timing:
        changes["timing"] = True
    if args.out is not None:
        changes["output"] = args.out
    if args.exact:
        changes["attack"] = dataclasses.replace(cfg.attack, exact=True)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def cmd_run(args) -> int:
    from .bench.experiment import run_experiment

    cfg = _experiment_config(args)
    result = run_experiment(cfg, trace=args.trace, workers=args.workers)
    if cfg.output:
        for path in result.write(cfg.output, tsv=args.tsv, trace=args.trace):
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(result.to_csv("\t" if args.tsv else ","))
    for err in result.errors:
        print(f"error {err}", file=sys.stderr)
    return EXIT_FAIL if result.errors else EXIT_OK


def cmd_verify(args) -> int:
    from .bench.verify import verify_counterexamples

    report = verify_counterexamples(eps=args.eps)
    if args.json:
        print(_dump(report.to_dict()))
    else:
        for check in report.checks:
            print(check.line())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_conc(args) -> int:
    from .bench.concentration import ConcentrationConfig, concentration_suite

    kwargs = {"seed": args.seed}
    if args.cf is not None:
        kwargs["c_f"] = args.cf
    if args.trials is not None:
        kwargs["mle_trials"] = args.trials
    suites = concentration_suite(ConcentrationConfig(**kwargs))
    if args.json:
        print(_dump([s.to_dict() for s in suites]))
    else:
        for s in suites:
            print(f"{_status(s.passed)} {s.name}: slope {s.slope:+.3f} (target {s.target:+.1f} +/- {s.tol})")
            if "coverage" in s.extra:
                cov = ", ".join(f"{c:.3f}" for c in s.extra["coverage"])
                print(f"     coverage [{cov}] c_f={s.extra['c_f']} needed={s.extra['c_f_needed']:.3f}")
    return EXIT_OK if all(s.passed for s in suites) else EXIT_FAIL


def cmd_mdp_demo(args) -> int:
    from .bench.mdp_demo import MdpDemoConfig, run_mdp_demo

    kwargs = {"seed": args.seed}
    if args.cf is not None:
        kwargs["c_f"] = args.cf
    res = run_mdp_demo(MdpDemoConfig(**kwargs))
    if args.json:
        print(_dump(res.to_dict()))
    else:
        subopt = " -> ".join(f"{s:.4f}" for s in res.mean_subopt)
        print(f"mdp seed {res.mdp_seed}, optimal welfare {res.optimal_welfare:.4f}")
        print(f"{_status(res.monotone and res.converged)} mean subopt {subopt}")
        print(f"{_status(res.paths_agree)} gradient vs lp gap {res.max_lp_gap:.2e}, "
              f"enumeration vs gradient gap {res.max_path_gap:.2e}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_shape(args) -> int:
    from .bench.shape import ShapeConfig, run_shape

    kwargs = {"instances": args.instances}
    if args.cf is not None:
        kwargs["c_f"] = args.cf
    res = run_shape(ShapeConfig(**kwargs))
    if args.json:
        print(_dump(res.to_dict()))
    else:
        note = " (all gains zero)" if res.degenerate else ""
        print(f"{_status(res.passed)} ratio p95 {res.p95:.4g} vs {res.spread:g} x median {res.median:.4g}{note}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_sample(args) -> int:
    """Sample truthful datasets for one seed and print them, optionally with fits."""
    from .bench.experiment import build_arena
    from .estimation import confidence_set, fit_mle
    from .preference import LabelerDataset

    cfg = _experiment_config(args)
    arena = build_arena(cfg, cfg.algorithms[0], args.n, args.seed)
    out = []
    for i, q in enumerate(arena.queries):
        data = LabelerDataset(i, q, arena.base_labels(i), arena.instance.true_params[i])
        entry = data.to_dict(diagnostics=args.diagnostics)
        if args.fit:
            fit = fit_mle(data, arena.instance.B, float(arena.regs[i]), delta=cfg.delta)
            cset = confidence_set(fit, arena.k, cfg.delta, arena.instance.L, c_f=cfg.c_f)
            entry["fit"] = {**fit.to_dict(), "radius": cset.radius, "delta": cfg.delta}
        out.append(entry)
    print(json.dumps(out, default=float))
    return EXIT_OK


def cmd_backend(args) -> int:
    from . import kernels

    print(kernels.BACKEND)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratrlhf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--cf", type=float, default=None, help="confidence radius constant c_f")
        p.add_argument("--json", action="store_true", help="print a JSON report")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    def experiment_args(p):
        p.add_argument("config", nargs="?", default=None, help="YAML or JSON experiment config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--cf", type=float, default=None, help="confidence radius constant c_f")
        p.add_argument("--seeds", type=int, default=None)
        p.add_argument("--timing", action="store_true", help="record runtime_ms (breaks byte identity)")
        p.add_argument("--exact", action="store_true", help="attack with exact label enumeration")

    p = sub.add_parser("run", help="run the experiment grid")
    experiment_args(p)
    p.add_argument("--tsv", action="store_true", help="tab-separated rows")
    p.add_argument("--trace", action="store_true", help="also write attack trajectories")
    p.add_argument("--workers", type=int, default=None, help="process count (default STRATRLHF_THREADS)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="exact counterexample checks")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("conc", help="concentration Monte-Carlo suites")
    common(p)
    p.add_argument("--trials", type=int, default=None, help="MLE fits per sample size")
    p.set_defaults(func=cmd_conc)

    p = sub.add_parser("mdp-demo", help="tiny-MDP identical-labeler convergence run")
    common(p)
    p.set_defaults(func=cmd_mdp_demo)

    p = sub.add_parser("shape", help="gain versus bound shape check")
    common(p, seed=False)
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("sample", help="print truthful datasets for one seed as JSON")
    experiment_args(p)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fit", action="store_true", help="include MLE fits and radii")
    p.add_argument("--diagnostics", action="store_true", help="include the generating parameter")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("backend", help="print the active kernel backend")
    p.set_defaults(func=cmd_backend)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StratRLHFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
