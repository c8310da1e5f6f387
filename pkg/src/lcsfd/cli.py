"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import StudyConfig, profile
from .design import compute_gamma, least_costly_problem, solve_classical, solve_least_costly
from .errors import LcsfdError
from .harness import StudyResult, design_problem, generate_test_suite, montecarlo, rest_dataset
from .ident import NoeModel, noe_simulate, rmse, train_lm
from .plant import Dataset, IoModel, simulate_output
from .report import write_report
from .signals import multisine_periods, read_signal_csv, write_signal_csv

log = logging.getLogger("lcsfd")


def _config(args, default_profile=None):
    name = getattr(args, "profile", None) or default_profile
    base = profile(name) if name else StudyConfig()
    if getattr(args, "config", None):
        return StudyConfig.load(args.config, base)
    return base


def cmd_design(args):
    cfg = StudyConfig.from_dict({"master_seed": args.seed}, _config(args))
    problem = design_problem(cfg, 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    classical = solve_classical(problem)
    result = {"seed": args.seed, "classical": classical.to_dict()}
    final = classical
    if args.mode == "least-costly":
        gamma = compute_gamma(classical, problem.margin)
        final = solve_least_costly(least_costly_problem(problem, gamma, classical.theta_opt))
        result["least_costly"] = final.to_dict()
    (out / "design.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    write_signal_csv(out / "signal.csv", multisine_periods(final.theta_opt, cfg.signal))
    print(
        f"{final.mode}: V={final.v_cost_achieved:.6g} power={final.power:.6g} "
        f"rho={final.covering_radius:.4g} converged={final.converged}"
    )


def cmd_simulate(args):
    cfg = _config(args)
    u = read_signal_csv(args.signal)
    plant = IoModel.nonlinear(cfg.msd, cfg.signal.fs)
    y = simulate_output(plant, u)
    dy_scale = cfg.design.dy_scale if cfg.design.dy_scale is not None else cfg.signal.fs
    data = rest_dataset(u, y, dy_scale, {"model": plant.kind, "source": str(args.signal)})
    data.to_csv(args.out)
    print(f"wrote {len(data)} samples to {args.out}")


def cmd_identify(args):
    cfg = _config(args)
    data = Dataset.from_csv(args.train)
    model, trace = train_lm(data.u, data.y, cfg.train)
    model.save(args.out)
    print(f"final cost {trace.costs[-1]:.6g} after {trace.iterations} iterations ({trace.message})")


def cmd_evaluate(args):
    model = NoeModel.load(args.model)
    data = Dataset.from_csv(args.test)
    yhat = noe_simulate(model, data.u, data.y)
    n0 = model.n_init
    print(f"{rmse(data.y[n0:], yhat[n0:]):.9g}")


def cmd_montecarlo(args):
    cfg = _config(args, default_profile="desk")
    if args.realizations is not None:
        cfg = StudyConfig.from_dict({"realizations": args.realizations}, cfg)
    out = Path(args.out or cfg.output_dir)
    start = time.perf_counter()

    def progress(rec):
        log.info("realization %d: %s", rec["index"], rec["status"])

    result = montecarlo(cfg, progress)
    write_report(result, out, plots=not args.no_plots)
    agg = result.aggregates()
    print(
        f"{agg['succeeded']}/{agg['realizations']} realizations succeeded in "
        f"{time.perf_counter() - start:.0f} s; report in {out}"
    )


def cmd_report(args):
    try:
        result = StudyResult.load(args.study)
    except (json.JSONDecodeError, KeyError) as exc:
        raise _BadInput(f"{args.study}: not a study file ({exc})") from exc
    paths = write_report(result, args.out, plots=not args.no_plots)
    print("\n".join(str(p) for p in paths))


def cmd_testsuite(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in generate_test_suite(cfg).items():
        data.to_csv(out / f"{name}.csv")
        print(out / f"{name}.csv")


class _BadInput(LcsfdError):
    exit_code = 2


def build_parser():
    p = argparse.ArgumentParser(prog="lcsfd", description="Least-costly space-filling input design")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="JSON study configuration (unknown keys are rejected)")
        sp.add_argument("--profile", choices=("desk", "paper"), help="base configuration")
        return sp

    d = with_config(sub.add_parser("design", help="classical or least-costly multisine design"))
    d.add_argument("--mode", choices=("classical", "least-costly"), default="classical")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    s = with_config(sub.add_parser("simulate", help="simulate the plant for a (k,u) signal CSV"))
    s.add_argument("--signal", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    i = with_config(sub.add_parser("identify", help="fit a NOE model to a dataset CSV"))
    i.add_argument("--train", required=True)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_identify)

    e = sub.add_parser("evaluate", help="free-run RMSE of a model on a dataset CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    e.set_defaults(func=cmd_evaluate)

    m = with_config(sub.add_parser("montecarlo", help="run a Monte Carlo study and write its report"))
    m.add_argument("--realizations", type=int)
    m.add_argument("--out")
    m.add_argument("--no-plots", action="store_true")
    m.set_defaults(func=cmd_montecarlo)

    r = sub.add_parser("report", help="rewrite tables and figures from study.json")
    r.add_argument("--study", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_report)

    t = with_config(sub.add_parser("testsuite", help="write the validation datasets as CSV"))
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_testsuite)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except LcsfdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
