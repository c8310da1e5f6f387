"""Monte Carlo study: per-realization design, identification and validation.

Every random draw comes from its own stream,
``SeedSequence([master_seed, index, crc32(stage)])``, so a realization can be
rerun alone and reproduces its record exactly, whatever order or process
it ran in. The validation suite is drawn once per study from
``SeedSequence([master_seed, crc32("tests"), position])``.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import StudyConfig
from .design import (
    DesignProblem,
    compute_gamma,
    evaluate_design,
    least_costly_problem,
    solve_classical,
    solve_least_costly,
)
from .errors import LcsfdError, PreconditionError
from .ident import noe_simulate, rmse, train_lm
from .plant import IoModel, dataset_from_sequences, simulate_dataset, simulate_output
from .signals import (
    SignalParams,
    dense_multisine,
    log_sweep_eval,
    random_phases,
    white_uniform_sequence,
)
from .spacefill import build_anchor_grid, covering_radius

log = logging.getLogger(__name__)

DESIGNS = ("initial", "classical", "least_costly")
FORMAT = "lcsfd-study/1"
FEASIBILITY_TOL = 1e-4

EVALUATION_NOTE = (
    "every model is simulated in free run on the same noise-free test "
    "trajectories of the nonlinear plant started from rest"
)
SEED_NOTE = (
    "stream for stage s of realization i: SeedSequence([master_seed, i, crc32(s)]); "
    "test signal j: SeedSequence([master_seed, crc32('tests'), j])"
)


def stage_seed(master_seed, index, stage):
    return np.random.SeedSequence([int(master_seed), int(index), zlib.crc32(stage.encode())])


def stage_rng(master_seed, index, stage):
    return np.random.Generator(np.random.Philox(stage_seed(master_seed, index, stage)))


def _int_seed(seq):
    return int(seq.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- test suite


def rest_dataset(u, y, dy_scale, provenance):
    pad = np.concatenate(([y[0], y[0]], y))
    upad = np.concatenate(([0.0, 0.0], u))
    return dataset_from_sequences(upad, pad, 2, dy_scale, provenance)


def generate_test_suite(config: StudyConfig):
    """Validation datasets, one per configured test signal, keyed by name.

    Each is simulated on the nonlinear plant from rest over ``n_test``
    samples. Divergence is fatal for the whole suite.
    """
    fs, n = config.signal.fs, config.n_test
    plant = IoModel.nonlinear(config.msd, fs)
    dy_scale = config.design.dy_scale if config.design.dy_scale is not None else fs
    suite = {}
    for j, (name, spec) in enumerate(zip(config.test_names, config.tests)):
        seq = (
            np.random.SeedSequence(spec.seed)
            if spec.seed is not None
            else np.random.SeedSequence([config.master_seed, zlib.crc32(b"tests"), j])
        )
        if spec.kind == "multisine":
            rng = np.random.Generator(np.random.Philox(seq))
            u, _, _ = dense_multisine(spec, n, fs, config.signal.n_lines, rng)
        elif spec.kind == "log_sweep":
            duration = spec.duration if spec.duration is not None else n / fs
            u = log_sweep_eval(np.arange(n), spec.f_min, spec.f_max, duration, spec.amplitude, fs)
        else:
            u = white_uniform_sequence(seq, spec.variance, n)
        y = simulate_output(plant, u)
        suite[name] = rest_dataset(u, y, dy_scale, {"test": name, "kind": spec.kind})
    return suite


# -------------------------------------------------------------- realizations


def design_model(config, x1):
    if config.design.design_model == "nonlinear":
        return IoModel.nonlinear(config.msd, config.signal.fs)
    return IoModel.linear(config.msd, config.signal.fs, x1)


def _design_entry(theta, problem, outcome=None):
    if outcome is None:
        v, power, data = evaluate_design(theta, problem)
        radius, _ = covering_radius(data, problem.region, problem.eval_counts)
        return {"theta": theta.to_dict(), "power": power, "v_cost": v, "covering_radius": radius}
    d = outcome.to_dict()
    return {
        "theta": d["theta"],
        "power": d["power"],
        "v_cost": d["v_cost"],
        "covering_radius": d["covering_radius"],
        "iterations": d["iterations"],
        "evaluations": d["evaluations"],
        "converged": d["converged"],
        "message": d["message"],
    }


def design_problem(config: StudyConfig, index=0):
    """Classical design problem of realization ``index``: fresh phases, fresh linearization."""
    master = config.master_seed
    lines = config.signal.n_lines
    theta0 = SignalParams.constant(
        lines, config.design.initial_amplitude, random_phases(stage_rng(master, index, "phases"), lines)
    )
    x1 = 0.0
    if config.design.linearization == "jittered":
        jr = config.design.jitter_range
        x1 = float(stage_rng(master, index, "linearization").uniform(-jr, jr))
    return DesignProblem(
        model=design_model(config, x1),
        signal=config.signal,
        gp=config.gp,
        anchors=build_anchor_grid(config.region, config.anchor_counts),
        theta0=theta0,
        margin=config.design.margin,
        warmup_periods=config.design.warmup_periods,
        dy_scale=config.design.dy_scale,
        region=config.region,
        eval_counts=config.eval_counts,
        options=config.design.solver,
    )


def run_realization(index, config: StudyConfig, suite=None):
    """One full pass: designs, nonlinear training data, NOE fits, test RMSEs.

    A failure is caught and recorded with the stage it happened in, so the
    study can carry on.
    """
    if suite is None:
        suite = generate_test_suite(config)
    master = config.master_seed
    record = {"index": int(index), "status": "ok", "failed_stage": None, "error": None}
    stage = "setup"
    try:
        problem = design_problem(config, index)
        theta_ini = problem.theta0
        record["linearization_point"] = problem.model.linearization_point
        designs = {"initial": _design_entry(theta_ini, problem)}
        record["designs"] = designs
        stage = "classical"
        cl = solve_classical(problem)
        designs["classical"] = _design_entry(None, problem, cl)
        gamma = compute_gamma(cl, config.design.margin)
        record["gamma"] = gamma
        stage = "least_costly"
        lc = solve_least_costly(least_costly_problem(problem, gamma, cl.theta_opt))
        designs["least_costly"] = _design_entry(None, problem, lc)
        record["feasible"] = bool(lc.v_cost_achieved <= gamma * (1.0 + FEASIBILITY_TOL))
        thetas = {"initial": theta_ini, "classical": cl.theta_opt, "least_costly": lc.theta_opt}

        plant = IoModel.nonlinear(config.msd, config.signal.fs)
        record["rmse"] = {}
        record["training"] = {}
        for name in DESIGNS:
            stage = f"simulate_{name}"
            data = simulate_dataset(
                plant,
                thetas[name],
                config.signal,
                (0.0, 0.0),
                config.design.warmup_periods,
                config.design.dy_scale,
            )
            stage = f"train_{name}"
            seed = _int_seed(stage_seed(master, index, stage))
            noe, trace = train_lm(data.u, data.y, config.train, seed=seed)
            record["training"][name] = {
                "final_cost": trace.costs[-1],
                "iterations": trace.iterations,
                "best_restart": trace.best_restart,
                "restart_costs": trace.restart_costs,
                "lm_monotone": trace.monotone,
                "message": trace.message,
            }
            stage = f"evaluate_{name}"
            errors = {}
            for test_name, test in suite.items():
                yhat = noe_simulate(noe, test.u, test.y)
                n0 = noe.n_init
                errors[test_name] = rmse(test.y[n0:], yhat[n0:])
            record["rmse"][name] = errors
    except (LcsfdError, ArithmeticError, np.linalg.LinAlgError) as exc:
        record["status"] = "failed"
        record["failed_stage"] = stage
        record["error"] = f"{type(exc).__name__}: {exc}"
        log.warning("realization %d failed in %s: %s", index, stage, exc)
    return _clean(record)


def _clean(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# ------------------------------------------------------------------- result


def _median(values):
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def _mean(values):
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


@dataclass
class StudyResult:
    config: StudyConfig
    records: list
    provenance: dict = field(default_factory=dict)

    @property
    def succeeded(self):
        return [r for r in self.records if r["status"] == "ok"]

    @property
    def failed(self):
        return [r for r in self.records if r["status"] != "ok"]

    def rmse_medians(self):
        ok = self.succeeded
        return {
            d: {t: _median([r["rmse"][d][t] for r in ok]) for t in self.config.test_names}
            for d in DESIGNS
        }

    def aggregates(self):
        """Medians and means recomputed from the stored records."""
        ok = self.succeeded
        out = {
            "realizations": len(self.records),
            "succeeded": len(ok),
            "failed": len(self.failed),
            "designs": {},
        }
        for d in DESIGNS:
            entry = {}
            for q in ("power", "v_cost", "covering_radius"):
                vals = [r["designs"][d][q] for r in ok]
                entry[f"mean_{q}"] = _mean(vals)
                entry[f"median_{q}"] = _median(vals)
            out["designs"][d] = entry
        med = self.rmse_medians()
        out["median_rmse"] = med
        out["mean_rmse"] = {
            d: {t: _mean([r["rmse"][d][t] for r in ok]) for t in self.config.test_names}
            for d in DESIGNS
        }
        if ok:
            dd = out["designs"]
            out["power_ratio_classical_to_least_costly"] = _ratio(
                dd["classical"]["mean_power"], dd["least_costly"]["mean_power"]
            )
            out["mean_relative_v_gap"] = _mean(
                [
                    abs(r["designs"]["least_costly"]["v_cost"] - r["designs"]["classical"]["v_cost"])
                    / r["designs"]["classical"]["v_cost"]
                    for r in ok
                ]
            )
            out["covering_radius_relative_gap"] = abs(
                _ratio(dd["least_costly"]["mean_covering_radius"], dd["classical"]["mean_covering_radius"])
                - 1.0
            )
            ini = sum(med["initial"].values())
            out["error_reduction"] = {
                d: _ratio(ini, sum(med[d].values())) for d in ("classical", "least_costly")
            }
            out["all_feasible"] = all(r["feasible"] for r in ok)
            out["all_lm_monotone"] = all(
                t["lm_monotone"] for r in ok for t in r["training"].values()
            )
        return _clean(out)

    def to_dict(self):
        return {
            "format": FORMAT,
            "provenance": self.provenance,
            "config": self.config.to_dict(),
            "records": self.records,
            "aggregates": self.aggregates(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != FORMAT:
            raise PreconditionError(f"not a study file (format {data.get('format')!r})")
        return cls(StudyConfig.from_dict(data["config"]), data["records"], data.get("provenance", {}))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _ratio(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def provenance(config):
    return {
        "package": "lcsfd",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "seed_derivation": SEED_NOTE,
        "evaluation": EVALUATION_NOTE,
        "rmse_units": "m",
    }


def _worker(args):
    index, config, suite = args
    return run_realization(index, config, suite)


def montecarlo(config: StudyConfig, progress=None):
    """Run ``config.realizations`` independent realizations and collect them.

    With ``workers > 1`` realizations run in a process pool; records are
    kept in index order either way.
    """
    suite = generate_test_suite(config)
    indices = range(config.realizations)
    records = []
    if config.workers == 1:
        for i in indices:
            records.append(run_realization(i, config, suite))
            if progress:
                progress(records[-1])
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for rec in pool.map(_worker, [(i, config, suite) for i in indices]):
                records.append(rec)
                if progress:
                    progress(rec)
    return StudyResult(config, records, provenance(config))
