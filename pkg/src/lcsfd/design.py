"""Classical and least-costly space-filling input design.

The classical design minimizes the V-cost (average GP posterior variance at
the anchors) over the multisine parameters. The least-costly design
minimizes the signal power subject to ``V <= gamma``, where ``gamma`` sits a
relative margin above the classical optimum.

Both problems are solved with a projected BFGS method on central finite
difference gradients; the constraint is handled by an augmented Lagrangian
outer loop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    EvaluationError,
    PreconditionError,
)
from .gp import GpConfig, v_cost
from .plant import IoModel, simulate_dataset
from .signals import (
    AMPLITUDE_BOUNDS,
    MultisineConfig,
    SignalParams,
    multisine_periods,
    peak_amplitude,
    signal_power,
)
from .spacefill import AnchorGrid, RegionOfInterest, covering_radius

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    fd_step: float = 1e-4
    max_iterations: int = 200
    lc_inner_iterations: int = 200
    cost_tol: float = 1e-6
    cost_window: int = 5
    step_tol: float = 1e-8
    max_rejections: int = 10
    initial_step: float = 1.0
    constraint_tol: float = 1e-4
    max_evaluations: int = 50_000
    max_outer: int = 15
    outer_tol: float = 1e-4
    penalty0: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    method: str = "augmented_lagrangian"
    cost: str = "power"

    def __post_init__(self):
        if self.method not in ("augmented_lagrangian", "penalty"):
            raise ConfigurationError(f"unknown constrained method {self.method!r}")
        if self.cost not in ("power", "peak"):
            raise ConfigurationError(f"unknown experiment cost {self.cost!r}")
        if self.fd_step <= 0 or self.max_iterations < 1 or self.max_evaluations < 1:
            raise ConfigurationError("solver options must be positive")


@dataclass
class DesignProblem:
    model: IoModel
    signal: MultisineConfig
    gp: GpConfig
    anchors: AnchorGrid
    theta0: SignalParams
    x0: tuple[float, float] = (0.0, 0.0)
    mode: str = "classical"
    gamma: float | None = None
    margin: float = 0.05
    warmup_periods: int = 2
    dy_scale: float | None = None
    bounds: tuple[float, float] = AMPLITUDE_BOUNDS
    region: RegionOfInterest = field(default_factory=RegionOfInterest)
    eval_counts: tuple[int, int] = (101, 101)
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mode not in ("classical", "least_costly"):
            raise ConfigurationError(f"unknown design mode {self.mode!r}")
        if self.margin <= 0:
            raise ConfigurationError("margin must be positive")
        if self.mode == "least_costly" and not (self.gamma and self.gamma > 0):
            raise ConfigurationError("least-costly design needs gamma > 0")
        if self.theta0.n_lines != self.signal.n_lines:
            raise ConfigurationError("theta0 does not match the multisine configuration")

    @property
    def n_lines(self):
        return self.signal.n_lines

    def lower_upper(self):
        lo = np.concatenate((np.full(self.n_lines, self.bounds[0]), np.full(self.n_lines, -np.inf)))
        hi = np.concatenate((np.full(self.n_lines, self.bounds[1]), np.full(self.n_lines, np.inf)))
        return lo, hi


@dataclass
class DesignOutcome:
    theta_opt: SignalParams
    v_cost_achieved: float
    power: float
    covering_radius: float
    radius_center: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    constraint_violation: float = 0.0
    gamma: float | None = None
    mode: str = "classical"
    message: str = ""
    trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "mode": self.mode,
            "theta": self.theta_opt.to_dict(),
            "v_cost": self.v_cost_achieved,
            "power": self.power,
            "covering_radius": self.covering_radius,
            "radius_center": [float(v) for v in self.radius_center],
            "gamma": self.gamma,
            "constraint_violation": self.constraint_violation,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "message": self.message,
            "trace": [float(v) for v in self.trace],
        }


class BudgetExceeded(Exception):
    pass


def fd_gradient(objective, theta, h=1e-4):
    """Central differences with per-coordinate step ``h * max(1, |theta_i|)``."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += step
        tm[i] -= step
        fp = objective(tp)
        fm = objective(tm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"objective not finite when perturbing coordinate {i}", i)
        grad[i] = (fp - fm) / (tp[i] - tm[i])
    return grad


def _simulate(theta, problem):
    params = SignalParams.from_vector(theta)
    return simulate_dataset(
        problem.model,
        params,
        problem.signal,
        problem.x0,
        problem.warmup_periods,
        problem.dy_scale,
    )


def experiment_cost(theta, problem):
    u = multisine_periods(SignalParams.from_vector(theta), problem.signal)
    if problem.options.cost == "peak":
        return peak_amplitude(u)
    return signal_power(u)


def evaluate_design(theta, problem: DesignProblem):
    """Simulate the design model under ``u_theta``; return ``(v_cost, power, dataset)``."""
    theta = theta.to_vector() if isinstance(theta, SignalParams) else np.asarray(theta, float)
    data = _simulate(theta, problem)
    power = signal_power(multisine_periods(SignalParams.from_vector(theta), problem.signal))
    return v_cost(data, problem.anchors, problem.gp), power, data


class _Evaluator:
    """Counts and caches V-cost and experiment-cost evaluations."""

    def __init__(self, problem, budget):
        self.problem = problem
        self.budget = budget
        self.count = 0
        self._v = {}
        self._c = {}

    def _tick(self):
        if self.count >= self.budget:
            raise BudgetExceeded
        self.count += 1

    def v(self, theta):
        key = theta.tobytes()
        if key not in self._v:
            self._tick()
            try:
                val = v_cost(_simulate(theta, self.problem), self.problem.anchors, self.problem.gp)
            except DivergenceError:
                val = np.inf
            if len(self._v) > 256:
                self._v.clear()
            self._v[key] = val
        return self._v[key]

    def c(self, theta):
        key = theta.tobytes()
        if key not in self._c:
            self._tick()
            if len(self._c) > 256:
                self._c.clear()
            self._c[key] = experiment_cost(theta, self.problem)
        return self._c[key]


@dataclass
class _InnerResult:
    x: np.ndarray
    f: float
    iterations: int
    converged: bool
    message: str
    trace: list


def _projected_bfgs(fun, grad, x0, lower, upper, opts: SolverOptions, max_iter):
    """Box-constrained BFGS with projected Armijo backtracking.

    Accepted iterates strictly decrease ``fun``. A failed line search rejects
    the step, resets the curvature model and halves the trust length; after
    ``max_rejections`` consecutive failures the loop stops.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f = fun(x)
    if not np.isfinite(f):
        raise EvaluationError("objective not finite at the starting point")
    g = grad(x)
    hinv = None
    trust = opts.initial_step
    trace = [f]
    rejections = 0
    accepted = 0
    message = "iteration limit"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        blocked = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        pg = np.where(blocked, 0.0, g)
        pg_norm = np.linalg.norm(pg)
        if pg_norm <= 1e-14 * max(1.0, abs(f)):
            converged, message = True, "stationary point"
            break
        if hinv is None:
            d = -pg * (trust / pg_norm)
        else:
            d = -(hinv @ pg)
            d[blocked] = 0.0
            if d @ pg >= 0:
                hinv = None
                d = -pg * (trust / pg_norm)
            else:
                dn = np.linalg.norm(d)
                if dn > trust * 10.0:
                    d *= trust * 10.0 / dn
        t = 1.0
        step_ok = False
        for _ in range(30):
            xn = np.clip(x + t * d, lower, upper)
            fn = fun(xn)
            if np.isfinite(fn) and fn <= f + 1e-4 * (g @ (xn - x)) and fn < f:
                step_ok = True
                break
            t *= 0.5
        if not step_ok:
            rejections += 1
            hinv = None
            trust *= 0.5
            if rejections >= opts.max_rejections:
                converged = accepted > 0
                message = "line search exhausted"
                break
            continue
        rejections = 0
        accepted += 1
        s = xn - x
        gn = grad(xn)
        yv = gn - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if hinv is None:
                hinv = np.eye(x.size) * (sy / (yv @ yv))
            rho = 1.0 / sy
            v = np.eye(x.size) - rho * np.outer(s, yv)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        trust = max(trust, np.linalg.norm(s))
        x, f, g = xn, fn, gn
        trace.append(f)
        if np.linalg.norm(s) <= opts.step_tol * (1.0 + np.linalg.norm(x)):
            converged, message = True, "step tolerance"
            break
        w = opts.cost_window
        if len(trace) > w and trace[-1 - w] - f <= opts.cost_tol * abs(trace[-1 - w]):
            converged, message = True, "cost tolerance"
            break
    return _InnerResult(x, f, it, converged, message, trace)


def _outcome(theta, problem, mode, iterations, evaluations, converged, message, trace, gamma=None):
    v, power, data = evaluate_design(theta, problem)
    radius, center = covering_radius(data, problem.region, problem.eval_counts)
    violation = 0.0 if gamma is None else max(0.0, v / gamma - 1.0)
    return DesignOutcome(
        SignalParams.from_vector(theta),
        v,
        power,
        radius,
        center,
        iterations,
        evaluations,
        converged,
        violation,
        gamma,
        mode,
        message,
        list(trace),
    )


def solve_classical(problem: DesignProblem) -> DesignOutcome:
    """Locally minimize the V-cost over the box-bounded multisine parameters."""
    opts = problem.options
    ev = _Evaluator(problem, opts.max_evaluations)
    lower, upper = problem.lower_upper()
    theta0 = np.clip(problem.theta0.to_vector(), lower, upper)
    fun = ev.v

    def grad(x):
        return fd_gradient(fun, x, opts.fd_step)

    try:
        res = _projected_bfgs(fun, grad, theta0, lower, upper, opts, opts.max_iterations)
        x, it, conv, msg, trace = res.x, res.iterations, res.converged, res.message, res.trace
    except BudgetExceeded:
        x, it, conv, msg, trace = theta0, 0, False, "evaluation budget exceeded", [ev.v(theta0)]
    log.debug("classical design: %s after %d iterations, V=%.5g", msg, it, trace[-1])
    return _outcome(x, problem, "classical", it, ev.count, conv, msg, trace)


def compute_gamma(classical: DesignOutcome, margin=0.05):
    """Constraint level ``(1 + margin) * V`` of the classical solution."""
    if margin < 0:
        raise ConfigurationError("margin must be non-negative")
    if not classical.converged:
        log.warning("gamma computed from a classical design that did not converge")
    return (1.0 + margin) * classical.v_cost_achieved


class _BestFeasible:
    def __init__(self, theta, cost, v):
        self.theta, self.cost, self.v = theta.copy(), cost, v
        self.history = [cost]

    def offer(self, theta, cost, v):
        if cost <= self.cost:
            self.theta, self.cost, self.v = theta.copy(), cost, v
            self.history.append(cost)
            return True
        return False


def _restore(ev, x_bad, x_good, gamma, tol, steps=12):
    """Feasible point on the segment from ``x_good`` toward ``x_bad``, found by bisection."""
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        x = x_good + mid * (x_bad - x_good)
        if ev.v(x) <= gamma * (1.0 + tol):
            lo, best = mid, x
        else:
            hi = mid
    return best


def solve_least_costly(problem: DesignProblem) -> DesignOutcome:
    """Minimize the experiment cost subject to ``V <= gamma``.

    Augmented Lagrangian on the normalized constraint ``V / gamma - 1 <= 0``
    with the cost scaled by its value at ``theta0``. Each outer iterate is
    accepted only if feasible and not more costly than the incumbent;
    slightly infeasible inner solutions are pulled back toward the incumbent
    by bisection first.
    """
    if problem.mode != "least_costly" or problem.gamma is None:
        raise ConfigurationError("problem is not a least-costly design problem")
    opts = problem.options
    gamma = float(problem.gamma)
    tol = opts.constraint_tol
    ev = _Evaluator(problem, opts.max_evaluations)
    lower, upper = problem.lower_upper()
    theta0 = np.clip(problem.theta0.to_vector(), lower, upper)
    v0 = ev.v(theta0)
    if not v0 <= gamma * (1.0 + tol):
        raise PreconditionError(f"infeasible start: V(theta0)={v0:.6g} > gamma={gamma:.6g}")
    c0 = ev.c(theta0)
    scale = c0 if c0 > 0 else 1.0
    best = _BestFeasible(theta0, c0, v0)

    mult = 0.0
    penalty = opts.penalty0
    x = theta0
    prev_violation = np.inf
    prev_cost = c0
    total_iter = 0
    converged = False
    message = "outer iteration limit"
    try:
        for outer in range(opts.max_outer):
            mu, rho = mult, penalty

            def lagrangian(z, mu=mu, rho=rho):
                cz = ev.c(z) / scale
                shifted = ev.v(z) / gamma - 1.0 + mu / rho
                return cz + 0.5 * rho * max(0.0, shifted) ** 2 - 0.5 * mu * mu / rho

            def lagrangian_grad(z, mu=mu, rho=rho):
                g = fd_gradient(ev.c, z, opts.fd_step) / scale
                shifted = ev.v(z) / gamma - 1.0 + mu / rho
                if shifted > 0.0:
                    g = g + (rho * shifted / gamma) * fd_gradient(ev.v, z, opts.fd_step)
                return g

            res = _projected_bfgs(
                lagrangian, lagrangian_grad, x, lower, upper, opts, opts.lc_inner_iterations
            )
            total_iter += res.iterations
            x = res.x
            v_in, c_in = ev.v(x), ev.c(x)
            violation = max(0.0, v_in / gamma - 1.0)
            candidate = x if violation <= tol else _restore(ev, x, best.theta, gamma, tol)
            if candidate is not None:
                best.offer(candidate, ev.c(candidate), ev.v(candidate))
            log.debug(
                "outer %d: mu=%.3g rho=%.3g cost=%.6g V/gamma-1=%.3g best=%.6g",
                outer, mu, rho, c_in, v_in / gamma - 1.0, best.cost,
            )
            if opts.method == "augmented_lagrangian":
                mult = max(0.0, mu + rho * (v_in / gamma - 1.0))
            if violation > tol and violation > 0.25 * prev_violation:
                penalty = min(penalty * opts.penalty_growth, opts.penalty_max)
            elif opts.method == "penalty" and violation > tol:
                penalty = min(penalty * opts.penalty_growth, opts.penalty_max)
            small_change = abs(prev_cost - c_in) <= opts.outer_tol * max(abs(prev_cost), 1e-300)
            if violation <= tol and (small_change or c_in == 0.0):
                converged, message = True, "constraint satisfied, cost stationary"
                break
            if violation > tol and penalty >= opts.penalty_max and rho >= opts.penalty_max:
                message = "penalty limit reached"
                break
            prev_violation = violation
            prev_cost = c_in
    except BudgetExceeded:
        message = "evaluation budget exceeded"
        converged = False
    except EvaluationError as exc:
        message = f"inner solver stopped: {exc}"
        converged = False
    out = _outcome(
        best.theta, problem, "least_costly", total_iter, ev.count, converged, message,
        best.history, gamma,
    )
    return out


def least_costly_problem(classical_problem: DesignProblem, gamma, theta0=None):
    return replace(
        classical_problem,
        mode="least_costly",
        gamma=gamma,
        theta0=theta0 if theta0 is not None else classical_problem.theta0,
    )
