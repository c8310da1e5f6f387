"""Nonlinear output-error (NOE) identification with a one-hidden-layer network.

The model predicts ``y(k) = W_x sigmoid(W_fx x(k) + b_f) + b_x`` from the
regressor ``x(k) = (y(k-1), .., y(k-m_y), u(k-1), .., u(k-m_u))`` and is
simulated in free run: past outputs in the regressor are its own
predictions. Parameters are fitted by Levenberg-Marquardt on the simulation
error, with exact sensitivities propagated through the feedback loop.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .errors import ConfigurationError, DivergenceError, DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_iterations: int = 300
    damping: float = 1e-2
    damping_up: float = 10.0
    damping_down: float = 10.0
    max_damping: float = 1e12
    cost_tol: float = 1e-9
    grad_tol: float = 1e-8
    restarts: int = 3
    init_scale: float = 1.0
    n_hidden: int = 8
    y_lags: int = 2
    u_lags: int = 2
    prefit: bool = True
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        positive = (
            self.max_iterations, self.damping, self.damping_up, self.damping_down,
            self.max_damping, self.cost_tol, self.grad_tol, self.restarts,
            self.init_scale, self.n_hidden, self.y_lags, self.u_lags,
        )
        if min(positive) <= 0:
            raise ConfigurationError("training options must be positive")


@dataclass
class NoeModel:
    """Network weights plus the standardization applied around them.

    ``eta`` orders the parameters as ``W_fx`` (row-major), ``b_f``, ``W_x``,
    ``b_x``. The network itself works on standardized signals
    ``(u - u_mean) / u_std`` and ``(y - y_mean) / y_std``.
    """

    w_fx: np.ndarray
    b_f: np.ndarray
    w_x: np.ndarray
    b_x: float
    y_lags: int = 2
    u_lags: int = 2
    u_mean: float = 0.0
    u_std: float = 1.0
    y_mean: float = 0.0
    y_std: float = 1.0

    def __post_init__(self):
        self.w_fx = np.array(self.w_fx, dtype=float, ndmin=2)
        self.b_f = np.array(self.b_f, dtype=float).reshape(-1)
        self.w_x = np.array(self.w_x, dtype=float).reshape(-1)
        self.b_x = float(self.b_x)
        h, nx = self.w_fx.shape
        if nx != self.y_lags + self.u_lags or self.b_f.size != h or self.w_x.size != h:
            raise ConfigurationError("inconsistent NOE weight shapes")

    @property
    def n_hidden(self):
        return self.w_fx.shape[0]

    @property
    def n_regressors(self):
        return self.y_lags + self.u_lags

    @property
    def n_params(self):
        return self.n_hidden * self.n_regressors + 2 * self.n_hidden + 1

    @property
    def n_init(self):
        return max(self.y_lags, self.u_lags)

    @property
    def eta(self):
        return np.concatenate((self.w_fx.ravel(), self.b_f, self.w_x, [self.b_x]))

    def with_eta(self, eta):
        h, nx = self.n_hidden, self.n_regressors
        eta = np.asarray(eta, dtype=float)
        if eta.size != self.n_params:
            raise ConfigurationError(f"expected {self.n_params} parameters, got {eta.size}")
        return NoeModel(
            eta[: h * nx].reshape(h, nx),
            eta[h * nx : h * nx + h],
            eta[h * nx + h : h * nx + 2 * h],
            eta[-1],
            self.y_lags,
            self.u_lags,
            self.u_mean,
            self.u_std,
            self.y_mean,
            self.y_std,
        )

    @classmethod
    def zeros(cls, n_hidden=8, y_lags=2, u_lags=2, b_x=0.0):
        nx = y_lags + u_lags
        return cls(np.zeros((n_hidden, nx)), np.zeros(n_hidden), np.zeros(n_hidden), b_x, y_lags, u_lags)

    @classmethod
    def random(cls, rng, n_hidden=8, y_lags=2, u_lags=2, scale=1.0):
        nx = y_lags + u_lags
        return cls(
            rng.uniform(-1, 1, (n_hidden, nx)) * scale / math.sqrt(nx),
            rng.uniform(-1, 1, n_hidden) * scale,
            rng.uniform(-1, 1, n_hidden) * scale / math.sqrt(n_hidden),
            0.0,
            y_lags,
            u_lags,
        )

    def to_dict(self):
        return {
            "architecture": {
                "n_hidden": self.n_hidden,
                "y_lags": self.y_lags,
                "u_lags": self.u_lags,
                "activation": "sigmoid",
            },
            "standardization": {
                "u_mean": self.u_mean,
                "u_std": self.u_std,
                "y_mean": self.y_mean,
                "y_std": self.y_std,
            },
            "weights": {
                "w_fx": self.w_fx.tolist(),
                "b_f": self.b_f.tolist(),
                "w_x": self.w_x.tolist(),
                "b_x": self.b_x,
            },
        }

    @classmethod
    def from_dict(cls, d):
        a, s, w = d["architecture"], d["standardization"], d["weights"]
        return cls(
            w["w_fx"], w["b_f"], w["w_x"], w["b_x"], a["y_lags"], a["u_lags"],
            s["u_mean"], s["u_std"], s["y_mean"], s["y_std"],
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _norm_signals(model, u, y):
    un = (np.asarray(u, dtype=float) - model.u_mean) / model.u_std
    yn = (np.asarray(y, dtype=float) - model.y_mean) / model.y_std
    return np.ascontiguousarray(un), np.ascontiguousarray(yn)


def _run(model, u, y, free_run, jac):
    un, yn = _norm_signals(model, u, y)
    yh, sens, bad = kernels.noe_run(
        np.ascontiguousarray(model.eta), model.n_hidden, model.y_lags, model.u_lags,
        un, yn, free_run, jac,
    )
    if bad >= 0:
        raise DivergenceError(f"NOE prediction not finite at sample {bad}", step=int(bad))
    return yh * model.y_std + model.y_mean, sens


def _initial_outputs(model, u, y_init):
    n0 = model.n_init
    y_init = np.asarray(y_init, dtype=float).reshape(-1)
    if len(u) < n0:
        raise DomainError(f"need at least {n0} input samples")
    if y_init.size < n0:
        raise DomainError(f"need {n0} initial outputs, got {y_init.size}")
    y = np.zeros(len(u))
    y[:n0] = y_init[:n0]
    return y


def noe_simulate(model: NoeModel, u, y_init):
    """Free-run simulation over ``u``.

    The output has ``len(u)`` samples; the first ``max(m_y, m_u)`` are the
    supplied initial outputs and predictions start after them.
    """
    u = np.asarray(u, dtype=float)
    y = _initial_outputs(model, u, y_init)
    yh, _ = _run(model, u, y, True, False)
    return yh


def noe_jacobian(model: NoeModel, u, y_init):
    """``(yhat, J)`` with ``J[k - n0, p] = d yhat(k) / d eta_p`` for the predicted samples."""
    u = np.asarray(u, dtype=float)
    y = _initial_outputs(model, u, y_init)
    yh, sens = _run(model, u, y, True, True)
    return yh, sens[model.n_init :] * model.y_std


def one_step_predict(model: NoeModel, u, y):
    """Predictions from measured past outputs (series-parallel mode)."""
    yh, _ = _run(model, np.asarray(u, float), np.asarray(y, float), False, False)
    return yh


def rmse(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise DomainError("rmse needs two non-empty sequences of equal length")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


@dataclass
class LmResult:
    eta: np.ndarray
    cost: float
    costs: list
    iterations: int
    message: str


def levenberg_marquardt(residual_jacobian, residual, eta0, config: TrainConfig):
    """Minimize ``mean(r^2)``; ``residual_jacobian(eta)`` returns ``(r, dr/deta)`` up to sign.

    ``J`` is the Jacobian of the model output, so ``r = y - yhat`` and the
    step solves ``(J^T J + lambda I) delta = J^T r``.
    """
    eta = np.asarray(eta0, dtype=float).copy()
    r, jac = residual_jacobian(eta)
    n = r.size
    cost = float(r @ r) / n
    costs = [cost]
    lam = config.damping
    message = "iteration limit"
    it = 0
    for it in range(1, config.max_iterations + 1):
        g = jac.T @ r
        if cost == 0.0 or np.linalg.norm(g) / n <= config.grad_tol:
            message = "gradient tolerance"
            it -= 1
            break
        a = jac.T @ jac
        diag = np.arange(a.shape[0])
        accepted = False
        while lam <= config.max_damping:
            a_try = a.copy()
            a_try[diag, diag] += lam
            try:
                delta = cho_solve(cho_factor(a_try, lower=True, check_finite=False), g)
            except (LinAlgError, ValueError):
                lam *= config.damping_up
                continue
            cand = eta + delta
            try:
                r_c = residual(cand)
                c_cost = float(r_c @ r_c) / n
            except DivergenceError:
                c_cost = np.inf
            if np.isfinite(c_cost) and c_cost < cost:
                accepted = True
                break
            lam *= config.damping_up
        if not accepted:
            message = "damping limit"
            break
        lam = max(lam / config.damping_down, 1e-15)
        rel = (cost - c_cost) / cost
        eta, cost = cand, c_cost
        costs.append(cost)
        r, jac = residual_jacobian(eta)
        if rel < config.cost_tol:
            message = "cost tolerance"
            break
    return LmResult(eta, cost, costs, it, message)


@dataclass
class TrainTrace:
    costs: list
    prefit_costs: list = field(default_factory=list)
    restart_costs: list = field(default_factory=list)
    best_restart: int = 0
    iterations: int = 0
    message: str = ""

    @property
    def monotone(self):
        c = np.asarray(self.costs)
        return bool(np.all(np.diff(c) <= 0.0))

    def to_csv(self, path):
        lines = ["iteration,cost"] + [f"{i},{c!r}" for i, c in enumerate(self.costs)]
        Path(path).write_text("\n".join(lines) + "\n")


def _fit_from(model, u, y, config, prefit):
    un, yn = _norm_signals(model, u, y)
    n0 = model.n_init
    nh, my, mu = model.n_hidden, model.y_lags, model.u_lags

    def make(free_run):
        def rj(eta):
            yh, sens, bad = kernels.noe_run(eta, nh, my, mu, un, yn, free_run, True)
            if bad >= 0:
                raise DivergenceError("NOE prediction not finite", step=int(bad))
            return yn[n0:] - yh[n0:], sens[n0:]

        def res(eta):
            yh, _, bad = kernels.noe_run(eta, nh, my, mu, un, yn, free_run, False)
            if bad >= 0:
                raise DivergenceError("NOE prediction not finite", step=int(bad))
            return yn[n0:] - yh[n0:]

        return rj, res

    eta = np.ascontiguousarray(model.eta)
    pre_costs = []
    if prefit:
        rj, res = make(False)
        pre = levenberg_marquardt(rj, res, eta, config)
        eta, pre_costs = pre.eta, pre.costs
    rj, res = make(True)
    try:
        fit = levenberg_marquardt(rj, res, eta, config)
    except DivergenceError:
        if not prefit:
            raise
        # pre-fitted network unstable in free run; fall back to the raw start
        fit = levenberg_marquardt(rj, res, np.ascontiguousarray(model.eta), config)
    scale2 = model.y_std**2
    return model.with_eta(fit.eta), fit, [c * scale2 for c in pre_costs], scale2


def train_lm(u, y, config: TrainConfig = TrainConfig(), seed=None, init: NoeModel | None = None):
    """Fit a NOE model to ``(u, y)`` by Levenberg-Marquardt on the simulation error.

    Without ``init`` the data are standardized and ``config.restarts`` random
    starts are tried, each first fitted in one-step-ahead mode; the lowest
    final free-run cost wins. With ``init`` that model (and its
    standardization) is the single starting point.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape != y.shape:
        raise DomainError("input and output sequences differ in length")
    seed = config.seed if seed is None else seed
    if init is not None:
        model, fit, pre, s2 = _fit_from(init, u, y, config, prefit=False)
        trace = TrainTrace([c * s2 for c in fit.costs], pre, [fit.cost * s2], 0, fit.iterations, fit.message)
        return model, trace
    proto = NoeModel.zeros(config.n_hidden, config.y_lags, config.u_lags)
    if len(u) < 10 * proto.n_params:
        warnings.warn(
            f"{len(u)} samples for {proto.n_params} parameters; at least "
            f"{10 * proto.n_params} recommended",
            stacklevel=2,
        )
    if config.standardize:
        u_mean, u_std = float(u.mean()), float(u.std()) or 1.0
        y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
    else:
        u_mean, u_std, y_mean, y_std = 0.0, 1.0, 0.0, 1.0
    best = None
    restart_costs = []
    for r in range(config.restarts):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), r])))
        start = NoeModel.random(rng, config.n_hidden, config.y_lags, config.u_lags, config.init_scale)
        start.u_mean, start.u_std, start.y_mean, start.y_std = u_mean, u_std, y_mean, y_std
        try:
            model, fit, pre, s2 = _fit_from(start, u, y, config, config.prefit)
        except DivergenceError:
            restart_costs.append(float("inf"))
            continue
        cost = fit.cost * s2
        restart_costs.append(cost)
        log.debug("restart %d: cost %.3g (%s)", r, cost, fit.message)
        if best is None or cost < best[0]:
            trace = TrainTrace([c * s2 for c in fit.costs], pre, [], r, fit.iterations, fit.message)
            best = (cost, model, trace)
    if best is None:
        raise DivergenceError("every training restart diverged")
    _, model, trace = best
    trace.restart_costs = restart_costs
    return model, trace
