"""Nonlinear mass-spring-damper benchmark, its linearization and data generation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigurationError, DivergenceError
from .signals import MultisineConfig, SignalParams, multisine_periods


@dataclass(frozen=True)
class MsdParams:
    m: float = 5.0
    s: float = 800.0
    c: float = 10.0
    l: float = 0.17
    a: float = 0.25

    def __post_init__(self):
        if min(self.m, self.s, self.c, self.l, self.a) <= 0:
            raise ConfigurationError("all MSD parameters must be positive")
        if not self.a > self.l:
            raise ConfigurationError("MSD geometry requires a > l")

    def spring_force(self, x1):
        r = np.sqrt(np.asarray(x1) ** 2 + self.a**2)
        return self.s * (x1 / r) * (r - self.l)

    def stiffness(self, x1=0.0):
        """Derivative of the spring force, ``s (1 - l a^2 / (x1^2 + a^2)^(3/2))``."""
        return self.s * (1.0 - self.l * self.a**2 / (x1 * x1 + self.a**2) ** 1.5)


def msd_derivative(state, force, params: MsdParams = MsdParams()):
    x1, x2 = float(state[0]), float(state[1])
    r = math.sqrt(x1 * x1 + params.a**2)
    dx2 = (force - params.s * (x1 / r) * (r - params.l) - params.c * x2) / params.m
    return np.array([x2, dx2])


def linearize_msd(params: MsdParams = MsdParams(), x1=0.0):
    """Jacobian ``(A, B)`` of the MSD dynamics at position ``x1``, zero velocity."""
    k_lin = params.stiffness(x1)
    a_mat = np.array([[0.0, 1.0], [-k_lin / params.m, -params.c / params.m]])
    b_vec = np.array([0.0, 1.0 / params.m])
    return a_mat, b_vec


@dataclass(frozen=True)
class IoModel:
    """Simulation model: the nonlinear MSD or a linear approximation of it.

    The sampled output is the position ``y(k) = x1(k)``. Feature rows are
    ``(y(k-1), dy(k-1))``; the model also depends on ``u(k-1)``.
    """

    kind: str = "nonlinear_msd"
    params: MsdParams = field(default_factory=MsdParams)
    fs: float = 100.0
    a_mat: np.ndarray | None = None
    b_vec: np.ndarray | None = None
    linearization_point: float = 0.0

    state_dim = 2

    def __post_init__(self):
        if self.kind not in ("nonlinear_msd", "linear_approx"):
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.kind == "linear_approx" and (self.a_mat is None or self.b_vec is None):
            raise ConfigurationError("linear model needs A and B")

    @classmethod
    def nonlinear(cls, params=None, fs=100.0):
        return cls("nonlinear_msd", params or MsdParams(), fs)

    @classmethod
    def linear(cls, params=None, fs=100.0, x1=0.0):
        params = params or MsdParams()
        a_mat, b_vec = linearize_msd(params, x1)
        return cls("linear_approx", params, fs, a_mat, b_vec, float(x1))

    def describe(self):
        return {
            "kind": self.kind,
            "params": _params_dict(self.params),
            "fs": self.fs,
            "linearization_point": self.linearization_point,
        }


def _params_dict(p):
    return {"m": p.m, "s": p.s, "c": p.c, "l": p.l, "a": p.a}


def rk4_affine_map(a_mat, b_vec, dt):
    """One RK4 step of ``x' = A x + B u`` with ``u`` held, as ``x+ = Phi x + Gam u``."""
    ha = dt * np.asarray(a_mat, dtype=float)
    eye = np.eye(ha.shape[0])
    ha2 = ha @ ha
    ha3 = ha2 @ ha
    phi = eye + ha + ha2 / 2.0 + ha3 / 6.0 + ha3 @ ha / 24.0
    gam = dt * (eye + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) @ np.asarray(b_vec, dtype=float)
    return phi, gam


def integrate_rk4(model: IoModel, x0, u, dt=None, theta=None):
    """Fixed-step RK4 trajectory with zero-order-hold input; shape ``(len(u)+1, 2)``."""
    dt = 1.0 / model.fs if dt is None else float(dt)
    x0 = np.ascontiguousarray(x0, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    if model.kind == "nonlinear_msd":
        p = model.params
        traj, bad = kernels.msd_rk4(x0, u, dt, p.m, p.s, p.c, p.l, p.a)
    else:
        phi, gam = rk4_affine_map(model.a_mat, model.b_vec, dt)
        traj, bad = kernels.affine_recursion(np.ascontiguousarray(phi), gam, x0, u)
    if bad >= 0 or not np.all(np.isfinite(x0)):
        raise DivergenceError(
            f"{model.kind} simulation diverged at step {bad}", step=int(bad), theta=theta
        )
    return traj


def simulate_output(model: IoModel, u, x0=(0.0, 0.0)):
    """Position samples ``y(k)``, ``k = 0..len(u)-1``, starting from ``x0``."""
    return integrate_rk4(model, x0, u)[:-1, 0]


@dataclass
class Dataset:
    """One period of simulated data.

    ``y[k]`` is the output, ``dy[k] = y[k] - y[k-1]`` the increment and
    ``u[k]`` the input at sample ``k``. ``features[k] = (y[k-1], dy_scale *
    dy[k-1])`` uses the sample before the row, taken from the warm-up when
    available. ``dy_scale`` converts the increment to the feature units of the
    region of interest (``fs``: increment per second).
    """

    u: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    features: np.ndarray
    dy_scale: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def outputs(self):
        return self.y

    def check(self, tol=1e-12):
        return bool(np.all(np.abs(self.dy[1:] - (self.y[1:] - self.y[:-1])) <= tol))

    def to_csv(self, path, sidecar=True):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "u", "y", "dy"])
            for k in range(len(self.y)):
                w.writerow([k, repr(float(self.u[k])), repr(float(self.y[k])), repr(float(self.dy[k]))])
        if sidecar:
            meta = dict(self.provenance)
            meta["dy_scale"] = self.dy_scale
            path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path, dy_scale=None):
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        missing = {"k", "u", "y", "dy"} - set(rows[0] if rows else ())
        if missing:
            raise ConfigurationError(f"{path}: missing columns {sorted(missing)}")
        u = np.array([float(r["u"]) for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        dy = np.array([float(r["dy"]) for r in rows])
        side = path.with_suffix(".json")
        provenance = json.loads(side.read_text()) if side.exists() else {}
        if dy_scale is None:
            dy_scale = float(provenance.get("dy_scale", 1.0))
        # the increment before row 0 is not stored in the file
        y_prev = np.concatenate(([y[0] - dy[0]], y[:-1]))
        dy_prev = np.concatenate(([np.nan], dy[:-1]))
        feats = np.column_stack((y_prev, dy_scale * dy_prev))
        return cls(u, y, dy, feats, dy_scale, provenance)


def dataset_from_sequences(u, y_full, start, dy_scale, provenance=None):
    """Slice rows ``start..`` of a simulated record into a :class:`Dataset`.

    ``y_full`` must cover indices ``start-2`` onward; callers pad with the
    initial position when ``start < 2``.
    """
    y = y_full[start:]
    y1 = y_full[start - 1 : -1]
    y2 = y_full[start - 2 : -2]
    dy = y - y1
    dy_prev = y1 - y2
    feats = np.column_stack((y1, dy_scale * dy_prev))
    return Dataset(
        np.asarray(u[start:], dtype=float).copy(),
        y.copy(),
        dy,
        feats,
        float(dy_scale),
        dict(provenance or {}),
    )


def simulate_dataset(
    model: IoModel,
    params: SignalParams,
    config: MultisineConfig,
    x0=(0.0, 0.0),
    warmup_periods=2,
    dy_scale=None,
):
    """Simulate ``warmup_periods + 1`` multisine periods and keep the last one."""
    if warmup_periods < 0:
        raise ConfigurationError("warmup_periods must be >= 0")
    dy_scale = config.fs if dy_scale is None else dy_scale
    periods = warmup_periods + 1
    u = multisine_periods(params, config, periods)
    theta = params.to_vector()
    y = integrate_rk4(model, x0, u, theta=theta)[:-1, 0]
    # two samples of rest history before k = 0
    y_pad = np.concatenate(([y[0], y[0]], y))
    u_pad = np.concatenate(([0.0, 0.0], u))
    start = 2 + warmup_periods * config.n
    provenance = {
        "model": model.kind,
        "theta": theta.tolist(),
        "warmup_periods": int(warmup_periods),
        "x0": [float(v) for v in x0],
    }
    return dataset_from_sequences(u_pad, y_pad, start, dy_scale, provenance)
