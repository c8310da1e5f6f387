"""Parametrized excitation signals and the experiment-cost functionals.

The design signal is a multisine on a harmonic grid ``f0 = fs / N``::

    u(k) = sum_l A_l sin(2 pi l k / N + phi_l)

Validation uses three more families: dense random-phase multisines, a
logarithmic sweep and uniform white noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

AMPLITUDE_BOUNDS = (0.0, 500.0)


@dataclass(frozen=True)
class MultisineConfig:
    """Sampling and excited-line layout of a periodic multisine.

    Defaults excite every 7th line from 12 to 103 at ``fs = 100 Hz`` and
    ``N = 1024``, which is 14 lines between about 1 and 10 Hz.
    """

    fs: float = 100.0
    n: int = 1024
    line_indices: tuple[int, ...] = tuple(range(12, 104, 7))

    def __post_init__(self):
        lines = tuple(int(v) for v in self.line_indices)
        object.__setattr__(self, "line_indices", lines)
        if self.fs <= 0 or self.n < 2:
            raise ConfigurationError("fs must be positive and n >= 2")
        if not lines:
            raise ConfigurationError("at least one excited line is required")
        if len(set(lines)) != len(lines):
            raise ConfigurationError("excited lines must be distinct")
        if min(lines) < 1 or max(lines) > self.n // 2:
            raise ConfigurationError(
                f"line indices must lie in [1, {self.n // 2}] (below Nyquist)"
            )

    @classmethod
    def from_band(cls, fs, n, l_min, l_max, stride=1):
        return cls(fs=fs, n=n, line_indices=tuple(range(l_min, l_max + 1, stride)))

    @property
    def f0(self):
        return self.fs / self.n

    @property
    def n_lines(self):
        return len(self.line_indices)

    @property
    def frequencies(self):
        return np.asarray(self.line_indices, dtype=float) * self.f0


@dataclass
class SignalParams:
    """Amplitudes (N) and phases (rad) of the excited lines.

    The flat decision vector used by the optimizers is
    ``[A_1..A_L, phi_1..phi_L]``.
    """

    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.array(self.amplitudes, dtype=float).reshape(-1)
        self.phases = np.array(self.phases, dtype=float).reshape(-1)
        if self.amplitudes.shape != self.phases.shape:
            raise ConfigurationError("amplitudes and phases must have equal length")
        if not (np.all(np.isfinite(self.amplitudes)) and np.all(np.isfinite(self.phases))):
            raise ConfigurationError("signal parameters must be finite")

    @property
    def n_lines(self):
        return self.amplitudes.size

    def to_vector(self):
        return np.concatenate((self.amplitudes, self.phases))

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size % 2:
            raise ConfigurationError("parameter vector must have even length")
        half = theta.size // 2
        return cls(theta[:half].copy(), theta[half:].copy())

    @classmethod
    def constant(cls, n_lines, amplitude, phases=None):
        if phases is None:
            phases = np.zeros(n_lines)
        return cls(np.full(n_lines, float(amplitude)), phases)

    def within_bounds(self, bounds=AMPLITUDE_BOUNDS):
        lo, hi = bounds
        return bool(np.all(self.amplitudes >= lo) and np.all(self.amplitudes <= hi))

    def same_phases(self, other, atol=1e-12):
        """Phase equality modulo 2 pi."""
        d = np.angle(np.exp(1j * (self.phases - other.phases)))
        return bool(np.all(np.abs(d) <= atol))

    def to_dict(self):
        return {"amplitudes": self.amplitudes.tolist(), "phases": self.phases.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["amplitudes"], d["phases"])


def random_phases(rng, n_lines):
    return rng.uniform(0.0, 2.0 * np.pi, n_lines)


def _check(params, config):
    if params.n_lines != config.n_lines:
        raise ConfigurationError(
            f"{params.n_lines} signal parameters for {config.n_lines} excited lines"
        )


def multisine_eval(params: SignalParams, config: MultisineConfig, k):
    """Multisine samples at index/indices ``k``.

    ``l * k`` is reduced modulo ``N`` in integer arithmetic first, so the
    result is bit-for-bit periodic in ``k`` with period ``N``.
    """
    _check(params, config)
    k = np.asarray(k, dtype=np.int64)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    lines = np.asarray(config.line_indices, dtype=np.int64)
    idx = np.mod(np.outer(lines, np.mod(k, config.n)), config.n)
    arg = (2.0 * np.pi / config.n) * idx + params.phases[:, None]
    u = params.amplitudes @ np.sin(arg)
    return float(u[0]) if scalar else u


def multisine_periods(params, config, periods=1):
    """``periods`` whole periods, synthesized by inverse FFT and tiled."""
    _check(params, config)
    spectrum = np.zeros(config.n // 2 + 1, dtype=complex)
    # A sin(w k + phi) = Re(A exp(i (w k + phi - pi/2)))
    np.add.at(
        spectrum,
        np.asarray(config.line_indices),
        0.5 * config.n * params.amplitudes * np.exp(1j * (params.phases - 0.5 * np.pi)),
    )
    if config.n % 2 == 0 and config.n // 2 in config.line_indices:
        # Nyquist bin is real and counted once by irfft
        spectrum[-1] = 2.0 * spectrum[-1].real
    one = np.fft.irfft(spectrum, n=config.n)
    return np.tile(one, periods)


def signal_power(u):
    """Time-average of the squared samples."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise DomainError("signal power of an empty sequence")
    return float(np.dot(u, u) / u.size)


def peak_amplitude(u):
    """Sup-norm cost, the alternative to power."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise DomainError("peak amplitude of an empty sequence")
    return float(np.max(np.abs(u)))


def sweep_rate(f_min, f_max, duration):
    if not f_max > f_min > 0:
        raise DomainError("log sweep needs f_max > f_min > 0")
    if duration <= 0:
        raise DomainError("sweep duration must be positive")
    return duration / math.log(f_max / f_min)


def log_sweep_eval(k, f_min, f_max, duration, amplitude=6.0, fs=100.0):
    """``amplitude * sin(2 pi f_min L exp(t / L))`` with ``L = T / ln(f_max / f_min)``."""
    rate = sweep_rate(f_min, f_max, duration)
    t = np.asarray(k, dtype=float) / fs
    return amplitude * np.sin(2.0 * np.pi * f_min * rate * np.exp(t / rate))


def sweep_instantaneous_frequency(t, f_min, f_max, duration):
    rate = sweep_rate(f_min, f_max, duration)
    return f_min * np.exp(np.asarray(t, dtype=float) / rate)


def white_uniform_sequence(seed, variance, n):
    """i.i.d. uniform samples on ``[-h, h]`` with ``h = sqrt(3 variance)``."""
    if variance <= 0:
        raise DomainError("variance must be positive")
    half = math.sqrt(3.0 * variance)
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.uniform(-half, half, int(n))


@dataclass(frozen=True)
class TestSignalSpec:
    """One validation signal.

    A ``log_sweep`` without ``duration`` spans the whole test record. For
    ``multisine`` the ``amplitude`` is the per-line level of the design
    grid; the dense test multisine spreads the same total power over every
    line of its own grid between ``f_min`` and ``f_max``.
    """

    __test__ = False  # not a pytest class

    kind: str
    amplitude: float | None = None
    variance: float | None = None
    duration: float | None = None
    seed: int | None = None
    f_min: float = 1.0
    f_max: float = 10.0
    name: str = field(default="")

    _REQUIRED = {
        "multisine": {"amplitude"},
        "log_sweep": {"amplitude"},
        "white_uniform": {"variance"},
    }
    _OPTIONAL = {"log_sweep": {"duration"}}

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise ConfigurationError(f"unknown test signal kind {self.kind!r}")
        present = {
            f for f in ("amplitude", "variance", "duration") if getattr(self, f) is not None
        }
        required = self._REQUIRED[self.kind]
        allowed = required | self._OPTIONAL.get(self.kind, set())
        if not required <= present <= allowed:
            raise ConfigurationError(
                f"{self.kind} test signal needs {sorted(required)} and allows {sorted(allowed)}"
            )
        if self.variance is not None and self.variance <= 0:
            raise ConfigurationError("variance must be positive")
        if self.duration is not None and self.duration <= 0:
            raise ConfigurationError("duration must be positive")


def dense_multisine(spec: TestSignalSpec, n, fs, reference_lines, rng):
    """Random-phase multisine exciting every line of an ``n``-sample grid in the band.

    The per-line amplitude is ``spec.amplitude * sqrt(reference_lines / L)``
    so the total power equals a ``reference_lines``-line design multisine
    at ``spec.amplitude``.
    """
    f0 = fs / n
    l_min = max(1, math.ceil(spec.f_min / f0 - 1e-9))
    l_max = min(n // 2, math.floor(spec.f_max / f0 + 1e-9))
    config = MultisineConfig(fs=fs, n=n, line_indices=tuple(range(l_min, l_max + 1)))
    level = spec.amplitude * math.sqrt(reference_lines / config.n_lines)
    params = SignalParams.constant(config.n_lines, level, random_phases(rng, config.n_lines))
    return multisine_periods(params, config), params, config


def write_signal_csv(path, u):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "u"])
        for k, v in enumerate(np.asarray(u, dtype=float)):
            w.writerow([k, repr(float(v))])


def read_signal_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "u" not in rows[0]:
        raise ConfigurationError(f"{path}: expected a CSV with columns k,u")
    return np.array([float(r["u"]) for r in rows])
