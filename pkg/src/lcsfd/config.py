"""Study configuration: nested dataclasses, JSON round trip and profiles.

``StudyConfig.from_dict`` accepts any subset of the schema and rejects
unknown keys at every level. Missing keys take the schema defaults.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .design import SolverOptions
from .errors import ConfigurationError
from .gp import GpConfig
from .ident import TrainConfig
from .plant import MsdParams
from .signals import MultisineConfig, TestSignalSpec
from .spacefill import RegionOfInterest


def default_test_specs():
    """Random-phase multisines at 8 N and 4 N, a 6 N log sweep, uniform noise of variance 19."""
    return (
        TestSignalSpec("multisine", amplitude=8.0, name="multisine_8N"),
        TestSignalSpec("multisine", amplitude=4.0, name="multisine_4N"),
        TestSignalSpec("log_sweep", amplitude=6.0, name="log_sweep"),
        TestSignalSpec("white_uniform", variance=19.0, name="white_noise"),
    )


@dataclass(frozen=True)
class DesignSettings:
    """Everything about how the input design is set up, apart from the GP.

    ``linearization`` is ``"jittered"`` (each realization linearizes at a
    position drawn uniformly from ``[-jitter_range, jitter_range]``) or
    ``"origin"``. ``design_model="nonlinear"`` designs on the plant itself.
    """

    initial_amplitude: float = 8.0
    margin: float = 0.05
    warmup_periods: int = 2
    dy_scale: float | None = None
    linearization: str = "jittered"
    jitter_range: float = 0.02
    design_model: str = "linear"
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.linearization not in ("jittered", "origin"):
            raise ConfigurationError(f"unknown linearization {self.linearization!r}")
        if self.design_model not in ("linear", "nonlinear"):
            raise ConfigurationError(f"unknown design model {self.design_model!r}")
        if self.margin <= 0 or self.jitter_range < 0 or self.warmup_periods < 0:
            raise ConfigurationError("margin > 0, jitter_range >= 0, warmup_periods >= 0")
        if not 0 <= self.initial_amplitude <= 500:
            raise ConfigurationError("initial amplitude outside the amplitude bounds")


@dataclass(frozen=True)
class StudyConfig:
    realizations: int = 50
    master_seed: int = 2024
    signal: MultisineConfig = field(default_factory=MultisineConfig)
    msd: MsdParams = field(default_factory=MsdParams)
    gp: GpConfig = field(default_factory=GpConfig)
    region: RegionOfInterest = field(default_factory=RegionOfInterest)
    anchor_counts: tuple[int, ...] = (5, 5)
    eval_counts: tuple[int, ...] = (101, 101)
    design: DesignSettings = field(default_factory=DesignSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_test: int = 2**16
    tests: tuple[TestSignalSpec, ...] = field(default_factory=default_test_specs)
    workers: int = 1
    output_dir: str = "study_out"

    def __post_init__(self):
        object.__setattr__(self, "anchor_counts", tuple(int(c) for c in self.anchor_counts))
        object.__setattr__(self, "eval_counts", tuple(int(c) for c in self.eval_counts))
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.realizations < 1:
            raise ConfigurationError("realizations must be >= 1")
        if self.n_test < 16:
            raise ConfigurationError("n_test must be at least 16")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not self.tests:
            raise ConfigurationError("at least one test signal is required")
        names = [t.name or f"test_{i}" for i, t in enumerate(self.tests)]
        if len(set(names)) != len(names):
            raise ConfigurationError("test signal names must be unique")
        if len(self.anchor_counts) != self.region.dim or len(self.eval_counts) != self.region.dim:
            raise ConfigurationError("anchor and evaluation counts need one entry per dimension")
        if self.gp.dim != self.region.dim:
            raise ConfigurationError("GP and region dimensions differ")

    @property
    def test_names(self):
        return [t.name or f"test_{i}" for i, t in enumerate(self.tests)]

    def with_(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data, base: StudyConfig | None = None):
        """Build from a (possibly partial) mapping on top of ``base`` (schema defaults if omitted)."""
        return _merge(base if base is not None else cls(), data, "config")

    @classmethod
    def load(cls, path, base=None):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data, base)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _merge(current, data, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(current)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    changes = {}
    for key, value in data.items():
        old = getattr(current, key)
        path = f"{where}.{key}"
        if dataclasses.is_dataclass(old):
            changes[key] = _merge(old, value, path)
        elif key == "tests":
            if not isinstance(value, list):
                raise ConfigurationError(f"{path}: expected a list")
            changes[key] = tuple(
                _merge(TestSignalSpec("white_uniform", variance=1.0), _spec_dict(v, path), path)
                for v in value
            )
        else:
            changes[key] = tuple(value) if isinstance(value, list) else value
    try:
        return dataclasses.replace(current, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


def _spec_dict(value, where):
    # a test spec is replaced whole, so fields not given must read as unset
    if not isinstance(value, dict):
        raise ConfigurationError(f"{where}: expected an object per test signal")
    if "kind" not in value:
        raise ConfigurationError(f"{where}: every test signal needs a kind")
    full = {"amplitude": None, "variance": None, "duration": None}
    full.update(value)
    return full


DESK_LINES = tuple(range(6, 51, 4))


def desk_profile():
    """Ten realizations on a 512-sample grid; finishes in well under half an hour on one core."""
    return StudyConfig(
        realizations=10,
        signal=MultisineConfig(fs=100.0, n=512, line_indices=DESK_LINES),
        eval_counts=(61, 61),
        n_test=2**13,
        design=DesignSettings(
            solver=SolverOptions(max_iterations=100, lc_inner_iterations=60)
        ),
    )


def paper_profile():
    return StudyConfig()


PROFILES = {"desk": desk_profile, "paper": paper_profile}


def profile(name):
    try:
        return PROFILES[name]()
    except KeyError:
        raise ConfigurationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
