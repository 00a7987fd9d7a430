"""
Seeded synthetic post-disturbance U/P/Q trajectories.

No network is solved here. Each bus gets an "electrical distance" from the
fault drawn from a seeded hash, and the trajectory is a closed-form template:

* stable: exponential voltage recovery towards ``U_final`` in [0.92, 1.0] pu,
  motor active power dipping then ramping back, reactive power spiking and
  relaxing;
* unstable: a partial recovery that stalls at ``U_stall`` in [0.4, 0.65] pu,
  active power sagging and reactive power climbing as motors stall.

Time zero is the instant of fault clearing. PMU samples are not aligned with
that instant, so each instance draws a phase offset in ``[0, sample_jitter_s)``
and sample k sits at ``offset + k*dt``.

The voltage guarantees (stable: final voltages >= 0.9 pu; unstable: the last
20% of samples <= 0.7 pu, both up to 3 noise sigmas) assume that last 20%
starts at least 0.1 s after clearing and ``stall_onset_max_s <= 0.06``.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .core import Dataset, Label, ScenarioParams, TimeSeriesInstance
from .errors import RangeError

# severity score weights (load, motor share, clearing delay, random draw)
W_LOAD, W_MOTOR, W_CLEAR, W_DRAW = 0.3, 0.4, 0.2, 0.1
THRESHOLD = 0.55

# reference ranges used to rescale the raw score onto [0, 1]
LOAD_RANGE = (0.8, 1.2)
MOTOR_RANGE = (0.7, 0.9)
CLEAR_RANGE = (0.15, 0.20)

TAU_STABLE = (0.002, 0.018)  # seconds; fastest recovery at severity 1
TAU_COLLAPSE = 0.015
SHARED_DISTANCE_WEIGHT = 0.65


@dataclass(frozen=True)
class GridConfig:
    n_buses: int = 10
    n_lines: int = 10
    load_levels: tuple = (0.8, 1.0, 1.2)
    motor_fractions: tuple = (0.7, 0.8, 0.9)
    fault_positions: tuple = (0.0, 0.2, 0.4, 0.6, 0.8)
    clear_times_s: tuple = (0.15, 0.175, 0.2)
    m: int = 40
    dt_s: float = 0.01
    noise_sigma: float = 0.01
    sample_jitter_s: float = 0.01
    stall_onset_max_s: float = 0.0
    seed: int = 0
    n_samples: int | None = 1200
    fault_time_s: float = 0.1
    threshold: float = THRESHOLD

    def __post_init__(self):
        for name in ("load_levels", "motor_fractions", "fault_positions", "clear_times_s"):
            val = tuple(float(v) for v in getattr(self, name))
            if not val:
                raise RangeError(f"{name} must be non-empty")
            object.__setattr__(self, name, val)
        if self.n_buses < 2:
            raise RangeError(f"n_buses must be >= 2, got {self.n_buses}")
        if self.n_lines < 1:
            raise RangeError(f"n_lines must be >= 1, got {self.n_lines}")
        if self.m < 12:
            raise RangeError(f"m must be >= 12, got {self.m}")
        if not self.dt_s > 0:
            raise RangeError(f"dt_s must be > 0, got {self.dt_s}")
        if self.stall_onset_max_s < 0:
            raise RangeError(f"stall_onset_max_s must be >= 0, got {self.stall_onset_max_s}")
        if self.sample_jitter_s < 0:
            raise RangeError(f"sample_jitter_s must be >= 0, got {self.sample_jitter_s}")
        if self.noise_sigma < 0:
            raise RangeError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.n_samples is not None and self.n_samples < 1:
            raise RangeError(f"n_samples must be positive, got {self.n_samples}")

    @property
    def grid_size(self) -> int:
        return (len(self.load_levels) * len(self.motor_fractions) * self.n_lines
                * len(self.fault_positions) * len(self.clear_times_s))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown grid config keys: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


def load_config(path: str | Path, **overrides) -> GridConfig:
    """Read a YAML grid config; keys mirror :class:`GridConfig` field names."""
    import yaml

    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    raw = dict(raw.get("grid", raw))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return GridConfig.from_dict(raw)


BENCHMARK_GRID = GridConfig(
    n_buses=39, n_lines=8, clear_times_s=(0.15, 0.2), m=40, n_samples=1200,
)


@dataclass(frozen=True)
class StabilityOutcome:
    cls: Label
    severity: float
    score: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not 0.0 <= self.severity <= 1.0:
            raise RangeError(f"severity must lie in [0, 1], got {self.severity}")


def enumerate_scenarios(cfg: GridConfig) -> list[ScenarioParams]:
    """Cartesian product of the grid in lexicographic order."""
    return [
        ScenarioParams(load_level=ld, motor_fraction=mf, fault_line=line,
                       fault_position=pos, fault_time_s=cfg.fault_time_s, clear_time_s=ct)
        for ld, mf, line, pos, ct in itertools.product(
            cfg.load_levels, cfg.motor_fractions, range(cfg.n_lines),
            cfg.fault_positions, cfg.clear_times_s,
        )
    ]


def _raw_score(load, motor, clear, draw):
    return W_LOAD * load + W_MOTOR * motor + W_CLEAR * (clear - 0.15) / 0.05 + W_DRAW * draw


_RAW_LO = _raw_score(LOAD_RANGE[0], MOTOR_RANGE[0], CLEAR_RANGE[0], 0.0)
_RAW_HI = _raw_score(LOAD_RANGE[1], MOTOR_RANGE[1], CLEAR_RANGE[1], 1.0)


def severity_score(s: ScenarioParams, rng_draw: float, threshold: float = THRESHOLD) -> StabilityOutcome:
    """Hidden ground truth for a scenario.

    The weighted score is rescaled so the reference grid spans [0, 1] and
    clipped there. Unstable iff the score exceeds ``threshold``; severity is
    the distance from the threshold divided by the room on that side.
    """
    raw = _raw_score(s.load_level, s.motor_fraction, s.clear_time_s, rng_draw)
    sigma = float(np.clip((raw - _RAW_LO) / (_RAW_HI - _RAW_LO), 0.0, 1.0))
    if sigma > threshold:
        return StabilityOutcome(Label.UNSTABLE, (sigma - threshold) / (1.0 - threshold), sigma)
    return StabilityOutcome(Label.STABLE, (threshold - sigma) / threshold, sigma)


def _unit_hash(key: str) -> float:
    h = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
    return h / 2.0**64


def electrical_distance(n_buses: int, fault_line: int, fault_position: float) -> np.ndarray:
    """Per-bus coefficient in [0, 1]; 0 is electrically at the fault.

    A component shared by all buses (where the fault sits) is mixed with a
    per-bus component, so the depth of the voltage dip varies mostly from
    one fault to the next.
    """
    shared = _unit_hash(f"{fault_line}:{fault_position:.6f}")
    own = np.array([_unit_hash(f"{b}:{fault_line}:{fault_position:.6f}") for b in range(n_buses)])
    return SHARED_DISTANCE_WEIGHT * shared + (1.0 - SHARED_DISTANCE_WEIGHT) * own


def _instance_seed(master: int, instance_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(instance_id)])


def trajectory_template(s: ScenarioParams, outcome: StabilityOutcome, n_buses: int,
                        m: int, dt_s: float, offset_s: float = 0.0,
                        stall_onset_max_s: float = 0.0) -> np.ndarray:
    """Noise-free ``(m, 3L)`` trajectory; sample k is taken at ``offset_s + k*dt_s``."""
    t = offset_s + dt_s * np.arange(1, m + 1)[:, None]
    e = electrical_distance(n_buses, s.fault_line, s.fault_position)[None, :]
    sev = outcome.severity
    u_fault = 0.3 + 0.3 * e
    near = 1.0 - e
    motor = s.motor_fraction
    load = s.load_level
    q0 = 0.3 * load

    if outcome.cls is Label.STABLE:
        u_final = 0.92 + 0.08 * (0.5 * e + 0.5 * sev)
        tau = TAU_STABLE[0] + (TAU_STABLE[1] - TAU_STABLE[0]) * (1.0 - sev)
        decay = np.exp(-t / tau)
        u = u_final - (u_final - u_fault) * decay
        p = load * (1.0 - 0.4 * motor * near * decay)
        q = q0 + 0.5 * motor * near * decay
    else:
        # the recovery a marginally stable case would follow, dragged down to
        # u_stall; with stall_onset_max_s > 0 mild cases stall later
        u_peak = 0.92 + 0.04 * e
        tau = TAU_STABLE[1] * (1.0 + sev)
        decay = np.exp(-t / tau)
        recovering = u_peak - (u_peak - u_fault) * decay
        u_stall = 0.65 - 0.25 * (0.5 * sev + 0.5 * near)
        onset = stall_onset_max_s * (1.0 - sev)
        blend = np.exp(-np.maximum(t - onset, 0.0) / TAU_COLLAPSE)
        u = u_stall + (recovering - u_stall) * blend
        stalled = 1.0 - blend
        p = load * (1.0 - 0.4 * motor * near * decay) - (0.2 + 0.3 * sev) * motor * load * stalled
        q = q0 + 0.5 * motor * near * decay + (0.3 + 0.6 * sev) * motor * stalled
    return np.hstack([np.broadcast_to(u, (m, n_buses)),
                      np.broadcast_to(p, (m, n_buses)),
                      np.broadcast_to(q, (m, n_buses))])


def simulate_trajectory(s: ScenarioParams, outcome: StabilityOutcome, cfg: GridConfig,
                        instance_seed: int | np.random.SeedSequence,
                        instance_id: int = 0) -> TimeSeriesInstance:
    rng = np.random.default_rng(instance_seed)
    offset = rng.uniform(0.0, cfg.sample_jitter_s) if cfg.sample_jitter_s > 0 else 0.0
    series = trajectory_template(s, outcome, cfg.n_buses, cfg.m, cfg.dt_s, offset,
                                 cfg.stall_onset_max_s)
    if cfg.noise_sigma > 0:
        series = series + rng.normal(0.0, cfg.noise_sigma, size=series.shape)
    return TimeSeriesInstance(id=instance_id, scenario=s, series=series, truth=outcome.cls)


def generate_instance(cfg: GridConfig, scenario: ScenarioParams, instance_id: int) -> TimeSeriesInstance:
    ss = _instance_seed(cfg.seed, instance_id)
    draw_seq, noise_seq = ss.spawn(2)
    draw = float(np.random.default_rng(draw_seq).random())
    outcome = severity_score(scenario, draw, cfg.threshold)
    return simulate_trajectory(scenario, outcome, cfg, noise_seq, instance_id)


def scenario_plan(cfg: GridConfig) -> list[ScenarioParams]:
    """Scenario for each instance id.

    Without ``n_samples`` every grid point is used once in lexicographic
    order. Otherwise a seeded permutation of the grid is cycled, so each
    scenario is used either floor or ceil of ``n_samples / grid_size`` times.
    """
    scenarios = enumerate_scenarios(cfg)
    if cfg.n_samples is None:
        return scenarios
    order = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5CE7])).permutation(len(scenarios))
    return [scenarios[order[i % len(scenarios)]] for i in range(cfg.n_samples)]


def generate_dataset(cfg: GridConfig) -> Dataset:
    insts = [generate_instance(cfg, s, k) for k, s in enumerate(scenario_plan(cfg))]
    return Dataset(instances=tuple(insts), n_buses=cfg.n_buses, m=cfg.m, dt_s=cfg.dt_s)


def with_overrides(cfg: GridConfig, **kw) -> GridConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
