"""Run configuration: a nested YAML file resolved into typed settings.

Schema (all keys optional except ``data``; relative paths resolve against the
config file's directory)::

    seed: 7
    threads: 1
    data: {catalogue, registry, generation, incidents, states, pairs, priors}
    observation: {start, end, split, unmatched_source}
    pmf: {bin_width_mw: 25, min_periods: 100}
    states: {n_bins: 50, metric_weights: [0.6, 0.2, 0.2]}
    thresholds: {summary: [0.5, 0.8, 1.2], curve: {start: 0.05, stop: 2.2, step: 0.05}}
    sfr: {load_damping_pct_per_hz: 1.0, droop: 0.04, tau_r_s: 1.0}
    physics: {cache_dir: cache, boundary_fill: nearest, sim: {...}}
    controls: {mode: both, dc: {contracted_mw: 1000}, lfdd: {stages, stage_credit}}
    cascade: {enabled: false, p_cond: 0.3, der_loss_mw: 350, rocof_threshold_hz_per_s: 0.125}
    logic_tree: {compound_multiplier: 1.0, branches: {...}}
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import yaml

from .controls import CONTROL_MODES, DEFAULT_LFDD_STAGES, DcConfig, LfddConfig
from .errors import ConfigError
from .layers import CascadeSpec
from .logictree import BRANCH_NAMES, DEFAULT_BRANCHES
from .physics import SimConfig
from .sfr import SfrParams
from .tableio import parse_timestamp

DATA_KEYS = ("catalogue", "registry", "generation", "incidents", "states", "pairs", "priors")
REQUIRED_DATA = ("catalogue", "generation", "incidents", "states")
ENV_VAR = "PFHA_CONFIG"


@dataclass
class RunConfig:
    path: Path
    sha256: str
    seed: int = 0
    threads: int = 1
    data: dict[str, Path | None] = field(default_factory=dict)
    start: datetime | None = None
    end: datetime | None = None
    split: datetime | None = None
    unmatched_source: str | None = None
    bin_width_mw: float = 25.0
    min_periods: int = 100
    n_state_bins: int = 50
    metric_weights: tuple[float, float, float] = (0.6, 0.2, 0.2)
    summary_thresholds: tuple[float, ...] = (0.5, 0.8, 1.2)
    curve: tuple[float, float, float] = (0.05, 2.2, 0.05)
    sfr: SfrParams = field(default_factory=SfrParams)
    sim: SimConfig = field(default_factory=SimConfig)
    cache_dir: Path | None = None
    boundary_fill: str = "nearest"
    control_mode: str = "both"
    dc: DcConfig = field(default_factory=DcConfig)
    lfdd: LfddConfig = field(default_factory=LfddConfig)
    cascade: CascadeSpec | None = None
    compound_multiplier: float = 1.0
    branches: dict = field(default_factory=lambda: dict(DEFAULT_BRANCHES))


def resolve_config_path(arg: str | None) -> Path:
    p = arg or os.environ.get(ENV_VAR)
    if not p:
        raise ConfigError(f"no config given (use --config or set {ENV_VAR})")
    return Path(p)


def _section(raw: dict, key: str) -> dict:
    v = raw.get(key) or {}
    if not isinstance(v, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return v


def _ts(v, key):
    if v is None:
        return None
    try:
        return v if isinstance(v, datetime) else parse_timestamp(str(v))
    except ValueError:
        raise ConfigError(f"bad timestamp for {key}: {v!r}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = path.parent
    try:
        return _build(raw, path, base, hashlib.sha256(text).hexdigest())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _build(raw: dict, path: Path, base: Path, digest: str) -> RunConfig:
    cfg = RunConfig(path=path, sha256=digest)
    cfg.seed = int(raw.get("seed", 0))
    cfg.threads = int(raw.get("threads", 1))

    data = _section(raw, "data")
    unknown = set(data) - set(DATA_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown data keys {sorted(unknown)}")
    for key in REQUIRED_DATA:
        if not data.get(key):
            raise ConfigError(f"{path}: data.{key} is required")
    cfg.data = {k: (base / data[k]) if data.get(k) else None for k in DATA_KEYS}

    obs = _section(raw, "observation")
    cfg.start, cfg.end, cfg.split = (_ts(obs.get(k), f"observation.{k}") for k in ("start", "end", "split"))
    cfg.unmatched_source = obs.get("unmatched_source")

    pmf = _section(raw, "pmf")
    cfg.bin_width_mw = float(pmf.get("bin_width_mw", 25.0))
    cfg.min_periods = int(pmf.get("min_periods", 100))

    st = _section(raw, "states")
    cfg.n_state_bins = int(st.get("n_bins", 50))
    cfg.metric_weights = tuple(float(w) for w in st.get("metric_weights", (0.6, 0.2, 0.2)))
    if len(cfg.metric_weights) != 3:
        raise ConfigError(f"{path}: states.metric_weights needs three values")

    thr = _section(raw, "thresholds")
    cfg.summary_thresholds = tuple(float(t) for t in thr.get("summary", (0.5, 0.8, 1.2)))
    curve = thr.get("curve") or {}
    cfg.curve = (float(curve.get("start", 0.05)), float(curve.get("stop", 2.2)), float(curve.get("step", 0.05)))

    cfg.sfr = SfrParams(**_section(raw, "sfr"))

    phys = _section(raw, "physics")
    cfg.sim = SimConfig.from_dict(phys.get("sim"))
    cfg.cache_dir = base / phys.get("cache_dir", "cache")
    cfg.boundary_fill = phys.get("boundary_fill", "nearest")

    ctl = _section(raw, "controls")
    cfg.control_mode = normalise_mode(ctl.get("mode", "both"))
    dc = ctl.get("dc") or {}
    cfg.dc = DcConfig(contracted_mw=dc.get("contracted_mw", 1000.0), effectiveness=float(dc.get("effectiveness", 0.85)))
    lf = ctl.get("lfdd") or {}
    cfg.lfdd = LfddConfig(
        stages=tuple((float(a), float(f)) for a, f in lf.get("stages", DEFAULT_LFDD_STAGES)),
        relay_effectiveness=float(lf.get("relay_effectiveness", 0.85)),
        stage_credit=float(lf.get("stage_credit", 0.5)),
        enabled=bool(lf.get("enabled", True)),
    )

    cas = _section(raw, "cascade")
    if cas.get("enabled", False):
        cfg.cascade = CascadeSpec(**{k: float(v) for k, v in cas.items() if k != "enabled"})

    lt = _section(raw, "logic_tree")
    cfg.compound_multiplier = float(lt.get("compound_multiplier", 1.0))
    br = lt.get("branches") or {}
    unknown = set(br) - set(BRANCH_NAMES)
    if unknown:
        raise ConfigError(f"{path}: unknown logic-tree branches {sorted(unknown)}")
    for name, opts in br.items():
        cfg.branches[name] = tuple((v, float(w)) for v, w in opts)
    if cfg.threads < 1:
        raise ConfigError(f"{path}: threads must be >= 1")
    return cfg


_MODE_ALIASES = {"none": "none", "dc": "dc_only", "dc_only": "dc_only", "lfdd": "lfdd_only", "lfdd_only": "lfdd_only", "both": "both"}


def normalise_mode(mode: str) -> str:
    try:
        m = _MODE_ALIASES[str(mode).lower()]
    except KeyError:
        raise ConfigError(f"unknown controls mode {mode!r}; expected one of none, dc, lfdd, both") from None
    assert m in CONTROL_MODES
    return m
