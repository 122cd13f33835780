"""Declarative run configuration.

A single JSON document holds every tunable constant: reward shaping for
both training stages, GRPO statistics, sandbox/toolchain settings, corpus
curation thresholds, code-metric parameters and curriculum bands.  Every
constant is echoed into run manifests so results stay attributable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .texlex import DEFAULT_EXCLUSION_LIST


@dataclass
class StageRewards:
    """Reward constants for one RL stage."""

    success: float
    failure: float
    lambda_vis: float
    lambda_sem: float = 0.6
    lambda_str: float = 0.4
    tau_hold: float = 0.80
    tau_temp: float = 0.5
    tau_gate: float = 0.6
    lambda_code: float = 0.15
    gamma: float = 0.4          # CrystalBLEU share of s_code; TED gets 1 - gamma
    tau_ted: float = 0.4


@dataclass
class GrpoSettings:
    group_size: int = 5
    clip_eps: float = 0.2
    kl_coeff: float = 0.01
    std_floor: float = 1e-6


@dataclass
class SandboxSettings:
    engine: str = "auto"          # executable path, "auto", or "stub"
    rasterizer: str = "auto"
    compile_timeout: float = 10.0  # data-engine validation budget, seconds
    render_timeout: float = 20.0   # stage-2 / evaluation budget, seconds
    dpi: int = 300
    max_log_bytes: int = 4096
    keep_artifacts: bool = False
    jobs: int = 0                  # 0 = logical cores
    standalone_border_pt: float = 10.0
    env_allowlist: tuple[str, ...] = ("PATH", "HOME", "TEXMFHOME", "TEXMFVAR", "TEXMFCACHE", "LANG", "LC_ALL")


@dataclass
class CurationSettings:
    max_tokens: int = 8192         # drop when token count >= this
    max_aspect: float = 15.0       # drop when aspect ratio > 15 (or < 1/15)
    dedup_order: int = 50          # n-gram order for shingling
    dedup_max_shared: int = 5      # remove when shared shingles > this
    exclusion_list: tuple[str, ...] = DEFAULT_EXCLUSION_LIST
    max_repair_iters: int = 3
    gate_total_min: int = 18       # total score >= this
    gate_correctness_floor: int = 2  # correctness strictly > this
    gate_min_other: int = 2        # every other dimension >= this


@dataclass
class CodeMetricSettings:
    trivial_k: int = 500
    max_order: int = 4
    eed_insertion: float = 1.0
    eed_substitution: float = 1.0
    eed_deletion: float = 0.2
    eed_jump: float = 2.0
    eed_coverage: float = 0.3


@dataclass
class CurriculumSettings:
    tau_min: float = 0.5
    tau_max: float = 0.9
    min_complexity: int = 3        # pre-filter: visual complexity strictly above this


@dataclass
class PolicySampling:
    temperature: float = 0.1
    top_p: float = 0.95
    max_tokens: int = 4096


@dataclass
class Config:
    stage1: StageRewards = field(default_factory=lambda: StageRewards(success=0.1, failure=-0.6, lambda_vis=1.0))
    stage2: StageRewards = field(default_factory=lambda: StageRewards(success=0.05, failure=-0.5, lambda_vis=0.80))
    grpo: GrpoSettings = field(default_factory=GrpoSettings)
    sandbox: SandboxSettings = field(default_factory=SandboxSettings)
    curation: CurationSettings = field(default_factory=CurationSettings)
    codemetrics: CodeMetricSettings = field(default_factory=CodeMetricSettings)
    curriculum: CurriculumSettings = field(default_factory=CurriculumSettings)
    sampling: PolicySampling = field(default_factory=PolicySampling)
    background_threshold: float = 0.99  # trim: pixel < this counts as content
    cache_dir: str = ""                 # backend response cache; empty disables

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def default_config() -> Config:
    return Config()


def _merge(dc, data: dict, path: str):
    for key, value in data.items():
        if not hasattr(dc, key):
            raise ConfigError(f"unknown config key: {path}{key}")
        current = getattr(dc, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _merge(current, value, f"{path}{key}.")
        elif isinstance(current, tuple) and isinstance(value, list):
            setattr(dc, key, tuple(value))
        elif isinstance(value, dict):
            raise ConfigError(f"scalar expected at {path}{key}")
        else:
            setattr(dc, key, type(current)(value) if current is not None else value)
    return dc


def load_config(path) -> Config:
    """Load a JSON config file on top of the shipped defaults."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge(default_config(), data, "")
