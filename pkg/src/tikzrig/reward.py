"""Reward composition and GRPO mathematics.

Covers the execution gate, the blended visual reward, the fidelity-gated
stage-2 total, in-group advantage normalization, the clipped surrogate
term, the KL penalty term and curriculum selection.  Everything here is
pure scalar arithmetic; no parameter updates happen in this package.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .codemetrics import CodeScores
from .config import Config, GrpoSettings, StageRewards
from .errors import (
    GroupTooSmall,
    InvalidBand,
    LengthMismatch,
    MissingScores,
    ToolchainMissing,
)
from .imgmetrics import VisualScores
from .sandbox import STATUS_SUCCESS, STATUS_TOOLCHAIN_MISSING, CompileOutcome

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    alpha_plus: float
    alpha_minus: float
    lambda_vis: float
    lambda_sem: float
    lambda_str: float
    tau_hold: float
    tau_temp: float
    tau_gate: float
    lambda_code: float
    gamma: float
    tau_ted: float
    stage: str  # "one" | "two"

    def __post_init__(self):
        if not (self.alpha_minus < 0 < self.alpha_plus):
            raise ValueError("need alpha_minus < 0 < alpha_plus")
        if not 0.0 <= self.tau_gate <= 1.0:
            raise ValueError("tau_gate must lie in [0, 1]")
        if abs(self.lambda_sem + self.lambda_str - 1.0) > 1e-9:
            logger.warning(
                "visual mixing weights sum to %.4f, not 1",
                self.lambda_sem + self.lambda_str,
            )

    @classmethod
    def from_stage(cls, stage: StageRewards, name: str) -> "RewardConfig":
        return cls(
            alpha_plus=stage.success,
            alpha_minus=stage.failure,
            lambda_vis=stage.lambda_vis,
            lambda_sem=stage.lambda_sem,
            lambda_str=stage.lambda_str,
            tau_hold=stage.tau_hold,
            tau_temp=stage.tau_temp,
            tau_gate=stage.tau_gate,
            lambda_code=stage.lambda_code,
            gamma=stage.gamma,
            tau_ted=stage.tau_ted,
            stage=name,
        )

    @classmethod
    def stage1(cls, config: Config | None = None) -> "RewardConfig":
        return cls.from_stage((config or Config()).stage1, "one")

    @classmethod
    def stage2(cls, config: Config | None = None) -> "RewardConfig":
        return cls.from_stage((config or Config()).stage2, "two")


@dataclass(frozen=True)
class RewardBreakdown:
    r_exec: float
    s_sem: float
    s_struct: float
    r_vis: float
    gate_open: bool
    s_code: Optional[float]
    total: float
    pending: bool = False  # gate open but the code term not yet supplied

    def to_dict(self) -> dict:
        return {
            "r_exec": self.r_exec,
            "s_sem": self.s_sem,
            "s_struct": self.s_struct,
            "r_vis": self.r_vis,
            "gate_open": self.gate_open,
            "s_code": self.s_code,
            "total": self.total,
            "pending": self.pending,
        }


@dataclass(frozen=True)
class GroupStats:
    rewards: tuple[float, ...]
    mean: float
    std: float
    advantages: tuple[float, ...]


def exec_reward(outcome: CompileOutcome, cfg: RewardConfig) -> float:
    """Hard execution constraint: alpha+ on success, alpha- otherwise.

    A missing toolchain must never be scored as a failed generation.
    """
    if outcome.status == STATUS_TOOLCHAIN_MISSING:
        raise ToolchainMissing("cannot score rollouts without a LaTeX engine")
    return cfg.alpha_plus if outcome.status == STATUS_SUCCESS else cfg.alpha_minus


def visual_reward(scores: VisualScores, cfg: RewardConfig) -> float:
    """Blend of semantic and structural scores; in [0,1] when weights sum to 1."""
    return cfg.lambda_sem * scores.s_sem + cfg.lambda_str * scores.s_struct


def stage1_total(
    outcome: CompileOutcome, scores: Optional[VisualScores], cfg: RewardConfig
) -> RewardBreakdown:
    """Stage-1 reward: r_exec plus the compilation-gated visual term."""
    r_exec = exec_reward(outcome, cfg)
    if outcome.status != STATUS_SUCCESS:
        return RewardBreakdown(r_exec, 0.0, 0.0, 0.0, False, None, r_exec)
    if scores is None:
        raise MissingScores("successful compile scored without visual scores")
    r_vis = visual_reward(scores, cfg)
    total = r_exec + cfg.lambda_vis * r_vis
    return RewardBreakdown(r_exec, scores.s_sem, scores.s_struct, r_vis, False, None, total)


def stage2_total(
    outcome: CompileOutcome,
    scores: Optional[VisualScores],
    code_scores: Optional[CodeScores],
    cfg: RewardConfig,
) -> RewardBreakdown:
    """Stage-2 reward: the stage-1 form plus the fidelity-gated code term.

    The gate is strict (r_vis > tau_gate).  When the gate is open but no
    reconstruction has been scored yet, the breakdown is marked pending
    and the total omits the code term.
    """
    r_exec = exec_reward(outcome, cfg)
    if outcome.status != STATUS_SUCCESS:
        return RewardBreakdown(r_exec, 0.0, 0.0, 0.0, False, None, r_exec)
    if scores is None:
        raise MissingScores("successful compile scored without visual scores")
    r_vis = visual_reward(scores, cfg)
    base = r_exec + cfg.lambda_vis * r_vis
    gate_open = r_vis > cfg.tau_gate
    if not gate_open:
        return RewardBreakdown(r_exec, scores.s_sem, scores.s_struct, r_vis, False, None, base)
    if code_scores is None:
        return RewardBreakdown(
            r_exec, scores.s_sem, scores.s_struct, r_vis, True, None, base, pending=True
        )
    total = base + cfg.lambda_code * code_scores.s_code
    return RewardBreakdown(
        r_exec, scores.s_sem, scores.s_struct, r_vis, True, code_scores.s_code, total
    )


def group_advantages(rewards: Sequence[float], cfg: GrpoSettings | None = None) -> GroupStats:
    """In-group advantage normalization with a population std floor.

    All-equal groups normalize to all-zero advantages rather than blowing
    up on the tiny standard deviation.
    """
    cfg = cfg or GrpoSettings()
    if len(rewards) < 2:
        raise GroupTooSmall(f"group of {len(rewards)} rollouts; need >= 2")
    mean = sum(rewards) / len(rewards)
    var = sum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(var)
    denom = max(std, cfg.std_floor)
    advantages = tuple((r - mean) / denom for r in rewards)
    return GroupStats(tuple(rewards), mean, std, advantages)


def clipped_surrogate(rho: float, advantage: float, clip_eps: float) -> float:
    """Pessimistic clipped policy-gradient term: min(rho*A, clip(rho)*A)."""
    if rho < 0:
        raise ValueError("probability ratio must be non-negative")
    clipped = min(max(rho, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(rho * advantage, clipped * advantage)


def kl_penalty(
    logp: Sequence[float], logp_ref: Sequence[float], beta: float
) -> float:
    """Non-negative per-token KL estimate exp(d) - d - 1, scaled by beta.

    d is logp_ref - logp per token; the estimator is zero exactly when the
    two distributions agree on the sampled tokens.
    """
    if len(logp) != len(logp_ref):
        raise LengthMismatch(f"{len(logp)} tokens vs {len(logp_ref)} reference tokens")
    if not logp:
        return 0.0
    total = 0.0
    for lp, lr in zip(logp, logp_ref):
        delta = lr - lp
        total += math.exp(delta) - delta - 1.0
    return beta * total / len(logp)


def complexity_prefilter(
    records: Iterable[Mapping], min_complexity: int = 3
) -> list[Mapping]:
    """Drop records whose judged visual complexity is not strictly above the floor.

    This runs before policy sampling and similarity scoring, so only
    sufficiently hard samples are even considered for the curriculum.
    """
    return [r for r in records if r["visual_complexity"] > min_complexity]


def curriculum_select(
    records: Iterable[Mapping], tau_min: float, tau_max: float
) -> list[Mapping]:
    """Keep compile failures plus samples inside the mid-band of visual similarity.

    Each record is a mapping with "compile_status" and "s_vis" keys; band
    endpoints are inclusive and ordering is preserved.  Samples above the
    band are mastered, below it intractable; both are dropped.
    """
    if tau_min > tau_max:
        raise InvalidBand(f"tau_min {tau_min} > tau_max {tau_max}")
    selected = []
    for rec in records:
        failed = rec["compile_status"] != STATUS_SUCCESS
        if failed or tau_min <= rec["s_vis"] <= tau_max:
            selected.append(rec)
    return selected
