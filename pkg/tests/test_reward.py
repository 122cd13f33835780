import math
import random

import pytest

from tikzrig.codemetrics import CodeScores
from tikzrig.config import GrpoSettings, default_config
from tikzrig.errors import (
    GroupTooSmall,
    InvalidBand,
    LengthMismatch,
    MissingScores,
    ToolchainMissing,
)
from tikzrig.imgmetrics import VisualScores
from tikzrig.reward import (
    RewardConfig,
    clipped_surrogate,
    complexity_prefilter,
    curriculum_select,
    exec_reward,
    group_advantages,
    kl_penalty,
    stage1_total,
    stage2_total,
    visual_reward,
)
from tikzrig.sandbox import CompileOutcome

SUCCESS = CompileOutcome("success", 0.1, "")
FAILURE = CompileOutcome("compile-error", 0.1, "boom")
TIMEOUT = CompileOutcome("timeout", 10.0, "")
MISSING = CompileOutcome("toolchain-missing", 0.0, "")

STAGE1 = RewardConfig.stage1(default_config())
STAGE2 = RewardConfig.stage2(default_config())


def vs(s_sem, s_struct):
    return VisualScores(s_raw=0.0, s_sem=s_sem, s_struct=s_struct, ssim=0.0, d_perceptual=0.0)


def code(s):
    return CodeScores(d_eed=0.0, s_ted=0.0, crystal_bleu=0.0, s_code=s, gamma=0.4)


class TestExecReward:
    def test_stage1_constants(self):
        assert exec_reward(SUCCESS, STAGE1) == 0.1
        assert exec_reward(FAILURE, STAGE1) == -0.6
        assert exec_reward(TIMEOUT, STAGE1) == -0.6

    def test_stage2_constants(self):
        assert exec_reward(SUCCESS, STAGE2) == 0.05
        assert exec_reward(FAILURE, STAGE2) == -0.5

    def test_toolchain_missing_raises(self):
        with pytest.raises(ToolchainMissing):
            exec_reward(MISSING, STAGE1)

    def test_codomain_is_two_values(self):
        for status in ("success", "compile-error", "timeout"):
            value = exec_reward(CompileOutcome(status, 0.0, ""), STAGE1)
            assert value in (STAGE1.alpha_plus, STAGE1.alpha_minus)


class TestVisualReward:
    def test_endpoints(self):
        assert visual_reward(vs(1.0, 1.0), STAGE1) == pytest.approx(1.0)
        assert visual_reward(vs(0.0, 0.0), STAGE1) == 0.0

    def test_weighted_mix(self):
        assert visual_reward(vs(0.5, 0.5), STAGE1) == pytest.approx(0.5)
        assert visual_reward(vs(1.0, 0.0), STAGE1) == pytest.approx(0.6)
        assert visual_reward(vs(0.0, 1.0), STAGE1) == pytest.approx(0.4)


class TestStage1Total:
    def test_failure_is_exactly_alpha_minus(self):
        b = stage1_total(FAILURE, None, STAGE1)
        assert b.total == STAGE1.alpha_minus
        assert b.gate_open is False and b.s_code is None

    def test_success_arithmetic(self):
        b = stage1_total(SUCCESS, vs(1.0, 0.5), STAGE1)  # r_vis = 0.8
        assert b.r_vis == pytest.approx(0.8)
        assert b.total == pytest.approx(0.9)

    def test_zero_visual_leaves_alpha_plus(self):
        b = stage1_total(SUCCESS, vs(0.0, 0.0), STAGE1)
        assert b.total == STAGE1.alpha_plus

    def test_missing_scores_raises(self):
        with pytest.raises(MissingScores):
            stage1_total(SUCCESS, None, STAGE1)

    def test_monotone_in_each_score(self):
        grid = [i / 10 for i in range(11)]
        for s_struct in (0.0, 0.5, 1.0):
            totals = [stage1_total(SUCCESS, vs(s, s_struct), STAGE1).total for s in grid]
            assert all(b >= a for a, b in zip(totals, totals[1:]))
        for s_sem in (0.0, 0.5, 1.0):
            totals = [stage1_total(SUCCESS, vs(s_sem, s), STAGE1).total for s in grid]
            assert all(b >= a for a, b in zip(totals, totals[1:]))


class TestStage2Total:
    def _with_r_vis(self, r_vis, s_code=None):
        scores = vs(r_vis, r_vis)  # lambda_sem + lambda_str = 1 keeps r_vis exact
        cs = code(s_code) if s_code is not None else None
        return stage2_total(SUCCESS, scores, cs, STAGE2)

    def test_open_gate_adds_code_term(self):
        b = self._with_r_vis(0.7, s_code=0.8)
        assert b.gate_open is True
        assert b.total == pytest.approx(0.05 + 0.80 * 0.7 + 0.15 * 0.8)

    def test_closed_gate_ignores_code(self):
        b = self._with_r_vis(0.5, s_code=0.9)
        assert b.gate_open is False
        assert b.s_code is None
        assert b.total == pytest.approx(0.05 + 0.80 * 0.5)

    def test_gate_is_strict(self):
        opened = [self._with_r_vis(r).gate_open for r in (0.59, 0.60, 0.61)]
        assert opened == [False, False, True]

    def test_failure_total(self):
        b = stage2_total(FAILURE, None, None, STAGE2)
        assert b.total == STAGE2.alpha_minus and not b.gate_open

    def test_pending_when_gate_open_without_code(self):
        b = self._with_r_vis(0.9)
        assert b.gate_open and b.pending and b.s_code is None
        assert b.total == pytest.approx(0.05 + 0.80 * 0.9)

    def test_gate_closed_total_equals_base(self):
        base = self._with_r_vis(0.3)
        with_code = stage2_total(SUCCESS, vs(0.3, 0.3), code(1.0), STAGE2)
        assert base.total == with_code.total


class TestGroupAdvantages:
    def test_hand_computed_example(self):
        stats = group_advantages([1.0, 0.5, 0.0])
        expected = 0.5 / math.sqrt(1 / 6)
        assert stats.advantages[0] == pytest.approx(expected, abs=1e-4)
        assert stats.advantages[1] == pytest.approx(0.0, abs=1e-12)
        assert stats.advantages[2] == pytest.approx(-expected, abs=1e-4)
        assert stats.advantages[0] == pytest.approx(1.2247, abs=1e-4)

    def test_degenerate_group_zeroes(self):
        assert group_advantages([0.7] * 4).advantages == (0.0,) * 4

    def test_permutation_equivariance(self):
        rewards = [0.3, -0.2, 0.9, 0.1]
        base = group_advantages(rewards).advantages
        perm = [2, 0, 3, 1]
        shuffled = group_advantages([rewards[i] for i in perm]).advantages
        assert shuffled == tuple(base[i] for i in perm)

    def test_group_too_small(self):
        with pytest.raises(GroupTooSmall):
            group_advantages([1.0])

    def test_normalization_properties(self):
        rng = random.Random(5)
        cfg = GrpoSettings()
        for _ in range(500):
            size = rng.randint(2, 16)
            rewards = [rng.uniform(-1, 1) for _ in range(size)]
            stats = group_advantages(rewards, cfg)
            assert abs(sum(stats.advantages) / size) < 1e-9
            if stats.std > cfg.std_floor:
                var = sum(a * a for a in stats.advantages) / size
                assert abs(math.sqrt(var) - 1.0) < 1e-6


class TestClippedSurrogate:
    def test_unit_ratio_passthrough(self):
        for eps in (0.1, 0.2, 0.5):
            assert clipped_surrogate(1.0, 0.37, eps) == 0.37

    def test_positive_advantage_clipped_above(self):
        assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)

    def test_negative_advantage_clipped_below(self):
        assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)

    def test_pessimism_property(self):
        rng = random.Random(11)
        for _ in range(2000):
            rho = rng.uniform(0, 3)
            adv = rng.uniform(-2, 2)
            eps = rng.uniform(0.05, 0.5)
            assert clipped_surrogate(rho, adv, eps) <= rho * adv + 1e-12

    def test_negative_ratio_rejected(self):
        with pytest.raises(ValueError):
            clipped_surrogate(-0.1, 1.0, 0.2)


class TestKlPenalty:
    def test_identical_distributions(self):
        logp = [-1.0, -2.0, -0.5]
        assert kl_penalty(logp, logp, beta=1.0) == 0.0

    def test_ln2_delta(self):
        logp = [-2.0, -2.0]
        logp_ref = [-2.0 + math.log(2)] * 2
        expected = 2.0 - math.log(2) - 1.0
        assert kl_penalty(logp, logp_ref, beta=1.0) == pytest.approx(expected, abs=1e-12)

    def test_beta_linearity(self):
        logp = [-1.0, -3.0]
        logp_ref = [-1.5, -2.0]
        assert kl_penalty(logp, logp_ref, 2.0) == pytest.approx(
            2.0 * kl_penalty(logp, logp_ref, 1.0), abs=1e-12
        )

    def test_non_negative(self):
        rng = random.Random(3)
        for _ in range(200):
            n = rng.randint(1, 8)
            a = [rng.uniform(-5, 0) for _ in range(n)]
            b = [rng.uniform(-5, 0) for _ in range(n)]
            assert kl_penalty(a, b, 1.0) >= 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            kl_penalty([-1.0], [-1.0, -2.0], 1.0)


class TestCurriculumSelect:
    def rec(self, status, s_vis):
        return {"compile_status": status, "s_vis": s_vis}

    def test_compile_failure_always_selected(self):
        records = [self.rec("compile-error", 0.99), self.rec("timeout", 0.01)]
        assert curriculum_select(records, 0.5, 0.9) == records

    def test_mastered_excluded(self):
        records = [self.rec("success", 0.97)]
        assert curriculum_select(records, 0.5, 0.9) == []

    def test_intractable_excluded(self):
        records = [self.rec("success", 0.2)]
        assert curriculum_select(records, 0.5, 0.9) == []

    def test_band_inclusive(self):
        records = [self.rec("success", 0.5), self.rec("success", 0.9)]
        assert curriculum_select(records, 0.5, 0.9) == records

    def test_ordering_preserved(self):
        records = [
            self.rec("success", 0.6),
            self.rec("compile-error", 0.0),
            self.rec("success", 0.7),
        ]
        assert curriculum_select(records, 0.5, 0.9) == records

    def test_invalid_band(self):
        with pytest.raises(InvalidBand):
            curriculum_select([], 0.9, 0.5)

    def test_complexity_prefilter_is_strict(self):
        records = [{"visual_complexity": c} for c in (1, 3, 4, 5)]
        kept = complexity_prefilter(records, min_complexity=3)
        assert [r["visual_complexity"] for r in kept] == [4, 5]


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(
            alpha_plus=-0.1, alpha_minus=-0.6, lambda_vis=1.0, lambda_sem=0.6,
            lambda_str=0.4, tau_hold=0.8, tau_temp=0.5, tau_gate=0.6,
            lambda_code=0.15, gamma=0.4, tau_ted=0.4, stage="one",
        )
