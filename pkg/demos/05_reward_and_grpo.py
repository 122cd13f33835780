"""Reward composition and the GRPO scalar terms.

Stage 1 pays for compiling and for visual fidelity; stage 2 adds a code
consistency bonus behind a strict fidelity gate.  Advantages normalize
in-group, and the clipped surrogate / KL terms are what an external
trainer consumes.
"""

import math

from tikzrig.codemetrics import CodeScores
from tikzrig.config import default_config
from tikzrig.imgmetrics import VisualScores
from tikzrig.reward import (
    RewardConfig,
    clipped_surrogate,
    curriculum_select,
    group_advantages,
    kl_penalty,
    stage1_total,
    stage2_total,
)
from tikzrig.sandbox import CompileOutcome

SUCCESS = CompileOutcome("success", 0.2, "")
FAILURE = CompileOutcome("compile-error", 0.2, "! error")

stage1 = RewardConfig.stage1(default_config())
stage2 = RewardConfig.stage2(default_config())


def scores(s_sem, s_struct):
    return VisualScores(0.0, s_sem, s_struct, 0.0, 0.0)


# stage 1: compile gate plus blended visual reward
print("stage 1:")
print(f"  failure            -> {stage1_total(FAILURE, None, stage1).total:+.3f}")
print(f"  success, weak vis  -> {stage1_total(SUCCESS, scores(0.1, 0.2), stage1).total:+.3f}")
print(f"  success, strong    -> {stage1_total(SUCCESS, scores(0.9, 0.8), stage1).total:+.3f}")

# stage 2: the code-consistency term only enters above the fidelity gate
print("\nstage 2 gate sweep (tau_gate = 0.6, s_code = 0.8):")
code = CodeScores(0.1, 0.8, 0.8, 0.8, 0.4)
for r_vis in (0.55, 0.60, 0.65):
    b = stage2_total(SUCCESS, scores(r_vis, r_vis), code, stage2)
    tag = "open" if b.gate_open else "closed"
    print(f"  r_vis={r_vis:.2f}  gate {tag:<7} total {b.total:+.4f}")

# in-group advantage normalization: mean 0, unit spread
rewards = [0.92, 0.55, -0.50, 0.71]
stats = group_advantages(rewards)
print(f"\nrewards    {['%+.2f' % r for r in rewards]}")
print(f"advantages {['%+.2f' % a for a in stats.advantages]}  (mean {sum(stats.advantages):+.1e})")

# the trainer-side surrogate is pessimistic by construction
print("\nclipped surrogate (eps=0.2):")
for rho, adv in ((1.0, 0.8), (1.5, 0.8), (0.5, -0.8)):
    print(f"  rho={rho:.1f} A={adv:+.1f} -> {clipped_surrogate(rho, adv, 0.2):+.3f}")

# per-token KL penalty against the reference policy
logp = [-1.2, -0.8, -2.0]
logp_ref = [lp + math.log(1.5) for lp in logp]
print(f"\nKL penalty (beta=0.01): {kl_penalty(logp, logp_ref, 0.01):.5f}")

# curriculum: keep failures and the mid-band of visual similarity
records = [
    {"compile_status": "compile-error", "s_vis": 0.0},
    {"compile_status": "success", "s_vis": 0.35},   # intractable, dropped
    {"compile_status": "success", "s_vis": 0.72},   # zone of proximal development
    {"compile_status": "success", "s_vis": 0.97},   # mastered, dropped
]
kept = curriculum_select(records, tau_min=0.5, tau_max=0.9)
print(f"\ncurriculum keeps {len(kept)} of {len(records)} records:",
      [r["s_vis"] for r in kept])
