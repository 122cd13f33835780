"""Desk-scale dual self-consistency rollout loop.

Runs the round-trip verification cycle against a pluggable policy: sample
a group of programs per image, render each, score stage-2 rewards, and
for rollouts whose visual reward clears the fidelity gate ask the same
policy to reconstruct the program from its own render, scoring code
consistency between primal and reconstruction.  Advantages are normalized
in-group.  No parameters are updated here; the scalar terms are exactly
what an external trainer needs.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

from .backends import BackendHub
from .codemetrics import TrivialNgramSet, code_consistency, mine_trivial_ngrams
from .config import Config, GrpoSettings, PolicySampling
from .errors import BackendError, GroupTooSmall
from .imgmetrics import cosine, fallback_embedding
from .raster import RasterImage
from .reward import GroupStats, RewardBreakdown, RewardConfig, group_advantages, stage2_total
from .sandbox import (
    STATUS_COMPILE_ERROR,
    STATUS_SUCCESS,
    CompileOutcome,
    Sandbox,
    wrap_standalone,
)
from .scoring import visual_scores
from .texlex import lex_normalized

Renderer = Callable[[str], tuple[CompileOutcome, Optional[RasterImage]]]

_SCORING_FAILURE = CompileOutcome(STATUS_COMPILE_ERROR, 0.0, "degenerate or unscorable render")


class PolicyHandle(Protocol):
    def sample(self, image: RasterImage, n: int) -> list[str]: ...


@dataclass(frozen=True)
class RolloutTrace:
    image_id: str
    codes: tuple[str, ...]
    statuses: tuple[str, ...]
    breakdowns: tuple[RewardBreakdown, ...]
    reconstructions: dict  # rollout index -> reconstructed code (gate-open only)
    stats: GroupStats

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "codes": list(self.codes),
            "statuses": list(self.statuses),
            "breakdowns": [b.to_dict() for b in self.breakdowns],
            "reconstructions": {str(k): v for k, v in sorted(self.reconstructions.items())},
            "rewards": list(self.stats.rewards),
            "advantages": list(self.stats.advantages),
        }


def traces_to_json(traces: Sequence[RolloutTrace]) -> str:
    """Canonical serialization used for determinism checks."""
    return json.dumps([t.to_dict() for t in traces], sort_keys=True, indent=2)


class SandboxRenderer:
    """Default renderer: compile in the sandbox, rasterize on success."""

    def __init__(self, sandbox: Sandbox, timeout: float = 20.0, dpi: int = 300):
        self._sandbox = sandbox
        self._timeout = timeout
        self._dpi = dpi

    def __call__(self, code: str) -> tuple[CompileOutcome, Optional[RasterImage]]:
        return self._sandbox.compile_and_render(code, timeout=self._timeout, dpi=self._dpi)


class StubRenderer:
    """In-process renderer on the simulator toolchain's checker and painter.

    Behaves like the stub engine/rasterizer pair (same error messages, same
    pixels) without the per-call subprocess cost; useful for fast hermetic
    loop runs and tests.
    """

    def __init__(self, dpi: int = 120, border_pt: float = 10.0):
        self._dpi = dpi
        self._border = border_pt

    def __call__(self, code: str) -> tuple[CompileOutcome, Optional[RasterImage]]:
        from . import stubtex
        from .raster import from_array

        try:
            ctx = stubtex._check_document(code)
        except stubtex.StubTexError as err:
            return CompileOutcome(STATUS_COMPILE_ERROR, 0.0, str(err)), None
        ops = stubtex._parse_picture(ctx["text"])
        spec = stubtex.extract_spec(stubtex.emit_pdf(ops, ctx["border"]))
        pixels = stubtex.render_spec(spec, self._dpi)
        outcome = CompileOutcome(STATUS_SUCCESS, 0.0, "", pdf_ref=None)
        return outcome, from_array(pixels, dpi=float(self._dpi))


# --------------------------------------------------------------------------
# toy policy


def _grid_template(rows: int, cols: int) -> str:
    lines = []
    for r in range(rows):
        for c in range(cols):
            lines.append(f"\\fill ({c},{ -r}) circle (0.12);")
            if c + 1 < cols:
                lines.append(f"\\draw ({c},{ -r}) -- ({c + 1},{ -r});")
            if r + 1 < rows:
                lines.append(f"\\draw ({c},{ -r}) -- ({c},{ -(r + 1)});")
    return "\n".join(lines)


def template_family() -> list[str]:
    """Small parametric family of node grids and simple paths."""
    bodies = [
        _grid_template(2, 2),
        _grid_template(3, 3),
        "\\draw (0,0) -- (2,0) -- (1,1.5) -- cycle;\n\\draw (1,0.5) circle (0.3);",
        "\\draw (0,0) circle (1);\n\\draw (0,0) circle (0.6);\n\\draw (0,0) circle (0.2);",
        "\\draw (0,0) rectangle (2,1.2);\n\\draw (0,0) -- (2,1.2);\n\\draw (0,1.2) -- (2,0);",
        "\\draw (0,0) -- (0.5,1) -- (1,0) -- (1.5,1) -- (2,0) -- (2.5,1);",
    ]
    return [
        wrap_standalone("\\begin{tikzpicture}\n" + body + "\n\\end{tikzpicture}")
        for body in bodies
    ]


_COORD_NUM = re.compile(r"\((-?\d+(?:\.\d+)?),(-?\d+(?:\.\d+)?)\)")


class ToyPolicy:
    """Deterministic-by-seed stand-in for a program-synthesis policy.

    Forward direction: the input image is matched to the nearest template
    render by cosine over fallback embeddings, then n perturbed variants
    of that template are emitted (coordinate jitter, dropped draw
    statements, and syntax faults injected at ``fault_rate``).  The
    back-translation direction is the same lookup, so reconstructions of
    a faithful render land on the right template.
    """

    # per-sample jitter magnitudes; the spread makes some rollouts clear the
    # fidelity gate and others miss it, which is the dynamic worth simulating
    JITTER_LEVELS = (0.02, 0.04, 0.08)
    JITTER_PROB = 0.3
    DROP_PROB = 0.15

    def __init__(self, seed: int, renderer: Renderer, fault_rate: float = 0.0):
        self.seed = seed
        self.fault_rate = fault_rate
        self._calls = 0
        self._library: list[tuple[str, object]] = []
        for code in template_family():
            outcome, image = renderer(code)
            if outcome.ok and image is not None:
                self._library.append((code, fallback_embedding(image)))
        if not self._library:
            raise BackendError("toy policy could not render its template library")

    def _nearest(self, image: RasterImage) -> str:
        probe = fallback_embedding(image)
        best_code, best_sim = self._library[0][0], -2.0
        for code, emb in self._library:
            try:
                sim = cosine(probe, emb)
            except Exception:  # zero embedding: keep scanning
                continue
            if sim > best_sim:
                best_code, best_sim = code, sim
        return best_code

    def sample(self, image: RasterImage, n: int) -> list[str]:
        self._calls += 1
        rng = random.Random(self.seed * 1_000_003 + self._calls)
        base = self._nearest(image)
        return [self._perturb(base, rng) for _ in range(n)]

    def _perturb(self, code: str, rng: random.Random) -> str:
        magnitude = rng.choice(self.JITTER_LEVELS)

        def jitter_coord(m: re.Match) -> str:
            if rng.random() >= self.JITTER_PROB:
                return m.group(0)
            dx = rng.choice((-1, 1)) * magnitude
            dy = rng.choice((-1, 1)) * magnitude
            return f"({float(m.group(1)) + dx:g},{float(m.group(2)) + dy:g})"

        out = _COORD_NUM.sub(jitter_coord, code)
        lines = out.split("\n")
        draw_idx = [i for i, ln in enumerate(lines) if ln.lstrip().startswith("\\draw")]
        if len(draw_idx) > 2 and rng.random() < self.DROP_PROB:
            del lines[rng.choice(draw_idx)]
        out = "\n".join(lines)
        if rng.random() < self.fault_rate:
            out = out.replace(
                "\\begin{tikzpicture}", "\\begin{tikzpicture}\n\\synfault", 1
            )
        return out


class RemotePolicy:
    """Policy served over the backend wire protocol."""

    def __init__(self, hub: BackendHub, sampling: PolicySampling | None = None):
        self._hub = hub
        self._sampling = sampling or PolicySampling()

    def sample(self, image: RasterImage, n: int) -> list[str]:
        return self._hub.policy_sample(image, n, self._sampling)


def toy_policy(seed: int, renderer: Renderer, fault_rate: float = 0.0) -> ToyPolicy:
    return ToyPolicy(seed, renderer, fault_rate=fault_rate)


# --------------------------------------------------------------------------
# the loop


@dataclass
class DscSimulator:
    renderer: Renderer
    hub: BackendHub
    reward_cfg: RewardConfig
    grpo: GrpoSettings = field(default_factory=GrpoSettings)
    trivial: Optional[TrivialNgramSet] = None
    background_threshold: float = 0.99

    @classmethod
    def from_config(cls, config: Config, renderer: Renderer, hub: BackendHub) -> "DscSimulator":
        return cls(
            renderer=renderer,
            hub=hub,
            reward_cfg=RewardConfig.stage2(config),
            grpo=config.grpo,
            background_threshold=config.background_threshold,
        )

    def __post_init__(self):
        if self.trivial is None:
            # mine boilerplate from the toy template family itself
            streams = [lex_normalized(code) for code in template_family()]
            self.trivial = mine_trivial_ngrams(streams, k=50, max_order=4, corpus_id="toy-templates")

    def run_iteration(
        self, images: Sequence[tuple[str, RasterImage]], policy: PolicyHandle
    ) -> list[RolloutTrace]:
        """One Algorithm-style iteration over a batch of reference images."""
        if self.grpo.group_size < 2:
            raise GroupTooSmall("group size must be at least 2")
        return [self._trace(image_id, image, policy) for image_id, image in images]

    def _trace(self, image_id: str, image: RasterImage, policy: PolicyHandle) -> RolloutTrace:
        cfg = self.reward_cfg
        group = self.grpo.group_size
        try:
            codes = list(policy.sample(image, group))
        except BackendError:
            codes = [""] * group  # the whole group is failure-rewarded
        statuses: list[str] = []
        breakdowns: list[RewardBreakdown] = []
        reconstructions: dict[int, str] = {}

        for idx, code in enumerate(codes):
            if not code:
                statuses.append(STATUS_COMPILE_ERROR)
                breakdowns.append(stage2_total(_SCORING_FAILURE, None, None, cfg))
                continue
            outcome, render = self.renderer(code)
            statuses.append(outcome.status)
            if not outcome.ok or render is None:
                breakdowns.append(stage2_total(outcome, None, None, cfg))
                continue
            scores = visual_scores(
                image, render, self.hub,
                tau_hold=cfg.tau_hold, tau_temp=cfg.tau_temp,
                background_threshold=self.background_threshold,
            )
            if scores is None:  # blank canvas: no reward for trivial output
                breakdowns.append(stage2_total(_SCORING_FAILURE, None, None, cfg))
                continue
            probe = stage2_total(outcome, scores, None, cfg)
            if not probe.gate_open:
                breakdowns.append(probe)
                continue
            try:
                recon = policy.sample(render, 1)[0]
            except BackendError:
                breakdowns.append(probe)  # stays pending
                continue
            reconstructions[idx] = recon
            code_scores = code_consistency(
                code, recon, self.trivial, gamma=cfg.gamma, tau_ted=cfg.tau_ted
            )
            breakdowns.append(stage2_total(outcome, scores, code_scores, cfg))

        stats = group_advantages([b.total for b in breakdowns], self.grpo)
        return RolloutTrace(
            image_id=image_id,
            codes=tuple(codes),
            statuses=tuple(statuses),
            breakdowns=tuple(breakdowns),
            reconstructions=reconstructions,
            stats=stats,
        )


def loop_report(traces: Sequence[RolloutTrace]) -> dict:
    """Aggregate a trace set: compile rate, mean visual reward, gate entry."""
    if not traces:
        raise ValueError("cannot summarize zero traces")
    total = 0
    compiled = 0
    gate_open = 0
    vis_values: list[float] = []
    code_values: list[float] = []
    for trace in traces:
        for status, breakdown in zip(trace.statuses, trace.breakdowns):
            total += 1
            if status == "success":
                compiled += 1
                vis_values.append(breakdown.r_vis)
            if breakdown.gate_open:
                gate_open += 1
            if breakdown.s_code is not None:
                code_values.append(breakdown.s_code)
    return {
        "rollouts": total,
        "compile_rate": compiled / total,
        "mean_r_vis": sum(vis_values) / len(vis_values) if vis_values else 0.0,
        "gate_entry_rate": gate_open / total,
        "mean_s_code": sum(code_values) / len(code_values) if code_values else 0.0,
    }


def format_report(report: dict) -> str:
    rows = [
        ("rollouts", f"{report['rollouts']}"),
        ("compile rate", f"{report['compile_rate']:.3f}"),
        ("mean r_vis", f"{report['mean_r_vis']:.3f}"),
        ("gate entry rate", f"{report['gate_entry_rate']:.3f}"),
        ("mean s_code", f"{report['mean_s_code']:.3f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
