"""Execution-centric corpus curation.

Raw snippets flow through a fixed stage order: standalone wrapping,
compile validation, log-driven remediation of failures, heuristic
sanitization (length/aspect/dependency filters), n-gram deduplication,
and finally judge scoring behind the multi-criteria quality gate.  Every
record ends the run with a status and, if rejected, exactly one primary
reason; the manifest of a run is a pure function of inputs and config.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .backends import BackendHub, JudgeScores
from .config import Config, CurationSettings
from .errors import (
    BackendError,
    NoDrawableContent,
    PreScreenFailed,
    RepairUnavailable,
)
from .sandbox import (
    STATUS_SUCCESS,
    CompileOutcome,
    CompileRequest,
    Sandbox,
    pdf_page_size,
    wrap_standalone,
)
from .texlex import lex_normalized, scan_dependencies, shingles, token_count

SCHEMA = "scitikz/1"

STATUS_ORDER = (
    "raw", "wrapped", "compiled", "repaired", "sanitized", "judged", "accepted", "rejected"
)

# stable rejection enumerants
REASON_NO_CONTENT = "no-drawable-content"
REASON_REMEDIATION = "remediation-exhausted"
REASON_REPAIR_UNAVAILABLE = "repair-unavailable"
REASON_OVERLONG = "overlong"
REASON_ASPECT = "aspect-ratio"
REASON_DEPENDENCY = "external-dependency"
REASON_DUPLICATE = "near-duplicate"
REASON_JUDGE = "judge-error"
REASON_GATE = "quality-gate"


@dataclass
class SampleRecord:
    id: str
    code: str
    source: str = ""
    image_ref: Optional[str] = None
    token_count: int = 0
    aspect_ratio: float = 0.0
    judge: Optional[JudgeScores] = None
    status: str = "raw"
    reject_reason: Optional[str] = None
    audit: list = field(default_factory=list)

    def reject(self, reason: str) -> None:
        self.status = "rejected"
        if self.reject_reason is None:  # first reason is the primary one
            self.reject_reason = reason

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA,
            "id": self.id,
            "source": self.source,
            "code": self.code,
            "image_ref": self.image_ref,
            "token_count": self.token_count,
            "aspect_ratio": self.aspect_ratio,
            "judge": self.judge.to_dict() if self.judge else None,
            "status": self.status,
            "reject_reason": self.reject_reason,
        }
        if self.audit:
            out["audit"] = self.audit
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SampleRecord":
        judge = None
        if data.get("judge"):
            scores = {k: v for k, v in data["judge"].items() if k != "total_score"}
            judge = JudgeScores(**scores)
        return cls(
            id=str(data["id"]),
            code=data["code"],
            source=data.get("source", ""),
            image_ref=data.get("image_ref"),
            token_count=int(data.get("token_count", 0)),
            aspect_ratio=float(data.get("aspect_ratio", 0.0)),
            judge=judge,
            status=data.get("status", "raw"),
            reject_reason=data.get("reject_reason"),
            audit=data.get("audit", []),
        )


def load_corpus(path) -> list[SampleRecord]:
    """Read a corpus from a JSONL file or a directory of .tex files."""
    path = Path(path)
    if path.is_dir():
        records = []
        for tex in sorted(path.glob("*.tex")):
            records.append(SampleRecord(id=tex.stem, code=tex.read_text(), source=str(tex)))
        return records
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_dict(json.loads(line)))
    return records


def save_corpus(records: Iterable[SampleRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# filters and gates


@dataclass(frozen=True)
class GateThresholds:
    """Judge-score gate: total floor, strict correctness floor, per-dimension floor."""

    total_min: int = 18
    correctness_floor: int = 2   # correctness must be strictly greater
    min_other: int = 2           # every remaining dimension at least this

    @classmethod
    def from_settings(cls, cur: CurationSettings) -> "GateThresholds":
        return cls(cur.gate_total_min, cur.gate_correctness_floor, cur.gate_min_other)


def quality_gate(scores: JudgeScores, thr: GateThresholds) -> bool:
    others = min(
        scores.layout_precision,
        scores.readability,
        scores.scientific_plausibility,
        scores.visual_complexity,
    )
    return (
        scores.total >= thr.total_min
        and scores.correctness > thr.correctness_floor
        and others >= thr.min_other
    )


def heuristic_sanitize(
    rec: SampleRecord, limits: CurationSettings
) -> tuple[bool, Optional[str]]:
    """Coarse filters: over-long code, extreme aspect ratios, external files."""
    if rec.token_count >= limits.max_tokens:
        return False, REASON_OVERLONG
    if rec.aspect_ratio > 0 and not (
        1.0 / limits.max_aspect <= rec.aspect_ratio <= limits.max_aspect
    ):
        return False, REASON_ASPECT
    if scan_dependencies(rec.code, limits.exclusion_list):
        return False, REASON_DEPENDENCY
    return True, None


def dedup(
    corpus: Iterable[SampleRecord],
    order: int = 50,
    max_shared: int = 5,
) -> tuple[list[str], list[tuple[str, int]]]:
    """Streaming n-gram dedup in input order.

    A record is dropped when its shingle set shares strictly more than
    ``max_shared`` fingerprints with the union index of already-retained
    records; the first occurrence of any content is therefore always kept.
    Returns (retained ids, [(removed id, shared count), ...]).
    """
    index: set[int] = set()
    retained: list[str] = []
    removed: list[tuple[str, int]] = []
    for rec in corpus:
        sh = shingles(lex_normalized(rec.code), order)
        shared = len(sh & index)
        if shared > max_shared:
            removed.append((rec.id, shared))
        else:
            retained.append(rec.id)
            index |= sh
    return retained, removed


# --------------------------------------------------------------------------
# builtin repair rules

_LAYER_ERROR = re.compile(r"layer '([^']+)' could not be found")
_STY_ERROR = re.compile(r"File `([^']+)\.sty' not found")
_ENV_ERROR = re.compile(r"Environment ([A-Za-z*]+) undefined")

# packages that are cosmetic enough to drop when missing
SAFE_TO_DROP_PACKAGES = frozenset({
    "microtype", "lmodern", "fontspec", "enumitem", "fontawesome",
    "subfigure", "epsfig", "mathrsfs", "fullpage",
})

# environments provided by known tikz libraries / companion packages
ENVIRONMENT_PROVIDERS = {
    "pgfonlayer": "\\usetikzlibrary{backgrounds}",
    "scope": "\\usepackage{tikz}",
    "axis": "\\usepackage{pgfplots}",
    "tikzcd": "\\usepackage{tikz-cd}",
}


def _insert_preamble(code: str, lines: list[str]) -> str:
    missing = [ln for ln in lines if ln not in code]
    if not missing:
        return code
    block = "\n".join(missing)
    marker = "\\begin{document}"
    if marker in code:
        return code.replace(marker, block + "\n" + marker, 1)
    return block + "\n" + code


def builtin_repair_rules(code: str, log_excerpt: str) -> Optional[str]:
    """Ordered log-pattern rule table; first matching rule applies once.

    Rules are idempotent: when the needed fix is already present the code
    comes back unchanged.  Returns None when no rule matches.
    """
    m = _LAYER_ERROR.search(log_excerpt)
    if m:
        layer = m.group(1)
        lines = ["\\usetikzlibrary{backgrounds}"] if layer == "background" else []
        lines += [f"\\pgfdeclarelayer{{{layer}}}", f"\\pgfsetlayers{{{layer},main}}"]
        return _insert_preamble(code, lines)

    m = _STY_ERROR.search(log_excerpt)
    if m:
        pkg = m.group(1)
        if pkg not in SAFE_TO_DROP_PACKAGES:
            return None
        pattern = re.compile(
            r"^[ \t]*\\usepackage(\[[^\]]*\])?\{[^}]*\b" + re.escape(pkg) + r"\b[^}]*\}[ \t]*\n?",
            re.MULTILINE,
        )
        return pattern.sub("", code)

    m = _ENV_ERROR.search(log_excerpt)
    if m:
        provider = ENVIRONMENT_PROVIDERS.get(m.group(1))
        if provider is None:
            return None
        return _insert_preamble(code, [provider])

    return None


# --------------------------------------------------------------------------
# remediation


def remediation_loop(
    rec: SampleRecord,
    agent: BackendHub,
    sandbox: Sandbox,
    first_outcome: CompileOutcome,
    max_iters: int = 3,
    timeout: float = 10.0,
) -> SampleRecord:
    """Iterate (log excerpt -> repair -> wrap -> compile) until success.

    Each round's code and outcome land in the record's audit trail.  The
    record is rejected after max_iters rounds or as soon as no repair is
    available.
    """
    if first_outcome.status == STATUS_SUCCESS:
        rec.audit.append({"event": "remediation-noop", "note": "record already compiles"})
        return rec
    code = rec.code
    excerpt = first_outcome.log_excerpt
    for round_no in range(1, max_iters + 1):
        try:
            candidate = agent.repair(code, excerpt)
        except RepairUnavailable:
            rec.audit.append({"event": "repair-unavailable", "round": round_no})
            rec.reject(REASON_REPAIR_UNAVAILABLE)
            return rec
        try:
            candidate = wrap_standalone(candidate)
        except NoDrawableContent:
            pass  # let the compiler speak for itself
        outcome = sandbox.compile(CompileRequest(candidate, timeout))
        rec.audit.append({
            "event": "repair-attempt",
            "round": round_no,
            "status": outcome.status,
            "code": candidate,
            "log_excerpt": outcome.log_excerpt,
        })
        if outcome.status == STATUS_SUCCESS:
            rec.code = candidate
            rec.status = "repaired"
            return rec
        code = candidate
        excerpt = outcome.log_excerpt
    rec.reject(REASON_REMEDIATION)
    return rec


# --------------------------------------------------------------------------
# benchmark stratification

TIER_EASY = "easy"
TIER_MEDIUM = "medium"
TIER_HARD = "hard"


def stratify_benchmark(scores: JudgeScores) -> str:
    """Difficulty tier for a benchmark-qualifying record.

    Pre-screen: at least 4 in every dimension except visual complexity,
    which must be at least 1.  Tiers band on visual complexity.
    """
    core = (
        scores.correctness,
        scores.layout_precision,
        scores.readability,
        scores.scientific_plausibility,
    )
    if min(core) < 4 or scores.visual_complexity < 1:
        raise PreScreenFailed(f"scores {scores.to_dict()} fail the benchmark pre-screen")
    if scores.visual_complexity <= 2:
        return TIER_EASY
    if scores.visual_complexity == 3:
        return TIER_MEDIUM
    return TIER_HARD


# --------------------------------------------------------------------------
# the pipeline


def run_pipeline(
    records: list[SampleRecord],
    config: Config,
    sandbox: Sandbox,
    hub: BackendHub,
) -> tuple[list[SampleRecord], dict]:
    """Run the full curation pipeline; returns (records, manifest).

    Per-record failures are recorded and never abort the run.  Reruns
    with identical inputs and config produce a byte-identical manifest.
    """
    cur = config.curation
    stage_counts: dict[str, dict[str, int]] = {}

    def settle(stage: str, population: list[SampleRecord]) -> list[SampleRecord]:
        kept = [r for r in population if r.status != "rejected"]
        stage_counts[stage] = {
            "in": len(population),
            "passed": len(kept),
            "rejected": len(population) - len(kept),
        }
        return kept

    live = list(records)

    # 1. standalone wrapping
    population = live
    for rec in population:
        try:
            rec.code = wrap_standalone(rec.code, config.sandbox.standalone_border_pt)
            rec.status = "wrapped"
        except NoDrawableContent:
            rec.reject(REASON_NO_CONTENT)
    live = settle("wrap", population)

    # 2. strict runtime validation
    reqs = [CompileRequest(r.code, config.sandbox.compile_timeout, job_id=r.id) for r in live]
    outcomes = sandbox.compile_many(reqs)
    needs_repair: list[tuple[SampleRecord, CompileOutcome]] = []
    for rec, outcome in zip(live, outcomes):
        if outcome.status == STATUS_SUCCESS:
            rec.status = "compiled"
            rec.aspect_ratio = _aspect_from_pdf(outcome)
        else:
            needs_repair.append((rec, outcome))
    stage_counts["validate"] = {
        "in": len(live),
        "passed": len(live) - len(needs_repair),
        "rejected": 0,  # failures continue to remediation
    }

    # 3. diagnostic remediation
    population = [r for r, _ in needs_repair]
    for rec, outcome in needs_repair:
        remediation_loop(
            rec, hub, sandbox, outcome,
            max_iters=cur.max_repair_iters, timeout=config.sandbox.compile_timeout,
        )
        if rec.status == "repaired":
            final = sandbox.compile(CompileRequest(rec.code, config.sandbox.compile_timeout))
            if final.status == STATUS_SUCCESS:
                rec.aspect_ratio = _aspect_from_pdf(final)
    settle("remediate", population)
    live = [r for r in live if r.status != "rejected"]

    # 4. heuristic sanitization
    population = live
    for rec in population:
        rec.token_count = token_count(rec.code)
        keep, reason = heuristic_sanitize(rec, cur)
        if keep:
            rec.status = "sanitized"
        else:
            rec.reject(reason)
    live = settle("sanitize", population)

    # 5. dedup (order-dependent by definition; sequential)
    population = live
    retained, removed = dedup(population, cur.dedup_order, cur.dedup_max_shared)
    removed_ids = {rid for rid, _ in removed}
    for rec in population:
        if rec.id in removed_ids:
            rec.reject(REASON_DUPLICATE)
    live = settle("dedup", population)

    # 6+7. judge scoring and the quality gate (skipped without a judge endpoint)
    if hub.judge_configured:
        population = live
        thresholds = GateThresholds.from_settings(cur)
        for rec in population:
            try:
                image = _render_for_judge(rec, sandbox, config)
                rec.judge = hub.judge(image, rec.code)
                rec.status = "judged"
            except Exception as exc:  # noqa: BLE001 - judge failures reject, never abort
                rec.audit.append({"event": "judge-error", "error": str(exc)[:200]})
                rec.reject(REASON_JUDGE)
                continue
            if quality_gate(rec.judge, thresholds):
                rec.status = "accepted"
            else:
                rec.reject(REASON_GATE)
        live = settle("judge", population)

    manifest = _build_manifest(records, stage_counts, config, sandbox, hub)
    return records, manifest


def _aspect_from_pdf(outcome: CompileOutcome) -> float:
    try:
        w, h = pdf_page_size(Path(outcome.pdf_ref).read_bytes())
        return w / h if h > 0 else 0.0
    except Exception:  # noqa: BLE001 - aspect stays unknown
        return 0.0


def _render_for_judge(rec: SampleRecord, sandbox: Sandbox, config: Config):
    outcome = sandbox.compile(CompileRequest(rec.code, config.sandbox.compile_timeout))
    if outcome.status != STATUS_SUCCESS:
        raise BackendError(f"record {rec.id} no longer compiles for judging")
    return sandbox.rasterize(outcome.pdf_ref, dpi=config.sandbox.dpi)


def _build_manifest(records, stage_counts, config, sandbox, hub) -> dict:
    reasons: dict[str, int] = {}
    for rec in records:
        if rec.reject_reason:
            reasons[rec.reject_reason] = reasons.get(rec.reject_reason, 0) + 1
    return {
        "schema": SCHEMA,
        "config_hash": config.hash(),
        "engine": sandbox.engine_id,
        "rasterizer": sandbox.rasterizer_id,
        "backends": hub.identities(),
        "input_count": len(records),
        "stages": stage_counts,
        "reject_reasons": dict(sorted(reasons.items())),
        "records": [
            {"id": r.id, "status": r.status, "reject_reason": r.reject_reason}
            for r in records
        ],
    }


def manifest_bytes(manifest: dict) -> bytes:
    """Canonical serialized form used for golden comparisons."""
    return (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
