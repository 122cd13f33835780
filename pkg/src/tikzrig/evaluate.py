"""Render-and-compare evaluation harness with ALL/SUCCESS aggregation.

Predictions are compiled and rendered, references resolve through a
code-hash render cache, pairs are trim-and-aligned, and both visual and
code-side metric families are computed.  Two aggregation modes are
reported: ALL scores every record, substituting the maximum penalty for
records that failed to produce an image (0 for similarities, 1 for
distances); SUCCESS averages only over successfully rendered records.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .backends import BackendHub
from .codemetrics import (
    TrivialNgramSet,
    code_consistency,
    count_distinct_ngrams,
    mine_trivial_ngrams,
)
from .config import Config
from .dataengine import SampleRecord
from .errors import RenderFailed
from .raster import RasterImage, load as load_raster
from .sandbox import STATUS_SUCCESS, CompileRequest, Sandbox
from .scoring import visual_scores
from .texlex import lex_normalized

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "tikzrig-eval/1"

SIMILARITY_METRICS = ("cosine_mapped", "ssim", "s_struct")  # ALL-mode penalty 0.0
DISTANCE_METRICS = ("d_perceptual",)                          # ALL-mode penalty 1.0
CODE_METRICS = ("d_eed", "s_ted", "crystal_bleu")             # computed on every pair

ALL = "ALL"
SUCCESS = "SUCCESS"


@dataclass
class EvalRecord:
    id: str
    compile_status: str
    rendered: bool
    cosine_mapped: Optional[float] = None
    ssim: Optional[float] = None
    s_struct: Optional[float] = None
    d_perceptual: Optional[float] = None
    d_eed: float = 0.0
    s_ted: float = 0.0
    crystal_bleu: float = 0.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "compile_status": self.compile_status,
            "rendered": self.rendered,
            "cosine_mapped": self.cosine_mapped,
            "ssim": self.ssim,
            "s_struct": self.s_struct,
            "d_perceptual": self.d_perceptual,
            "d_eed": self.d_eed,
            "s_ted": self.s_ted,
            "crystal_bleu": self.crystal_bleu,
        }


@dataclass
class EvalReport:
    records: list[EvalRecord]
    aggregates: dict
    config_echo: dict
    backends: dict
    metric_backends: dict = field(default_factory=dict)
    excluded_refs: list[str] = field(default_factory=list)
    unmatched: list[str] = field(default_factory=list)

    @property
    def any_failures(self) -> bool:
        return any(not r.rendered for r in self.records)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "aggregates": self.aggregates,
            "records": [r.to_dict() for r in self.records],
            "excluded_refs": self.excluded_refs,
            "unmatched": self.unmatched,
            "backends": self.backends,
            "metric_backends": self.metric_backends,
            "config": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        metrics = list(SIMILARITY_METRICS) + list(DISTANCE_METRICS) + list(CODE_METRICS)
        width = max(len(m) for m in metrics) + 2
        lines = [f"{'metric':<{width}}{ALL:>10}{SUCCESS:>10}"]
        for metric in metrics:
            row = f"{metric:<{width}}"
            for mode in (ALL, SUCCESS):
                value = self.aggregates[mode].get(metric)
                row += f"{value:>10.4f}" if value is not None else f"{'-':>10}"
            lines.append(row)
        lines.append(
            f"records: {len(self.records)}  "
            f"rendered: {sum(1 for r in self.records if r.rendered)}"
        )
        return "\n".join(lines)


def aggregate(records: Sequence[EvalRecord], mode: str) -> dict:
    """Per-metric arithmetic means under one aggregation mode.

    SUCCESS over an empty success set reports every visual metric absent
    (None); code metrics always average over the full record set in ALL
    mode and the rendered subset in SUCCESS mode.
    """
    if mode not in (ALL, SUCCESS):
        raise ValueError(f"unknown aggregation mode: {mode}")
    out: dict[str, Optional[float]] = {}
    pool = list(records) if mode == ALL else [r for r in records if r.rendered]
    for metric in SIMILARITY_METRICS + DISTANCE_METRICS:
        penalty = 0.0 if metric in SIMILARITY_METRICS else 1.0
        values = []
        for rec in pool:
            value = getattr(rec, metric)
            if value is None:
                value = penalty  # only reachable in ALL mode
            values.append(value)
        out[metric] = sum(values) / len(values) if values else None
    for metric in CODE_METRICS:
        values = [getattr(rec, metric) for rec in pool]
        out[metric] = sum(values) / len(values) if values else None
    return out


class _RenderCache:
    """Reference renders keyed by code hash, optionally persisted on disk."""

    def __init__(self, sandbox: Sandbox, config: Config):
        self._sandbox = sandbox
        self._config = config
        self._memory: dict[str, Optional[RasterImage]] = {}
        self._dir = Path(config.cache_dir) / "renders" if config.cache_dir else None
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)

    def render(self, code: str) -> Optional[RasterImage]:
        key = hashlib.sha256(code.encode("utf-8")).hexdigest()
        if key in self._memory:
            return self._memory[key]
        if self._dir is not None:
            png = self._dir / f"{key}-{self._config.sandbox.dpi}.png"
            if png.exists():
                image = load_raster(png, dpi=float(self._config.sandbox.dpi))
                self._memory[key] = image
                return image
        outcome, image = self._sandbox.compile_and_render(
            code, timeout=self._config.sandbox.render_timeout, dpi=self._config.sandbox.dpi
        )
        if image is not None and self._dir is not None:
            image.save(self._dir / f"{key}-{self._config.sandbox.dpi}.png")
        self._memory[key] = image
        return image


def evaluate(
    preds: Sequence[SampleRecord],
    refs: Sequence[SampleRecord],
    config: Config,
    sandbox: Sandbox,
    hub: BackendHub,
    trivial: Optional[TrivialNgramSet] = None,
) -> EvalReport:
    """Score a prediction corpus against a reference corpus, matching by id."""
    ref_by_id = {r.id: r for r in refs}
    matched = [p for p in preds if p.id in ref_by_id]
    unmatched = sorted(p.id for p in preds if p.id not in ref_by_id)
    if unmatched:
        logger.warning("%d predictions lack a reference and are skipped", len(unmatched))

    if trivial is None:
        streams = [lex_normalized(r.code, r.id) for r in refs]
        trivial = mine_trivial_ngrams(
            streams, k=config.codemetrics.trivial_k,
            max_order=config.codemetrics.max_order, corpus_id="reference-corpus",
        )
        distinct = count_distinct_ngrams(streams, config.codemetrics.max_order)
        if len(trivial) * 2 > distinct:
            logger.warning(
                "trivial n-gram mask covers %d of %d distinct corpus n-grams; "
                "CrystalBLEU loses meaning on so small a corpus - pass a mask "
                "mined from a real training corpus instead",
                len(trivial), distinct,
            )

    cache = _RenderCache(sandbox, config)
    records: list[EvalRecord] = []
    excluded: list[str] = []
    stage2 = config.stage2

    for pred in matched:
        ref = ref_by_id[pred.id]
        ref_image = cache.render(ref.code)
        if ref_image is None:
            excluded.append(pred.id)
            logger.warning("reference %s fails to render; excluded", pred.id)
            continue

        code_scores = code_consistency(
            ref.code, pred.code, trivial,
            gamma=stage2.gamma, tau_ted=stage2.tau_ted,
        )
        record = EvalRecord(
            id=pred.id,
            compile_status="",
            rendered=False,
            d_eed=code_scores.d_eed,
            s_ted=code_scores.s_ted,
            crystal_bleu=code_scores.crystal_bleu,
        )

        outcome = sandbox.compile(CompileRequest(pred.code, config.sandbox.render_timeout))
        record.compile_status = outcome.status
        if outcome.status == STATUS_SUCCESS:
            try:
                pred_image = sandbox.rasterize(outcome.pdf_ref, dpi=config.sandbox.dpi)
            except RenderFailed:
                pred_image = None
            scores = None
            if pred_image is not None:
                scores = visual_scores(
                    ref_image, pred_image, hub,
                    tau_hold=stage2.tau_hold, tau_temp=stage2.tau_temp,
                    background_threshold=config.background_threshold,
                )
            if scores is not None:
                record.rendered = True
                record.cosine_mapped = scores.cosine_mapped
                record.ssim = scores.ssim
                record.s_struct = scores.s_struct
                record.d_perceptual = scores.d_perceptual
        records.append(record)

    aggregates = {ALL: aggregate(records, ALL), SUCCESS: aggregate(records, SUCCESS)}
    identities = hub.identities()
    return EvalReport(
        records=records,
        aggregates=aggregates,
        config_echo=config.to_dict(),
        backends=identities,
        metric_backends={
            "cosine_mapped": identities["embed"],
            "d_perceptual": identities["perceptual"],
            "s_struct": identities["perceptual"],
            "ssim": "builtin",
        },
        excluded_refs=excluded,
        unmatched=unmatched,
    )
