"""Command-line interface tying the modules together.

Exit codes: 0 on success, 1 when per-record failures occurred (failed
compiles among otherwise-processed records), 2 on environment, config or
usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataengine, dscloop, evaluate as evalmod
from .backends import BackendHub
from .codemetrics import code_consistency, mine_trivial_ngrams
from .config import Config, default_config, load_config
from .dataengine import load_corpus, manifest_bytes, run_pipeline, save_corpus
from .errors import BackendError, ConfigError, TikzRigError, ToolchainMissing
from .reward import RewardConfig, stage1_total, stage2_total
from .sandbox import (
    STATUS_SUCCESS,
    STATUS_TOOLCHAIN_MISSING,
    CompileOutcome,
    CompileRequest,
    Sandbox,
    wrap_standalone,
)
from .scoring import visual_scores
from .texlex import lex_normalized


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tikzrig",
        description="compile/render sandbox, verifiable rewards, corpus curation and evaluation for TikZ program synthesis",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--backends", metavar="PATH", help="JSON backend endpoint file")
    parser.add_argument("--jobs", type=int, default=0, help="sandbox worker count (0 = cores)")
    parser.add_argument("--seed", type=int, default=0, help="seed for simulator subcommands")
    parser.add_argument("--out", metavar="DIR", default="tikzrig-out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile one .tex file, print the outcome JSON")
    p.add_argument("file")

    p = sub.add_parser("render", help="compile and rasterize one .tex file to PNG")
    p.add_argument("file")
    p.add_argument("--dpi", type=int, default=0)

    p = sub.add_parser("score", help="score a prediction against a reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("curate", help="run the curation pipeline over a corpus")
    p.add_argument("input", help="JSONL corpus or directory of .tex files")

    p = sub.add_parser("dedup", help="n-gram dedup pass over a corpus")
    p.add_argument("input")

    p = sub.add_parser("reward", help="reward breakdown from stored scores")
    p.add_argument("--stage", choices=("1", "2"), default="1")
    p.add_argument("--status", default=STATUS_SUCCESS)
    p.add_argument("--s-sem", type=float, default=0.0)
    p.add_argument("--s-struct", type=float, default=0.0)
    p.add_argument("--s-code", type=float, default=None)

    p = sub.add_parser("dsc-sim", help="run the toy dual self-consistency loop")
    p.add_argument("--images", type=int, default=4)
    p.add_argument("--fault-rate", type=float, default=0.0)

    p = sub.add_parser("eval", help="evaluate a prediction corpus against references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("mine-ngrams", help="mine the trivially-shared n-gram set")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--orders", type=int, default=0)
    return parser


def _load_environment(args) -> tuple[Config, BackendHub]:
    config = load_config(args.config) if args.config else default_config()
    if args.jobs:
        config.sandbox.jobs = args.jobs
    if args.backends:
        hub = BackendHub.from_file(args.backends, cache_dir=config.cache_dir)
    else:
        hub = BackendHub(cache_dir=config.cache_dir)
    return config, hub


def _outcome_dict(outcome: CompileOutcome) -> dict:
    return {
        "status": outcome.status,
        "duration": round(outcome.duration, 3),
        "log_excerpt": outcome.log_excerpt,
        "pdf_ref": str(outcome.pdf_ref) if outcome.pdf_ref else None,
    }


def _read_wrapped(path: str, config: Config) -> str:
    return wrap_standalone(Path(path).read_text(), config.sandbox.standalone_border_pt)


def _cmd_compile(args, config: Config, hub: BackendHub, out: Path) -> int:
    with Sandbox(config.sandbox) as sb:
        outcome = sb.compile(CompileRequest(_read_wrapped(args.file, config), config.sandbox.compile_timeout))
        if outcome.status == STATUS_TOOLCHAIN_MISSING:
            raise ToolchainMissing("no LaTeX engine available")
        print(json.dumps(_outcome_dict(outcome), indent=2))
        return 0 if outcome.ok else 1


def _cmd_render(args, config: Config, hub: BackendHub, out: Path) -> int:
    with Sandbox(config.sandbox) as sb:
        outcome, image = sb.compile_and_render(
            _read_wrapped(args.file, config),
            timeout=config.sandbox.render_timeout,
            dpi=args.dpi or config.sandbox.dpi,
        )
        if outcome.status == STATUS_TOOLCHAIN_MISSING:
            raise ToolchainMissing("no LaTeX engine available")
        if image is None:
            print(json.dumps(_outcome_dict(outcome), indent=2))
            return 1
        png = out / (Path(args.file).stem + ".png")
        image.save(png)
        print(json.dumps({"status": outcome.status, "png": str(png),
                          "width": image.width, "height": image.height}, indent=2))
        return 0


def _cmd_score(args, config: Config, hub: BackendHub, out: Path) -> int:
    pred_code = Path(args.pred).read_text()
    ref_code = Path(args.ref).read_text()
    trivial = mine_trivial_ngrams(
        [lex_normalized(ref_code)], k=config.codemetrics.trivial_k,
        max_order=config.codemetrics.max_order, corpus_id="single-ref",
    )
    stage2 = config.stage2
    scores = code_consistency(ref_code, pred_code, trivial,
                              gamma=stage2.gamma, tau_ted=stage2.tau_ted)
    result = {
        "d_eed": scores.d_eed,
        "s_ted": scores.s_ted,
        "crystal_bleu": scores.crystal_bleu,
        "s_code": scores.s_code,
    }
    failures = False
    with Sandbox(config.sandbox) as sb:
        border = config.sandbox.standalone_border_pt
        ref_out, ref_img = sb.compile_and_render(
            wrap_standalone(ref_code, border), timeout=config.sandbox.render_timeout)
        pred_out, pred_img = sb.compile_and_render(
            wrap_standalone(pred_code, border), timeout=config.sandbox.render_timeout)
        result["ref_status"] = ref_out.status
        result["pred_status"] = pred_out.status
        if ref_img is not None and pred_img is not None:
            vs = visual_scores(ref_img, pred_img, hub,
                               tau_hold=stage2.tau_hold, tau_temp=stage2.tau_temp,
                               background_threshold=config.background_threshold)
            if vs is not None:
                result.update({
                    "cosine_mapped": vs.cosine_mapped, "ssim": vs.ssim,
                    "s_sem": vs.s_sem, "s_struct": vs.s_struct,
                    "d_perceptual": vs.d_perceptual,
                })
            else:
                failures = True
        else:
            failures = True
    print(json.dumps(result, indent=2, sort_keys=True))
    return 1 if failures else 0


def _cmd_curate(args, config: Config, hub: BackendHub, out: Path) -> int:
    records = load_corpus(args.input)
    with Sandbox(config.sandbox) as sb:
        if not sb.toolchain_available:
            raise ToolchainMissing("no LaTeX engine available")
        records, manifest = run_pipeline(records, config, sb, hub)
    save_corpus([r for r in records if r.status != "rejected"], out / "curated.jsonl")
    save_corpus(records, out / "all_records.jsonl")
    (out / "manifest.json").write_bytes(manifest_bytes(manifest))
    print(json.dumps({"manifest": str(out / "manifest.json"),
                      "stages": manifest["stages"],
                      "reject_reasons": manifest["reject_reasons"]}, indent=2))
    return 0


def _cmd_dedup(args, config: Config, hub: BackendHub, out: Path) -> int:
    records = load_corpus(args.input)
    retained, removed = dataengine.dedup(
        records, config.curation.dedup_order, config.curation.dedup_max_shared)
    print(json.dumps({
        "retained": retained,
        "removed": [{"id": rid, "shared": n} for rid, n in removed],
    }, indent=2))
    return 0


def _cmd_reward(args, config: Config, hub: BackendHub, out: Path) -> int:
    from .codemetrics import CodeScores
    from .imgmetrics import VisualScores

    cfg = RewardConfig.stage1(config) if args.stage == "1" else RewardConfig.stage2(config)
    outcome = CompileOutcome(args.status, 0.0, "")
    scores = None
    if args.status == STATUS_SUCCESS:
        scores = VisualScores(s_raw=0.0, s_sem=args.s_sem, s_struct=args.s_struct,
                              ssim=0.0, d_perceptual=0.0)
    if args.stage == "1":
        breakdown = stage1_total(outcome, scores, cfg)
    else:
        code_scores = None
        if args.s_code is not None:
            code_scores = CodeScores(0.0, 0.0, 0.0, args.s_code, cfg.gamma)
        breakdown = stage2_total(outcome, scores, code_scores, cfg)
    print(json.dumps(breakdown.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_dsc_sim(args, config: Config, hub: BackendHub, out: Path) -> int:
    with Sandbox(config.sandbox) as sb:
        if not sb.toolchain_available:
            raise ToolchainMissing("no LaTeX engine available")
        renderer = dscloop.SandboxRenderer(
            sb, timeout=config.sandbox.render_timeout, dpi=config.sandbox.dpi)
        policy = dscloop.toy_policy(args.seed, renderer, fault_rate=args.fault_rate)
        sim = dscloop.DscSimulator.from_config(config, renderer, hub)
        images = []
        for idx, code in enumerate(dscloop.template_family()[: args.images]):
            outcome, image = renderer(code)
            if image is not None:
                images.append((f"img{idx}", image))
        traces = sim.run_iteration(images, policy)
    report = dscloop.loop_report(traces)
    (out / "traces.json").write_text(dscloop.traces_to_json(traces))
    (out / "loop_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(dscloop.format_report(report))
    return 0


def _cmd_eval(args, config: Config, hub: BackendHub, out: Path) -> int:
    preds = load_corpus(args.pred)
    refs = load_corpus(args.ref)
    with Sandbox(config.sandbox) as sb:
        if not sb.toolchain_available:
            raise ToolchainMissing("no LaTeX engine available")
        report = evalmod.evaluate(preds, refs, config, sb, hub)
    (out / "eval_report.json").write_text(report.to_json())
    print(report.to_table())
    return 1 if report.any_failures else 0


def _cmd_mine_ngrams(args, config: Config, hub: BackendHub, out: Path) -> int:
    records = load_corpus(args.input)
    streams = [lex_normalized(r.code, r.id) for r in records]
    trivial = mine_trivial_ngrams(
        streams,
        k=args.k or config.codemetrics.trivial_k,
        max_order=args.orders or config.codemetrics.max_order,
        corpus_id=str(args.input),
    )
    path = out / "trivial_ngrams.json"
    trivial.save(path)
    print(json.dumps({"path": str(path), "entries": len(trivial)}, indent=2))
    return 0


_COMMANDS = {
    "compile": _cmd_compile,
    "render": _cmd_render,
    "score": _cmd_score,
    "curate": _cmd_curate,
    "dedup": _cmd_dedup,
    "reward": _cmd_reward,
    "dsc-sim": _cmd_dsc_sim,
    "eval": _cmd_eval,
    "mine-ngrams": _cmd_mine_ngrams,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config, hub = _load_environment(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with hub:
            return _COMMANDS[args.command](args, config, hub, out)
    except (ConfigError, ToolchainMissing, BackendError) as exc:
        print(f"tikzrig: {exc}", file=sys.stderr)
        return 2
    except TikzRigError as exc:
        print(f"tikzrig: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"tikzrig: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
