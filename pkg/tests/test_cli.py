import json

import pytest

from tikzrig.cli import main
from tikzrig.dataengine import SampleRecord, save_corpus

from conftest import MINICORPUS, standalone_doc

GOOD = standalone_doc("\\draw (0,0) -- (2,1);")
BAD = standalone_doc("\\bogusmacro")


@pytest.fixture()
def stub_cfg_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"sandbox": {"engine": "stub", "rasterizer": "stub"}}))
    return str(path)


def run(args, cfg, tmp_path):
    return main(["--config", cfg, "--out", str(tmp_path / "out")] + args)


class TestCompileCommand:
    def test_success_exit_zero(self, stub_cfg_path, tmp_path, capsys):
        tex = tmp_path / "ok.tex"
        tex.write_text(GOOD)
        assert run(["compile", str(tex)], stub_cfg_path, tmp_path) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["status"] == "success"

    def test_failure_exit_one(self, stub_cfg_path, tmp_path, capsys):
        tex = tmp_path / "bad.tex"
        tex.write_text(BAD)
        assert run(["compile", str(tex)], stub_cfg_path, tmp_path) == 1
        assert json.loads(capsys.readouterr().out)["status"] == "compile-error"

    def test_missing_toolchain_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"sandbox": {"engine": "no-such-binary-zzz"}}))
        tex = tmp_path / "ok.tex"
        tex.write_text(GOOD)
        code = main(["--config", str(cfg), "--out", str(tmp_path / "o"), "compile", str(tex)])
        assert code == 2
        assert "tikzrig:" in capsys.readouterr().err


class TestRenderCommand:
    def test_png_written(self, stub_cfg_path, tmp_path, capsys):
        tex = tmp_path / "pic.tex"
        tex.write_text(GOOD)
        assert run(["render", str(tex), "--dpi", "100"], stub_cfg_path, tmp_path) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["png"].endswith("pic.png")
        assert (tmp_path / "out" / "pic.png").exists()


class TestScoreCommand:
    def test_identical_files(self, stub_cfg_path, tmp_path, capsys):
        a = tmp_path / "a.tex"
        b = tmp_path / "b.tex"
        a.write_text(GOOD)
        b.write_text(GOOD)
        assert run(["score", "--pred", str(a), "--ref", str(b)], stub_cfg_path, tmp_path) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["s_ted"] == pytest.approx(1.0)
        assert result["ssim"] == pytest.approx(1.0, abs=1e-9)

    def test_failing_prediction_exit_one(self, stub_cfg_path, tmp_path, capsys):
        a = tmp_path / "a.tex"
        b = tmp_path / "b.tex"
        a.write_text(BAD)
        b.write_text(GOOD)
        assert run(["score", "--pred", str(a), "--ref", str(b)], stub_cfg_path, tmp_path) == 1


class TestCurateCommand:
    def test_minicorpus_manifest_written(self, stub_cfg_path, tmp_path, capsys):
        code = run(["curate", str(MINICORPUS)], stub_cfg_path, tmp_path)
        assert code == 0
        assert (tmp_path / "out" / "manifest.json").exists()
        assert (tmp_path / "out" / "curated.jsonl").exists()
        summary = json.loads(capsys.readouterr().out)
        assert summary["reject_reasons"]["near-duplicate"] == 1


class TestDedupCommand:
    def test_reports_retained(self, stub_cfg_path, tmp_path, capsys):
        long_doc = standalone_doc(
            "\n".join(f"\\draw ({i},0) -- ({i},1);" for i in range(8))
        )
        corpus = tmp_path / "corpus.jsonl"
        save_corpus(
            [SampleRecord(id="a", code=long_doc), SampleRecord(id="b", code=long_doc)],
            corpus,
        )
        assert run(["dedup", str(corpus)], stub_cfg_path, tmp_path) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["retained"] == ["a"]
        assert result["removed"][0]["id"] == "b"


class TestRewardCommand:
    def test_stage1_breakdown(self, stub_cfg_path, tmp_path, capsys):
        code = run(
            ["reward", "--stage", "1", "--status", "success",
             "--s-sem", "0.5", "--s-struct", "0.5"],
            stub_cfg_path, tmp_path,
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        assert result["total"] == pytest.approx(0.1 + 0.5)

    def test_stage2_gated(self, stub_cfg_path, tmp_path, capsys):
        code = run(
            ["reward", "--stage", "2", "--status", "success",
             "--s-sem", "0.9", "--s-struct", "0.9", "--s-code", "0.8"],
            stub_cfg_path, tmp_path,
        )
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        assert result["gate_open"] is True
        assert result["total"] == pytest.approx(0.05 + 0.8 * 0.9 + 0.15 * 0.8)


class TestSimCommand:
    def test_dsc_sim_writes_traces(self, stub_cfg_path, tmp_path, capsys):
        code = main([
            "--config", stub_cfg_path, "--out", str(tmp_path / "out"),
            "--seed", "3", "dsc-sim", "--images", "2",
        ])
        assert code == 0
        traces = json.loads((tmp_path / "out" / "traces.json").read_text())
        assert len(traces) == 2
        report = json.loads((tmp_path / "out" / "loop_report.json").read_text())
        assert report["compile_rate"] == 1.0


class TestEvalCommand:
    def test_eval_roundtrip(self, stub_cfg_path, tmp_path, capsys):
        refs = tmp_path / "refs.jsonl"
        preds = tmp_path / "preds.jsonl"
        save_corpus([SampleRecord(id="a", code=GOOD)], refs)
        save_corpus([SampleRecord(id="a", code=GOOD)], preds)
        code = run(["eval", "--pred", str(preds), "--ref", str(refs)], stub_cfg_path, tmp_path)
        assert code == 0
        report = json.loads((tmp_path / "out" / "eval_report.json").read_text())
        assert report["records"][0]["ssim"] == pytest.approx(1.0, abs=1e-9)


class TestMineNgramsCommand:
    def test_sidecar_written(self, stub_cfg_path, tmp_path, capsys):
        code = run(["mine-ngrams", str(MINICORPUS), "--k", "25"], stub_cfg_path, tmp_path)
        assert code == 0
        sidecar = json.loads((tmp_path / "out" / "trivial_ngrams.json").read_text())
        assert sidecar["k"] == 25
        assert len(sidecar["entries"]) == 25


class TestBackendsFlag:
    def test_backends_file_accepted(self, stub_cfg_path, tmp_path, capsys):
        backends = tmp_path / "backends.json"
        backends.write_text(json.dumps({"embed": {"transport": "builtin"}}))
        a = tmp_path / "a.tex"
        a.write_text(GOOD)
        code = main([
            "--config", stub_cfg_path, "--backends", str(backends),
            "--out", str(tmp_path / "out"), "score", "--pred", str(a), "--ref", str(a),
        ])
        assert code == 0


class TestUsageErrors:
    def test_unknown_subcommand_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["no-such-command"])
        assert exc.value.code == 2

    def test_missing_required_flag_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["score", "--pred", "only.tex"])
        assert exc.value.code == 2

    def test_bad_config_exit_two(self, tmp_path, capsys):
        cfg = tmp_path / "broken.json"
        cfg.write_text("{not json")
        assert main(["--config", str(cfg), "compile", "x.tex"]) == 2
