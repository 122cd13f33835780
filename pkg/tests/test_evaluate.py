import random

import pytest

from tikzrig.codemetrics import mine_trivial_ngrams
from tikzrig.dataengine import SampleRecord
from tikzrig.evaluate import ALL, SUCCESS, EvalRecord, aggregate, evaluate
from tikzrig.texlex import lex_normalized

from conftest import standalone_doc

# mask mined from shared boilerplate only, standing in for a training corpus
TRIVIAL = mine_trivial_ngrams(
    [lex_normalized(standalone_doc("")), lex_normalized(standalone_doc(""))], k=40
)


def rec(rid, body):
    return SampleRecord(id=rid, code=standalone_doc(body))


def erec(rid, rendered, sim=1.0, dist=0.0, **kw):
    return EvalRecord(
        id=rid,
        compile_status="success" if rendered else "compile-error",
        rendered=rendered,
        cosine_mapped=sim if rendered else None,
        ssim=sim if rendered else None,
        s_struct=sim if rendered else None,
        d_perceptual=dist if rendered else None,
        d_eed=kw.get("d_eed", 0.0),
        s_ted=kw.get("s_ted", 1.0),
        crystal_bleu=kw.get("crystal_bleu", 1.0),
    )


class TestAggregate:
    def test_modes_coincide_when_all_succeed(self):
        records = [erec("a", True, sim=0.8), erec("b", True, sim=0.6)]
        assert aggregate(records, ALL) == aggregate(records, SUCCESS)

    def test_penalty_arithmetic(self):
        records = [erec("ok", True, sim=1.0, dist=0.0), erec("bad", False)]
        all_mode = aggregate(records, ALL)
        success_mode = aggregate(records, SUCCESS)
        assert all_mode["ssim"] == pytest.approx(0.5)
        assert success_mode["ssim"] == pytest.approx(1.0)
        assert all_mode["d_perceptual"] == pytest.approx(0.5)
        assert success_mode["d_perceptual"] == pytest.approx(0.0)

    def test_zero_successes(self):
        records = [erec("x", False), erec("y", False)]
        success_mode = aggregate(records, SUCCESS)
        assert success_mode["ssim"] is None
        all_mode = aggregate(records, ALL)
        assert all_mode["ssim"] == 0.0
        assert all_mode["d_perceptual"] == 1.0

    def test_penalties_only_hurt_ordering(self):
        rng = random.Random(8)
        for _ in range(200):
            records = []
            for i in range(rng.randint(1, 12)):
                rendered = rng.random() < 0.7
                records.append(
                    erec(f"r{i}", rendered, sim=rng.random(), dist=rng.random())
                )
            if not any(r.rendered for r in records):
                continue
            all_mode = aggregate(records, ALL)
            success_mode = aggregate(records, SUCCESS)
            for metric in ("cosine_mapped", "ssim", "s_struct"):
                assert all_mode[metric] <= success_mode[metric] + 1e-12
            assert all_mode["d_perceptual"] >= success_mode["d_perceptual"] - 1e-12

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], "MEDIAN")


class TestEvaluate:
    def test_identical_prediction_scores_one(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) -- (2,1) -- (2,0) -- cycle;"),
                rec("b", "\\draw (0,0) circle (1); \\fill (0,0) circle (0.2);")]
        preds = [SampleRecord(id=r.id, code=r.code) for r in refs]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub, trivial=TRIVIAL)
        for record in report.records:
            assert record.rendered
            assert record.ssim == pytest.approx(1.0, abs=1e-9)
            assert record.cosine_mapped == pytest.approx(1.0, abs=1e-9)
            assert record.s_ted == pytest.approx(1.0, abs=1e-12)
            assert record.crystal_bleu == pytest.approx(1.0, abs=1e-12)
            assert record.d_perceptual == pytest.approx(0.0, abs=1e-12)
        assert not report.any_failures

    def test_uncompilable_prediction_penalized(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) -- (1,1);"), rec("b", "\\draw (0,0) circle (1);")]
        preds = [
            SampleRecord(id="a", code=refs[0].code),
            SampleRecord(id="b", code=standalone_doc("\\nosuchcmd")),
        ]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        by_id = {r.id: r for r in report.records}
        assert by_id["b"].rendered is False
        assert by_id["b"].compile_status == "compile-error"
        # code metrics computed regardless of compile status
        assert by_id["b"].s_ted > 0.0
        assert report.aggregates[ALL]["ssim"] == pytest.approx(
            by_id["a"].ssim / 2, abs=1e-9
        )
        assert report.aggregates[SUCCESS]["ssim"] == pytest.approx(by_id["a"].ssim, abs=1e-12)
        assert report.any_failures

    def test_failing_reference_excluded_and_logged(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("good", "\\draw (0,0) -- (1,1);"),
                SampleRecord(id="broken", code=standalone_doc("\\bogusmacro"))]
        preds = [SampleRecord(id="good", code=refs[0].code),
                 SampleRecord(id="broken", code=refs[0].code)]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        assert report.excluded_refs == ["broken"]
        assert [r.id for r in report.records] == ["good"]

    def test_unmatched_predictions_skipped(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) -- (1,1);")]
        preds = [SampleRecord(id="a", code=refs[0].code),
                 SampleRecord(id="orphan", code=refs[0].code)]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        assert report.unmatched == ["orphan"]
        assert len(report.records) == 1

    def test_report_deterministic(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) rectangle (2,1);")]
        preds = [SampleRecord(id="a", code=standalone_doc("\\draw (0,0) rectangle (2,1.2);"))]
        one = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub).to_json()
        two = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub).to_json()
        assert one == two

    def test_metric_backend_labels(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) -- (1,1);")]
        preds = [SampleRecord(id="a", code=refs[0].code)]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        assert report.metric_backends["cosine_mapped"] == "builtin"
        assert report.metric_backends["d_perceptual"] == "builtin"
        assert report.to_dict()["metric_backends"]["ssim"] == "builtin"

    def test_table_rendering(self, stub_config, stub_sandbox, builtin_hub):
        refs = [rec("a", "\\draw (0,0) -- (1,1);")]
        preds = [SampleRecord(id="a", code=refs[0].code)]
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        table = report.to_table()
        assert "ssim" in table and "ALL" in table and "SUCCESS" in table

    def test_render_cache_on_disk(self, stub_config, stub_sandbox, builtin_hub, tmp_path):
        stub_config.cache_dir = str(tmp_path / "cache")
        refs = [rec("a", "\\draw (0,0) -- (1,1);")]
        preds = [SampleRecord(id="a", code=refs[0].code)]
        evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        cached = list((tmp_path / "cache" / "renders").glob("*.png"))
        assert cached
        # second run must produce identical numbers through the cache
        report = evaluate(preds, refs, stub_config, stub_sandbox, builtin_hub)
        assert report.records[0].ssim == pytest.approx(1.0, abs=1e-9)
