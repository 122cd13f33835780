import json

import pytest

from tikzrig.backends import BackendHub
from tikzrig.codemetrics import CodeScores
from tikzrig.config import default_config, load_config
from tikzrig.errors import ConfigError
from tikzrig.imgmetrics import VisualScores
from tikzrig.reward import RewardConfig, stage2_total
from tikzrig.sandbox import CompileOutcome


class TestDefaults:
    def test_grpo_defaults(self):
        grpo = default_config().grpo
        assert grpo.group_size == 5
        assert grpo.clip_eps == 0.2
        assert grpo.kl_coeff == 0.01
        assert grpo.std_floor == 1e-6

    def test_policy_sampling_defaults(self):
        sampling = default_config().sampling
        assert sampling.temperature == 0.1
        assert sampling.top_p == 0.95
        assert sampling.max_tokens == 4096

    def test_curriculum_defaults(self):
        curriculum = default_config().curriculum
        assert curriculum.tau_min == 0.5
        assert curriculum.tau_max == 0.9
        assert curriculum.min_complexity == 3

    def test_curation_limits(self):
        cur = default_config().curation
        assert cur.max_repair_iters == 3
        assert "includegraphics" in cur.exclusion_list
        assert "lstinputlisting" in cur.exclusion_list


class TestLoadAndMerge:
    def test_partial_override(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "stage2": {"tau_gate": 0.7},
            "sandbox": {"engine": "stub", "dpi": 150},
        }))
        cfg = load_config(path)
        assert cfg.stage2.tau_gate == 0.7
        assert cfg.stage2.lambda_code == 0.15  # untouched default
        assert cfg.sandbox.dpi == 150

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"stage2": {"tau_gat": 0.7}}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_non_object_root_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_save_load_roundtrip(self, tmp_path):
        cfg = default_config()
        cfg.stage1.tau_hold = 0.75
        path = tmp_path / "cfg.json"
        cfg.save(path)
        assert load_config(path).to_dict() == cfg.to_dict()

    def test_hash_tracks_content(self):
        a = default_config()
        b = default_config()
        assert a.hash() == b.hash()
        b.stage2.tau_gate = 0.65
        assert a.hash() != b.hash()


def test_backend_hub_from_file(tmp_path):
    spec = tmp_path / "backends.json"
    spec.write_text(json.dumps({
        "embed": {"transport": "builtin"},
        "judge": {"transport": "http", "address": "http://judge.local:9", "timeout": 3, "retries": 2},
    }))
    hub = BackendHub.from_file(spec)
    assert hub.endpoints["judge"].transport == "http"
    assert hub.endpoints["judge"].retries == 2
    assert hub.identities()["embed"] == "builtin"
    assert hub.identities()["judge"] == "http:http://judge.local:9"


def test_reward_breakdown_recomputable_exactly():
    cfg = RewardConfig.stage2(default_config())
    outcome = CompileOutcome("success", 0.1, "")
    scores = VisualScores(0.9, 0.83, 0.77, 0.0, 0.1)
    code = CodeScores(0.1, 0.9, 0.7, 0.78, 0.4)
    b = stage2_total(outcome, scores, code, cfg)
    r_vis = cfg.lambda_sem * scores.s_sem + cfg.lambda_str * scores.s_struct
    expected = cfg.alpha_plus + cfg.lambda_vis * r_vis
    if b.gate_open:
        expected += cfg.lambda_code * code.s_code
    assert b.total == expected  # bitwise: same expression, same order
