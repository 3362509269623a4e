import json
from pathlib import Path

import numpy as np
import pytest

from twrnnt.cli import main
from twrnnt.datagen import read_dataset
from twrnnt.experiments import report_from_json

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "loss_check_t3u2.json"

TINY = [
    "--n-train", "30", "--n-valid", "10", "--n-test", "12", "--n-pretrain", "20",
    "--vocab-size", "12", "--max-tokens", "6",
]


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGenData:
    def test_generates_and_reproduces(self, tmp_path, capsys):
        code, out, _ = run(capsys, ["gen-data", "--out", str(tmp_path / "a"), *TINY])
        assert code == 0
        code, _, _ = run(capsys, ["gen-data", "--out", str(tmp_path / "b"), *TINY])
        assert code == 0
        for split in ("train", "valid", "test", "pretrain"):
            assert (tmp_path / "a" / f"{split}.jsonl").read_bytes() == (
                tmp_path / "b" / f"{split}.jsonl"
            ).read_bytes()

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"not_a_key": 1}')
        code, _, err = run(
            capsys, ["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d")]
        )
        assert code == 2
        assert json.loads(err.strip())["error"] == "config"

    def test_missing_data_exits_3(self, tmp_path, capsys):
        code, _, err = run(
            capsys,
            ["train", "--data", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "m.json")],
        )
        assert code == 3
        assert json.loads(err.strip())["error"] == "data"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ws")
    assert main(["gen-data", "--out", str(tmp), *TINY]) == 0
    assert (
        main(
            [
                "train", "--data", str(tmp / "train.jsonl"),
                "--out", str(tmp / "model.json"), "--epochs", "10", *TINY,
            ]
        )
        == 0
    )
    return tmp


class TestTrainDecodeScore:

    def test_checkpoint_exists_with_provenance(self, workspace):
        obj = json.loads((workspace / "model.json").read_text())
        assert obj["kind"] == "twrnnt-checkpoint"
        assert "config_hash" in obj["meta"]["provenance"]

    def test_decode_writes_hypotheses_and_wer(self, workspace, capsys):
        code, out, _ = run(
            capsys,
            [
                "decode", "--model", str(workspace / "model.json"),
                "--data", str(workspace / "test.jsonl"),
                "--out", str(workspace / "hyps.jsonl"), *TINY,
            ],
        )
        assert code == 0
        assert "corpus WER" in out
        meta, hyps = read_dataset(workspace / "hyps.jsonl")
        assert meta["provenance"]["command"] == "decode"
        assert len(hyps) == 12

    def test_score_confidence_attaches_scores_and_lambdas(self, workspace, capsys):
        code, _, _ = run(
            capsys,
            [
                "score-confidence", "--model", str(workspace / "model.json"),
                "--data", str(workspace / "train.jsonl"),
                "--out", str(workspace / "scored.jsonl"),
                "--write-lambda", "--alpha", "2.0", *TINY,
            ],
        )
        assert code == 0
        _, scored = read_dataset(workspace / "scored.jsonl")
        for u in scored:
            assert u.confidences is not None and u.confidences.size == u.tokens.size
            assert u.lam is not None
            if u.lam.size:
                assert np.mean(u.lam) == pytest.approx(1.0, abs=1e-9)


class TestCorrupt:
    def test_zero_rate_identical_except_header(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path), *TINY]) == 0
        code, _, _ = run(
            capsys,
            [
                "corrupt", "--data", str(tmp_path / "train.jsonl"),
                "--out", str(tmp_path / "zero.jsonl"), "--error-rate", "0", *TINY,
            ],
        )
        assert code == 0
        src = (tmp_path / "train.jsonl").read_text().splitlines()
        dst = (tmp_path / "zero.jsonl").read_text().splitlines()
        assert src[0] != dst[0]  # provenance header differs
        assert src[1:] == dst[1:]  # data lines identical

    def test_nonzero_rate_reports_measured_wer(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path), *TINY]) == 0
        code, out, _ = run(
            capsys,
            [
                "corrupt", "--data", str(tmp_path / "train.jsonl"),
                "--out", str(tmp_path / "c.jsonl"), "--error-rate", "0.3", *TINY,
            ],
        )
        assert code == 0
        assert "reference WER" in out


class TestLossCheck:
    def test_fixture_agrees_to_ten_decimals(self, capsys):
        code, out, _ = run(capsys, ["loss-check", str(FIXTURE)])
        assert code == 0
        lines = dict(
            line.split(":", 1) for line in out.splitlines() if ":" in line
        )
        analytic = float(lines["rnnt_loss"])
        oracle = float(lines["oracle_loss"])
        assert abs(analytic - oracle) < 1e-10

    def test_malformed_lattice_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"t": 2, "u": 1, "v": 2, "logp": [0.0, 0.0]}')
        code, _, err = run(capsys, ["loss-check", str(bad)])
        assert code == 3

    def test_zero_probability_prefix_exits_4(self, tmp_path, capsys):
        logp = np.full((2, 2, 3), -np.inf)
        logp[:, :, 2] = 0.0
        f = tmp_path / "zero.json"
        f.write_text(
            json.dumps(
                {"t": 2, "u": 1, "v": 2, "logp": list(map(float, logp.ravel())), "tokens": [0]}
            )
        )
        code, _, err = run(capsys, ["loss-check", str(f)])
        assert code == 4
        assert json.loads(err.strip())["error"] == "numerical"


class TestExperimentsCli:
    def test_run_pseudolabel_alpha_zero_collapse(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path), *TINY]) == 0
        code, out, _ = run(
            capsys,
            [
                "run-pseudolabel", "--data-dir", str(tmp_path),
                "--out", str(tmp_path / "rep.json"),
                "--rounds", "1", "--alpha-grid", "0",
                "--seeds", "0", "--epochs", "3", "--base-epochs", "8",
                "--include-traces", "true", *TINY,
            ],
        )
        assert code == 0
        rep = report_from_json((tmp_path / "rep.json").read_text())
        modes = rep.rows[0]["modes"]
        std = np.asarray(modes["standard"]["loss_trace_per_seed"][0])
        tok = np.asarray(modes["token_weights"]["loss_trace_per_seed"][0])
        assert np.max(np.abs(std - tok)) < 1e-9

    def test_run_corruption_and_report_roundtrip(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path), *TINY]) == 0
        args = [
            "run-corruption", "--data-dir", str(tmp_path),
            "--out", str(tmp_path / "rep.json"),
            "--levels", "0.2", "--alpha-grid", "2", "--seeds", "0",
            "--epochs", "3", "--base-epochs", "6",
            "--modes", "standard,token_weights", *TINY,
        ]
        code, out1, _ = run(capsys, args)
        assert code == 0
        assert "token_weights" in out1
        first = (tmp_path / "rep.json").read_text()
        code, _, _ = run(capsys, args)
        assert (tmp_path / "rep.json").read_text() == first  # reproducible
        code, out2, _ = run(capsys, ["report", str(tmp_path / "rep.json")])
        assert code == 0
        assert "Recovered" in out2

    def test_help_lists_every_config_flag(self, capsys):
        from twrnnt.config import SCHEMA

        with pytest.raises(SystemExit):
            main(["train", "--help"])
        out = capsys.readouterr().out
        for key in SCHEMA:
            assert "--" + key.replace("_", "-") in out
