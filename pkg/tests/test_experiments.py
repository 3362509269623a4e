import numpy as np
import pytest

from twrnnt.datagen import SyntheticSpec, generate_synthetic_dataset, read_dataset
from twrnnt.errors import DataError
from twrnnt.experiments import (
    GenerationConfig,
    format_table,
    report_from_json,
    report_to_json,
    run_corruption_experiment,
    run_pseudo_labeling,
)
from twrnnt.seeds import stream
from twrnnt.training import TrainConfig, evaluate_wer, score_confidences, train_model


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    spec = SyntheticSpec(
        n_train=40, n_valid=16, n_test=24, n_pretrain=40,
        dim_features=8, vocab_size=16, noise_level=0.3, seed=31,
    )
    paths = generate_synthetic_dataset(spec, tmp_path_factory.mktemp("tiny"))
    splits = {}
    meta = None
    for name, p in paths.items():
        meta, splits[name] = read_dataset(p)
    return meta, splits


FAST = TrainConfig(epochs=4, batch_size=8, lr=1e-2, dim_hidden=32)


class TestGenerationConfig:
    def test_validation(self):
        with pytest.raises(DataError):
            GenerationConfig(rounds=0)
        with pytest.raises(DataError):
            GenerationConfig(alpha_grid=())
        with pytest.raises(DataError):
            GenerationConfig(modes=("bogus",))
        with pytest.raises(DataError):
            GenerationConfig(labeled_to_pseudo_ratio=(0, 0))


class TestCorruptionExperiment:
    def test_report_round_trips_and_is_deterministic(self, tiny_data):
        meta, splits = tiny_data
        kwargs = dict(
            splits=splits, meta=meta, levels=[0.2], modes=("standard", "token_weights"),
            train_cfg=FAST, alpha_grid=(2.0,), seeds=(0,), root_seed=5,
        )
        rep1 = run_corruption_experiment(**kwargs)
        rep2 = run_corruption_experiment(**kwargs)
        assert report_to_json(rep1) == report_to_json(rep2)
        back = report_from_json(report_to_json(rep1))
        assert report_to_json(back) == report_to_json(rep1)

    def test_level_zero_ties_clean_baseline(self, tiny_data):
        meta, splits = tiny_data
        rep = run_corruption_experiment(
            splits, meta, levels=[0.0],
            modes=("standard", "utterance_weights", "token_weights"),
            train_cfg=FAST, alpha_grid=(2.0,), seeds=(0, 1), root_seed=6,
        )
        row = rep.rows[0]
        for mode, entry in row["modes"].items():
            assert abs(entry["wer"] - rep.clean_wer) < 0.12  # seed noise at tiny scale
        # Baseline did not degrade: recovery is undefined, not a number.
        for mode, rec in row.get("recovered", {}).items():
            assert rec is None or abs(rec) < np.inf

    def test_missing_split_rejected(self, tiny_data):
        meta, splits = tiny_data
        broken = dict(splits)
        broken["pretrain"] = []
        with pytest.raises(DataError, match="pretrain"):
            run_corruption_experiment(
                broken, meta, levels=[0.2], modes=("standard",),
                train_cfg=FAST, seeds=(0,),
            )

    def test_table_renders(self, tiny_data):
        meta, splits = tiny_data
        rep = run_corruption_experiment(
            splits, meta, levels=[0.2], modes=("standard", "token_weights"),
            train_cfg=FAST, alpha_grid=(2.0,), seeds=(0,), root_seed=5,
        )
        table = format_table(rep)
        assert "token_weights" in table and "Recovered" in table


class TestPseudoLabeling:
    def test_alpha_zero_collapses_onto_standard(self, tiny_data):
        meta, splits = tiny_data
        gen = GenerationConfig(
            rounds=1, alpha_grid=(0.0,),
            modes=("standard", "token_weights", "utterance_weights"),
        )
        rep = run_pseudo_labeling(
            splits["train"], splits["pretrain"], splits["valid"], splits["test"],
            meta, gen, FAST, seeds=(0,), root_seed=7,
            base_cfg=TrainConfig(epochs=10), include_traces=True,
        )
        row = rep.rows[0]["modes"]
        std = np.asarray(row["standard"]["loss_trace_per_seed"][0])
        for mode in ("token_weights", "utterance_weights"):
            tr = np.asarray(row[mode]["loss_trace_per_seed"][0])
            assert tr.shape == std.shape
            assert np.max(np.abs(tr - std)) < 1e-9
        assert row["token_weights"]["wer"] == pytest.approx(
            row["standard"]["wer"], abs=1e-12
        )

    def test_chosen_alpha_recorded(self, tiny_data):
        meta, splits = tiny_data
        gen = GenerationConfig(rounds=1, alpha_grid=(1.0, 4.0), modes=("token_weights",))
        rep = run_pseudo_labeling(
            splits["train"], splits["pretrain"], splits["valid"], splits["test"],
            meta, gen, FAST, seeds=(0,), root_seed=8,
            base_cfg=TrainConfig(epochs=10),
        )
        chosen = rep.rows[0]["modes"]["token_weights"]["chosen_alpha"]
        assert chosen and chosen[0] in (1.0, 4.0)

    def test_determinism(self, tiny_data):
        meta, splits = tiny_data
        gen = GenerationConfig(rounds=1, alpha_grid=(2.0,), modes=("standard", "token_weights"))
        kwargs = dict(
            labeled=splits["train"], unlabeled=splits["pretrain"],
            valid=splits["valid"], test=splits["test"], meta=meta,
            cfg=gen, train_cfg=FAST, seeds=(0,), root_seed=9,
            base_cfg=TrainConfig(epochs=8),
        )
        assert report_to_json(run_pseudo_labeling(**kwargs)) == report_to_json(
            run_pseudo_labeling(**kwargs)
        )

    def test_empty_pools_rejected(self, tiny_data):
        meta, splits = tiny_data
        with pytest.raises(DataError, match="nonempty"):
            run_pseudo_labeling(
                [], splits["pretrain"], splits["valid"], splits["test"],
                meta, GenerationConfig(rounds=1), FAST,
            )


class TestCleanTeacherControl:
    def test_large_alpha_harmless_with_clean_teacher(self, tiny_data):
        # Confidences from a competent teacher on ground-truth labels are
        # high everywhere, so even alpha = 8 barely moves the weights.
        meta, splits = tiny_data
        teacher = train_model(
            splits["pretrain"], 8, 16, TrainConfig(epochs=14),
            stream(20, "init"), stream(20, "order"),
        ).model
        scored = score_confidences(teacher, splits["train"])
        wers = {}
        for alpha in (1.0, 8.0):
            cfg = TrainConfig(epochs=8, mode="token_weights", alpha=alpha)
            res = train_model(
                scored, 8, 16, cfg, stream(21, "init"), stream(21, "order")
            )
            wers[alpha] = evaluate_wer(res.model, splits["test"])
        assert abs(wers[8.0] - wers[1.0]) < 0.08
