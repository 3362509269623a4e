import numpy as np
import pytest

from twrnnt.errors import DataError, NumericalError
from twrnnt.model import (
    AdamConfig,
    TransducerModel,
    adam_init,
    adam_step,
    greedy_decode,
    load_checkpoint,
    model_backward,
    model_forward,
    param_count,
    save_checkpoint,
    sgd_step,
)
from twrnnt.weighting import TokenWeights, WeightConfig, weighted_loss_and_grad, weighted_rnnt_loss


def make_model(seed=0, D=3, H=5, V=4, scale=0.5):
    rng = np.random.default_rng(seed)
    return TransducerModel.random(D, H, V, rng, scale=scale), rng


class TestForward:
    def test_param_count_is_function_of_dims(self):
        D, H, V = 3, 5, 4
        expected = H * D + H + (V + 1) * H + H * H + H + (V + 1) * H + (V + 1)
        assert param_count(D, H, V) == expected
        m = TransducerModel.zeros(D, H, V)
        assert m.params.size == expected

    def test_zero_parameters_give_uniform_rows(self):
        m = TransducerModel.zeros(2, 4, 3)
        lat = model_forward(m, np.zeros((3, 2)), [0, 1])
        assert np.allclose(lat.logp, np.log(0.25), atol=1e-12)

    def test_deterministic_across_runs(self):
        m, rng = make_model(seed=1)
        feats = rng.normal(size=(4, 3))
        a = model_forward(m, feats, [0, 2])
        b = model_forward(m, feats, [0, 2])
        np.testing.assert_array_equal(a.logp, b.logp)

    def test_rows_normalized(self):
        m, rng = make_model(seed=2)
        feats = rng.normal(size=(5, 3))
        lat = model_forward(m, feats, [1, 3, 0])
        assert lat.row_normalization_error() < 1e-9

    def test_float32_path_stays_normalized(self):
        m, rng = make_model(seed=3)
        feats = rng.normal(size=(4, 3))
        lat = model_forward(m, feats, [2], compute_dtype=np.float32)
        assert lat.row_normalization_error() < 1e-9
        lat64 = model_forward(m, feats, [2])
        assert np.max(np.abs(lat.logp - lat64.logp)) < 1e-5

    def test_dimension_check(self):
        m, _ = make_model()
        with pytest.raises(DataError, match="features"):
            model_forward(m, np.zeros((3, 7)), [0])


class TestBackward:
    def test_full_pipeline_finite_differences(self):
        # d(weighted loss)/d(params) through forward + lattice grad, checked
        # coordinate-by-coordinate against central differences.
        m, rng = make_model(seed=4, D=2, H=4, V=3)
        feats = rng.normal(size=(4, 2))
        y = np.array([0, 2, 1])
        w = TokenWeights(
            lambdas=np.array([1.5, 0.5, 1.0]),
            source_confidences=np.ones(3),
            config=WeightConfig(),
        )

        def loss_at(params):
            mm = TransducerModel(m.dim_in, m.dim_hidden, m.vocab_size, params)
            return weighted_rnnt_loss(model_forward(mm, feats, y), y, w)

        lat = model_forward(m, feats, y)
        _, dlogp = weighted_loss_and_grad(lat, y, w)
        analytic = model_backward(m, feats, y, dlogp)
        h = 1e-5
        idx = rng.choice(m.params.size, size=10, replace=False)
        for i in idx:
            p = m.params.copy()
            p[i] += h
            hi = loss_at(p)
            p[i] -= 2 * h
            lo = loss_at(p)
            numeric = (hi - lo) / (2 * h)
            rel = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-6)
            assert rel < 1e-3

    def test_zero_lattice_gradient_gives_zero_param_gradient(self):
        m, rng = make_model(seed=5)
        feats = rng.normal(size=(3, 3))
        g = model_backward(m, feats, [1], np.zeros((3, 2, 5)))
        assert np.all(g == 0.0)

    def test_gradient_linear_in_lattice_gradient(self):
        # A two-utterance batch loss is a sum, so its parameter gradient is
        # the sum of per-utterance backward passes; backward itself must be
        # linear in the incoming lattice gradient.
        m, rng = make_model(seed=6)
        feats = rng.normal(size=(3, 3))
        y = np.array([1, 2])
        d1 = rng.normal(size=(3, 3, 5))
        d2 = rng.normal(size=(3, 3, 5))
        g1 = model_backward(m, feats, y, d1)
        g2 = model_backward(m, feats, y, d2)
        g12 = model_backward(m, feats, y, d1 + d2)
        np.testing.assert_allclose(g12, g1 + g2, atol=1e-12)


class TestOptimizers:
    def test_sgd_unit_lr_subtracts_gradient(self):
        m, rng = make_model(seed=7)
        g = rng.normal(size=m.params.size)
        m2 = sgd_step(m, g, lr=1.0)
        np.testing.assert_allclose(m2.params, m.params - g, atol=1e-15)

    def test_sgd_rejects_bad_lr_and_nan(self):
        m, rng = make_model(seed=8)
        with pytest.raises(DataError):
            sgd_step(m, np.zeros(m.params.size), lr=0.0)
        g = np.zeros(m.params.size)
        g[3] = np.nan
        with pytest.raises(NumericalError):
            sgd_step(m, g, lr=0.1)

    def test_adam_first_step_is_signed_lr(self):
        m, rng = make_model(seed=9)
        g = rng.normal(size=m.params.size)
        g[np.abs(g) < 0.1] = 0.5  # keep |g| >> eps so the limit is clean
        cfg = AdamConfig(lr=1e-2)
        state = adam_step(adam_init(m), g, cfg)
        delta = state.model.params - m.params
        np.testing.assert_allclose(delta, -cfg.lr * np.sign(g), atol=1e-6)

    def test_adam_nan_gradient_leaves_state_untouched(self):
        m, _ = make_model(seed=10)
        state = adam_init(m)
        g = np.zeros(m.params.size)
        g[0] = np.nan
        with pytest.raises(NumericalError):
            adam_step(state, g, AdamConfig())
        assert state.step == 0
        np.testing.assert_array_equal(state.model.params, m.params)


class TestGreedyDecode:
    def test_blank_dominant_model_emits_nothing(self):
        m = TransducerModel.zeros(2, 3, 2)
        p = m.params.copy()
        m2 = TransducerModel(2, 3, 2, p)
        jb = m2.slice("join_b")
        jb[2] = 5.0  # blank logit dominates every node
        hyp, clean = greedy_decode(m2, np.zeros((4, 2)))
        assert hyp.size == 0 and clean

    def test_single_frame_emits_dominant_token_then_blank(self):
        # Handcrafted: BOS state pushes token 0, token-0 state pushes blank.
        m = TransducerModel.zeros(1, 2, 2)
        emb = m.slice("emb")
        emb[2] = [1.0, 0.0]  # BOS row
        emb[0] = [0.0, 1.0]
        m.slice("pred_w")[...] = np.eye(2)
        jw = m.slice("join_w")
        jw[0] = [10.0, 0.0]  # token 0 keyed to the BOS direction
        jw[2] = [0.0, 10.0]  # blank keyed to the token-0 direction
        hyp, clean = greedy_decode(m, np.zeros((1, 1)))
        assert hyp.tolist() == [0] and clean

    def test_cap_forces_termination(self):
        m = TransducerModel.zeros(1, 2, 2)
        m.slice("join_b")[0] = 5.0  # token 0 always wins: decoder would loop
        hyp, clean = greedy_decode(m, np.zeros((2, 1)), max_symbols_per_frame=4)
        assert hyp.size == 8 and not clean

    def test_seeded_decode_is_stable(self):
        m, rng = make_model(seed=11, D=2, H=4, V=3, scale=1.0)
        feats = rng.normal(size=(5, 2))
        a, _ = greedy_decode(m, feats)
        b, _ = greedy_decode(m, feats)
        np.testing.assert_array_equal(a, b)


class TestCheckpoints:
    def test_round_trip_exact(self, tmp_path):
        m, rng = make_model(seed=12)
        state = adam_init(m)
        g = rng.normal(size=m.params.size)
        state = adam_step(state, g, AdamConfig())
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, state.model, optimizer=state, meta={"note": "t"})
        m2, opt2, meta = load_checkpoint(path)
        np.testing.assert_array_equal(m2.params, state.model.params)
        np.testing.assert_array_equal(opt2.m, state.m)
        np.testing.assert_array_equal(opt2.v, state.v)
        assert opt2.step == 1 and meta == {"note": "t"}

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"kind": "other"}')
        with pytest.raises(DataError, match="not a model checkpoint"):
            load_checkpoint(path)
