import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parapair.corpus import build_vocab, encode_batch, tokenize
from parapair.errors import ContractError, TrainingAborted
from parapair.numerics import Tensor
from parapair.toy import template_pairs
from parapair.training import (OptimizerState, TrainConfig, build_model, clip_gradients,
                               decay_factor, evaluate_losses, lr_at_epoch, new_state,
                               rmsprop_step, train, train_epoch, train_step)

LOG_KEYS = {"step", "epoch", "variant", "local", "global", "total", "active_hinges", "lr",
            "grad_norm", "clipped"}


def tiny_data(n=6, max_len=12):
    pairs = template_pairs(n, seed=1, n_subjects=3)
    vocab = build_vocab([tokenize(s) + tokenize(t) for s, t in pairs])
    return vocab, encode_batch(pairs, vocab, max_len)


def tiny_config(**kw):
    base = dict(d=6, batch_size=3, learning_rate=0.01, max_len=12, seed=2, variant="EDLP")
    base.update(kw)
    return TrainConfig(**base)


class TestRmsprop:
    def test_hand_example(self):
        w = {"w": Tensor([1.0])}
        state = OptimizerState()
        rmsprop_step(w, {"w": np.array([0.5])}, state, lr=0.0008, alpha=0.99, epsilon=1e-8)
        assert state.s["w"][0] == pytest.approx(0.0025, rel=1e-12)
        assert w["w"].data[0] == pytest.approx(1 - 0.0008 * 0.5 / (0.05 + 1e-8), rel=1e-14)
        assert w["w"].data[0] == pytest.approx(0.992, abs=1e-6)
        assert state.step == 1

    def test_zero_gradient_is_a_no_op(self):
        w = {"w": Tensor([3.0, -1.0])}
        rmsprop_step(w, {"w": np.zeros(2)}, OptimizerState(), lr=0.1)
        assert w["w"].data.tolist() == [3.0, -1.0]

    def test_non_finite_gradient(self):
        w = {"a": Tensor([1.0]), "b": Tensor([1.0])}
        with pytest.raises(TrainingAborted, match="'b'"):
            rmsprop_step(w, {"a": np.array([1.0]), "b": np.array([np.nan])}, OptimizerState(), 0.1)
        assert w["a"].data[0] == 1.0

    @given(st.floats(1e-6, 1e3), st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6))
    def test_first_step_size(self, lr, g):
        w = {"w": Tensor([0.0])}
        rmsprop_step(w, {"w": np.array([g])}, OptimizerState(), lr=lr, alpha=0.99, epsilon=1e-8)
        # |step| = lr * |g| / (0.1 |g| + eps), close to 10 lr
        assert abs(w["w"].data[0]) <= 10 * lr * (1 + 1e-9)
        assert np.sign(w["w"].data[0]) == -np.sign(g)


class TestSchedule:
    def test_decay_factor(self):
        assert decay_factor(1500, 1250) == math.exp(math.log(0.1) / 1875000)
        assert decay_factor(1, 1) == pytest.approx(0.1, rel=1e-15)

    def test_reaches_a_tenth_after_ab_epochs(self):
        assert lr_at_epoch(0.0008, 3, 4, 12) == pytest.approx(0.00008, rel=1e-12)

    def test_bad_arguments(self):
        with pytest.raises(ContractError):
            decay_factor(0, 5)

    @given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 150), st.integers(0, 150))
    def test_composition(self, a, b, j, k):
        lhs = math.log(lr_at_epoch(1.0, a, b, j + k))
        rhs = math.log(lr_at_epoch(1.0, a, b, j)) + math.log(lr_at_epoch(1.0, a, b, k))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


class TestClip:
    def test_scales_to_max(self):
        g = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
        norm, clipped = clip_gradients(g, 1.0)
        assert norm == 5.0 and clipped
        assert math.sqrt(sum((v ** 2).sum() for v in g.values())) == pytest.approx(1.0)

    def test_small_untouched(self):
        g = {"a": np.array([0.3, 0.4])}
        assert clip_gradients(g, 5.0) == (0.5, False)
        assert g["a"].tolist() == [0.3, 0.4]


class TestConfig:
    def test_invalid_values(self):
        with pytest.raises(ContractError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ContractError):
            TrainConfig(alpha=1.0)
        with pytest.raises(ContractError):
            TrainConfig(variant="EDLP", batch_size=1)
        with pytest.raises(ContractError):
            TrainConfig(variant="EDQ")

    def test_from_mapping(self):
        cfg = TrainConfig.from_mapping({"learning_rate": "0.5", "epochs": "3", "widths": "1,3",
                                        "variant": "edl"})
        assert cfg.learning_rate == 0.5 and cfg.epochs == 3
        assert cfg.widths == (1, 3) and cfg.variant == "EDL"
        with pytest.raises(ContractError):
            TrainConfig.from_mapping({"nope": 1})

    def test_round_trip(self):
        cfg = TrainConfig(widths=(1, 3), d=7)
        assert TrainConfig.from_mapping(cfg.as_dict()) == cfg

    @pytest.mark.parametrize("name,disc", [("EDL", False), ("EDLP", True), ("EDLPS", False),
                                           ("EDG", True), ("EDLPGS", False)])
    def test_model_layout(self, name, disc):
        m = build_model(TrainConfig(variant=name, d=4), 10)
        assert ("disc.Wx" in m.params) == disc


class TestSteps:
    def test_log_line_schema(self):
        vocab, data = tiny_data()
        cfg = tiny_config()
        model, state, sink = build_model(cfg, len(vocab)), new_state(cfg), io.StringIO()
        train_epoch(model, data, cfg, state, sink)
        lines = [json.loads(x) for x in sink.getvalue().splitlines()]
        assert len(lines) == 2
        assert all(set(x) == LOG_KEYS for x in lines)
        assert [x["step"] for x in lines] == [1, 2] and lines[0]["variant"] == "EDLP"

    def test_alternation_touches_one_side_per_step(self):
        vocab, data = tiny_data()
        cfg = tiny_config(variant="EDLPG")
        model, state = build_model(cfg, len(vocab)), new_state(cfg)
        decoder_side = {"W_d", "W_v", "b_v", "W_dl.Wx", "W_dl.Wh", "W_dl.b"}
        for turn in range(2):
            before = {k: v.data.copy() for k, v in model.params.items()}
            train_step(model, data.rows(np.arange(3)), cfg, state)
            moved = {k for k, v in model.params.items() if not np.array_equal(v.data, before[k])}
            if turn == 0:
                assert moved and moved <= decoder_side
            else:
                assert moved and not moved & decoder_side

    def test_size_one_batch_skipped_with_global(self):
        vocab, data = tiny_data(n=7)
        cfg = tiny_config()
        summary = train_epoch(build_model(cfg, len(vocab)), data, cfg, new_state(cfg))
        assert summary.steps == 2 and summary.skipped == 1

    def test_loss_decreases(self):
        vocab, data = tiny_data()
        cfg = tiny_config(variant="EDL", epochs=30, batch_size=2)
        model = build_model(cfg, len(vocab))
        before = evaluate_losses(model, data, cfg.spec).local
        history = train(model, data, cfg)
        assert len(history) == 30
        assert evaluate_losses(model, data, cfg.spec).local < 0.5 * before

    def test_seeded_runs_are_identical(self):
        vocab, data = tiny_data()
        cfg = tiny_config(epochs=3)
        runs = []
        for _ in range(2):
            model, sink = build_model(cfg, len(vocab)), io.StringIO()
            train(model, data, cfg, sink)
            runs.append((sink.getvalue(), [model[k].data.tobytes() for k in sorted(model.params)]))
        assert runs[0] == runs[1]

    def test_lr_follows_schedule(self):
        vocab, data = tiny_data()
        cfg = tiny_config(epochs=3, decay_a=1, decay_b=2)
        seen = []
        train(build_model(cfg, len(vocab)), data, cfg, on_epoch=lambda s, st: seen.append(s.lr))
        assert seen == [lr_at_epoch(0.01, 1, 2, e) for e in range(3)]
