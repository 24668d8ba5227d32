import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parapair import numerics as nx
from parapair.corpus import PAD, START, STOP
from parapair.errors import ContractError, DimensionError, EmptySequenceError, VocabRangeError
from parapair.model import (LstmState, Seq2Seq, decode_sentence, embed_words, encode_sentence,
                            generate, lstm_step)
from parapair.numerics import Tensor

V, D = 12, 5


@pytest.fixture
def model():
    return Seq2Seq(V, D, widths=(1,), seed=3)


def sigmoid(x):
    return 1 / (1 + np.exp(-x))


class TestConstruction:
    def test_shared_has_no_disc(self):
        m = Seq2Seq(V, D, shared=True, discriminator=True)
        assert not any(k.startswith("disc") for k in m.params)
        assert m.disc_prefix() == "W_l"

    def test_separate_disc(self):
        m = Seq2Seq(V, D, shared=False, discriminator=True)
        assert m["disc.Wx"].shape == (D, 4 * D) and m.disc_prefix() == "disc"
        assert m.num_parameters() == Seq2Seq(V, D).num_parameters() + 2 * D * 4 * D + 4 * D

    def test_wide_kernels(self):
        m = Seq2Seq(V, D, widths=(1, 3))
        assert m["W_e.w3"].shape == (3 * V, D)
        with pytest.raises(ContractError):
            Seq2Seq(V, D, widths=(2,))

    def test_seeded_init(self):
        a, b = Seq2Seq(V, D, seed=1), Seq2Seq(V, D, seed=1)
        assert all(np.array_equal(a[k].data, b[k].data) for k in a.params)
        assert np.all(np.abs(a["W_d"].data) <= 0.08) and not a["b_v"].data.any()

    def test_copy_is_independent(self, model):
        c = model.copy()
        c["W_d"].data[0, 0] += 1
        assert c["W_d"].data[0, 0] != model["W_d"].data[0, 0]


class TestEmbedding:
    def test_width_one_is_lookup(self, model):
        ids = [START, 5, 7, STOP, PAD, PAD]
        E = embed_words(model, ids).data
        table = model["W_e.w1"].data
        assert np.array_equal(E[:4], table[[START, 5, 7, STOP]])
        assert not E[4:].any()

    def test_width_three_same_padding(self):
        m = Seq2Seq(V, D, widths=(3,), seed=0)
        ids = np.array([START, 4, 6, STOP])
        W = m["W_e.w3"].data
        want = np.zeros((4, D))
        for t in range(4):
            for j in range(3):
                pos = t + j - 1
                if 0 <= pos < 4:
                    want[t] += W[j * V + ids[pos]]
        assert np.allclose(embed_words(m, ids).data, want, rtol=1e-15)

    def test_out_of_range(self, model):
        with pytest.raises(VocabRangeError):
            embed_words(model, [START, V, STOP])

    def test_soft_equals_hard_on_one_hot(self):
        m = Seq2Seq(V, D, widths=(1, 3), seed=2)
        ids = np.array([[START, 5, 9, STOP]])
        hard = m.embed_ids(ids, [4])
        onehot = [Tensor(np.eye(V)[ids[:, t]]) for t in range(4)]
        soft = m.embed_soft(onehot, [4])
        for a, b in zip(hard, soft):
            assert np.allclose(a.data, b.data, rtol=1e-14)


class TestLstm:
    def test_step_matches_formula(self, model):
        rng = np.random.default_rng(0)
        x, h, c = rng.normal(size=D), rng.normal(size=D), rng.normal(size=D)
        Wx, Wh, b = model.lstm_weights("W_l")
        out = lstm_step(Tensor(x), LstmState(Tensor(h), Tensor(c)), (Wx, Wh, b))
        z = x @ Wx.data + h @ Wh.data + b.data
        i, f, g, o = sigmoid(z[:D]), sigmoid(z[D:2 * D]), np.tanh(z[2 * D:3 * D]), sigmoid(z[3 * D:])
        c_new = f * c + i * g
        assert np.allclose(out.c.data, c_new, rtol=1e-14)
        assert np.allclose(out.h.data, o * np.tanh(c_new), rtol=1e-14)

    def test_step_dimension_error(self, model):
        s = LstmState(Tensor(np.zeros(D)), Tensor(np.zeros(D)))
        with pytest.raises(DimensionError):
            lstm_step(Tensor(np.zeros(D + 1)), s, model.lstm_weights("W_l"))

    def test_empty_sequence(self, model):
        with pytest.raises(EmptySequenceError):
            encode_sentence(model, [])
        with pytest.raises(EmptySequenceError):
            model.encode(np.array([[START, STOP]]), [0])

    def test_padding_is_ignored(self, model):
        short = encode_sentence(model, [START, 4, 5, STOP]).data
        long = encode_sentence(model, [START, 4, 5, STOP, PAD, PAD, PAD]).data
        assert np.array_equal(short, long)

    def test_batched_matches_single(self, model):
        ids = np.array([[START, 4, 5, 6, STOP], [START, 7, STOP, PAD, PAD]])
        f = model.encode(ids, [5, 3]).data
        for k, n in enumerate((5, 3)):
            single = encode_sentence(model, ids[k, :n]).data
            assert np.allclose(f[k], single, rtol=1e-14, atol=1e-16)

    def test_hidden_state_bounded(self, model):
        f = encode_sentence(model, [START] + [4, 5, 6] * 5 + [STOP]).data
        assert np.all(np.abs(f) < 1)


class TestDecoder:
    def test_logit_shape(self, model):
        f = encode_sentence(model, [START, 4, STOP])
        logits = decode_sentence(model, f, [START, 5, 6, 7, STOP])
        assert logits.shape == (4, V)

    def test_requires_framing(self, model):
        f = encode_sentence(model, [START, 4, STOP])
        with pytest.raises(ContractError):
            decode_sentence(model, f, [5, 6, STOP])

    def test_teacher_and_greedy_feed_agree_on_first_step(self, model):
        f = encode_sentence(model, [START, 4, STOP])
        a = decode_sentence(model, f, [START, 5, 6, STOP]).data
        b = decode_sentence(model, f, [START, 5, 6, STOP], feed="greedy").data
        assert np.array_equal(a[:1], b[:1])

    def test_greedy_ties_to_lowest_id(self, model):
        model["W_v"].data[:] = 0.0
        model["b_v"].data[:] = 0.0
        model["b_v"].data[[6, 9]] = 1.0
        out = generate(model, encode_sentence(model, [START, 4, STOP]), 5)
        assert out == [[6] * 5]

    def test_greedy_stops_at_stop(self, model):
        model["W_v"].data[:] = 0.0
        model["b_v"].data[:] = 0.0
        model["b_v"].data[STOP] = 1.0
        assert generate(model, encode_sentence(model, [START, 4, STOP]), 7) == [[]]

    def test_greedy_respects_t_max(self, model):
        out = generate(model, encode_sentence(model, [START, 4, STOP]), 3)
        assert len(out[0]) <= 3
        with pytest.raises(ContractError):
            generate(model, encode_sentence(model, [START, 4, STOP]), 0)


class TestDiscriminator:
    def test_rejects_unnormalized(self, model):
        with pytest.raises(ContractError):
            model.discriminate_soft([Tensor(np.full((1, V), 0.5))], [1])

    def test_one_hot_matches_hard(self):
        m = Seq2Seq(V, D, shared=False, discriminator=True, seed=4)
        ids = np.array([[5, 6, STOP]])
        soft = m.discriminate_soft([Tensor(np.eye(V)[ids[:, t]]) for t in range(3)], [3])
        assert np.allclose(soft.data, m.discriminate_hard(ids, [3]).data, rtol=1e-13)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_softmax_outputs_are_accepted(self, seed):
        m = Seq2Seq(V, D, seed=seed % 7)
        rng = np.random.default_rng(seed)
        dists = [nx.softmax(Tensor(rng.normal(size=(2, V)) * 5)) for _ in range(3)]
        assert m.discriminate_soft(dists, [3, 2]).shape == (2, D)
