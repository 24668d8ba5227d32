"""Encoder, decoder and pairwise discriminator networks.

Everything runs batched over rows of a padded id matrix; the single-sentence
helpers (``embed_words``, ``encode_sentence``, ...) are thin wrappers.

Parameter names:

    W_e.w{k}      (k*V) x d   temporal-conv taps, tap j occupies rows j*V..(j+1)*V
    W_l.{Wx,Wh,b} encoder LSTM
    W_dl.{Wx,Wh,b} decoder LSTM
    W_d           V x d       decoder word inputs, row q is W_d applied to one-hot q
    W_v, b_v      V x d, V    output projection
    disc.{Wx,Wh,b} separate discriminator LSTM (non-shared variants only)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import PAD, START, STOP, TokenSeq
from .errors import ContractError, DimensionError, EmptySequenceError, VocabRangeError
from .numerics import Tensor

INIT_SCALE = 0.08
LSTM_PREFIXES = ("W_l", "W_dl", "disc")


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


class Seq2Seq:
    """Parameter container plus the forward passes of the network."""

    def __init__(self, vocab_size, d=60, widths=(1,), shared=True, discriminator=False,
                 seed=0, params=None):
        widths = tuple(sorted(set(int(w) for w in widths)))
        if not widths or any(w < 1 or w % 2 == 0 for w in widths):
            raise ContractError(f"kernel widths must be odd positive integers, got {widths}")
        if vocab_size < 5 or d < 1:
            raise ContractError(f"need vocab_size >= 5 and d >= 1, got V={vocab_size}, d={d}")
        self.V = int(vocab_size)
        self.d = int(d)
        self.widths = widths
        self.shared = bool(shared)
        self.has_disc = bool(discriminator) and not self.shared
        self.params = params if params is not None else self._init_params(seed)
        self._check_shapes()

    # -- parameters ---------------------------------------------------------

    def param_shapes(self):
        V, d = self.V, self.d
        shapes = {f"W_e.w{w}": (w * V, d) for w in self.widths}
        prefixes = ["W_l", "W_dl"] + (["disc"] if self.has_disc else [])
        for p in prefixes:
            shapes[f"{p}.Wx"] = (d, 4 * d)
            shapes[f"{p}.Wh"] = (d, 4 * d)
            shapes[f"{p}.b"] = (4 * d,)
        shapes["W_d"] = (V, d)
        shapes["W_v"] = (V, d)
        shapes["b_v"] = (V,)
        return shapes

    def _init_params(self, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.param_shapes().items():
            if len(shape) == 1:
                data = np.zeros(shape)
            else:
                data = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return params

    def _check_shapes(self):
        want = self.param_shapes()
        if set(want) != set(self.params):
            raise ContractError(f"parameter names {sorted(self.params)} != {sorted(want)}")
        for name, shape in want.items():
            if self.params[name].shape != shape:
                raise DimensionError(f"{name}: shape {self.params[name].shape}, expected {shape}")

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def lstm_weights(self, prefix):
        return (self.params[f"{prefix}.Wx"], self.params[f"{prefix}.Wh"], self.params[f"{prefix}.b"])

    def disc_prefix(self):
        return "disc" if self.has_disc else "W_l"

    def copy(self):
        params = {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()}
        return Seq2Seq(self.V, self.d, self.widths, self.shared, self.has_disc, params=params)

    # -- building blocks ----------------------------------------------------

    def _check_ids(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.V):
            bad = ids[(ids < 0) | (ids >= self.V)][0]
            raise VocabRangeError(f"token id {bad} outside vocabulary of size {self.V}")
        return ids

    def _conv(self, tap, n_pos, lengths):
        """Same-padded temporal convolution summed over all kernel widths.

        ``tap(pos, w, j, valid)`` returns the N x d contribution of tap ``j`` of
        the width-``w`` kernel read at position ``pos`` (rows where ``valid`` is
        0 must come back zeroed).
        """
        lengths = np.asarray(lengths)
        out = []
        for t in range(n_pos):
            here = (t < lengths).astype(np.float64)
            acc = None
            for w in self.widths:
                half = w // 2
                for j in range(w):
                    pos = t + j - half
                    if pos < 0 or pos >= n_pos:
                        continue
                    valid = here * (pos < lengths)
                    if not valid.any():
                        continue
                    term = tap(pos, w, j, valid)
                    acc = term if acc is None else nx.add(acc, term)
            if acc is None:
                acc = Tensor(np.zeros((len(lengths), self.d)))
            out.append(acc)
        return out

    def embed_ids(self, ids, lengths):
        """Hard-token embeddings: list over positions of N x d tensors."""
        ids = self._check_ids(ids)
        V = self.V

        def tap(pos, w, j, valid):
            return nx.gather_rows(self.params[f"W_e.w{w}"], ids[:, pos] + j * V, valid)

        return self._conv(tap, ids.shape[1], lengths)

    def embed_soft(self, dists, lengths):
        """Soft embeddings from per-position distributions (list of N x V tensors)."""
        V = self.V
        blocks = {}
        for w in self.widths:
            table = self.params[f"W_e.w{w}"]
            blocks[w] = [table if w == 1 else nx.slice_rows(table, j * V, (j + 1) * V)
                         for j in range(w)]

        def tap(pos, w, j, valid):
            return nx.mul_const(nx.matmul(dists[pos], blocks[w][j]), valid[:, None])

        return self._conv(tap, len(dists), lengths)

    def lstm_step(self, x, state, weights, mask=None):
        Wx, Wh, b = weights
        if x.shape[-1] != Wx.shape[0]:
            raise DimensionError(f"lstm_step: input {x.shape} does not fit Wx {Wx.shape}")
        z = nx.add_bias(nx.add(nx.matmul(x, Wx), nx.matmul(state.h, Wh)), b)
        out = nx.lstm_cell(z, state.c, state.h, mask)
        return LstmState(nx.slice_last(out, 0, self.d), nx.slice_last(out, self.d, 2 * self.d))

    def zero_state(self, n):
        return LstmState(Tensor(np.zeros((n, self.d))), Tensor(np.zeros((n, self.d))))

    def run_lstm(self, xs, lengths, prefix, state=None):
        """Masked LSTM over a list of N x d inputs; returns the final state."""
        lengths = np.asarray(lengths)
        if len(xs) == 0 or np.any(lengths < 1):
            raise EmptySequenceError("cannot encode an empty sequence")
        weights = self.lstm_weights(prefix)
        state = state or self.zero_state(len(lengths))
        for t, x in enumerate(xs):
            state = self.lstm_step(x, state, weights, t < lengths)
        return state

    # -- network passes -----------------------------------------------------

    def encode(self, ids, lengths, prefix="W_l"):
        """Sentence embeddings f (N x d): final hidden states over the framed ids."""
        ids = np.atleast_2d(ids)
        lengths = np.atleast_1d(lengths)
        width = int(lengths.max())
        return self.run_lstm(self.embed_ids(ids[:, :width], lengths), lengths, prefix).h

    def decode_teacher_forced(self, f, targets, lengths, feed="teacher"):
        """Logits for every next-token prediction, a list of T-1 tensors of N x V.

        Step -1 feeds ``f``; step t feeds the embedding of token t (gold under
        ``teacher``, the previous argmax under ``greedy``) and predicts token t+1.
        """
        targets = self._check_ids(np.atleast_2d(targets))
        lengths = np.atleast_1d(lengths)
        if np.any(targets[:, 0] != START) or np.any(lengths < 2):
            raise ContractError("targets must be framed with START ... STOP")
        rows = np.arange(len(lengths))
        if np.any(targets[rows, lengths - 1] != STOP):
            raise ContractError("targets must be framed with START ... STOP")
        n_steps = int(lengths.max()) - 1
        weights = self.lstm_weights("W_dl")
        state = self.lstm_step(f, self.zero_state(len(lengths)), weights)
        W_vT = nx.transpose(self.params["W_v"])
        b_v = self.params["b_v"]
        logits = []
        prev = targets[:, 0]
        for t in range(n_steps):
            x = nx.gather_rows(self.params["W_d"], prev)
            state = self.lstm_step(x, state, weights, t < lengths - 1)
            step = nx.add_bias(nx.matmul(state.h, W_vT), b_v)
            logits.append(step)
            if feed == "greedy":
                prev = np.argmax(step.data, axis=1)
            else:
                prev = targets[:, t + 1]
        return logits

    def decode_greedy(self, f, t_max):
        """Greedy generation from embeddings f (N x d); returns lists of token ids."""
        if t_max < 1:
            raise ContractError("t_max must be >= 1")
        with nx.no_grad():
            n = f.shape[0]
            weights = self.lstm_weights("W_dl")
            state = self.lstm_step(f, self.zero_state(n), weights)
            W_vT = nx.transpose(self.params["W_v"])
            prev = np.full(n, START)
            out = [[] for _ in range(n)]
            alive = np.ones(n, dtype=bool)
            for _ in range(t_max):
                x = nx.gather_rows(self.params["W_d"], prev)
                state = self.lstm_step(x, state, weights, alive)
                logits = state.h.data @ W_vT.data + self.params["b_v"].data
                prev = np.argmax(logits, axis=1)
                for i in np.flatnonzero(alive):
                    if prev[i] == STOP:
                        alive[i] = False
                    else:
                        out[i].append(int(prev[i]))
                if not alive.any():
                    break
        return out

    def discriminate_soft(self, dists, lengths):
        """f^p from per-step distributions (list of N x V, rows summing to 1)."""
        for p in dists:
            if np.any(np.abs(p.data.sum(axis=-1) - 1.0) > 1e-9):
                raise ContractError("discriminator input rows must sum to 1 (apply softmax first)")
        lengths = np.atleast_1d(lengths)
        return self.run_lstm(self.embed_soft(dists, lengths), lengths, self.disc_prefix()).h

    def discriminate_hard(self, ids, lengths):
        """f^g from gold token ids."""
        return self.encode(ids, lengths, self.disc_prefix())

    def forward(self, batch, need_global=True, feed="teacher"):
        """Encoder -> decoder -> (optionally) discriminator on a corpus Batch."""
        f = self.encode(batch.sources, batch.source_lengths)
        logits = self.decode_teacher_forced(f, batch.targets, batch.target_lengths, feed)
        out = {"f": f, "logits": logits}
        if need_global:
            pred_len = batch.target_lengths - 1
            dists = [nx.softmax(z) for z in logits]
            out["e_p"] = self.discriminate_soft(dists, pred_len)
            out["e_g"] = self.discriminate_hard(batch.targets[:, 1:], pred_len)
        return out


def _seq(ids):
    if isinstance(ids, TokenSeq):
        return ids.ids[None, :max(ids.length, 1)], np.array([ids.length])
    ids = np.asarray(ids, dtype=np.int64)
    n = int(np.count_nonzero(ids != PAD)) if ids.size else 0
    return ids[None, :], np.array([n])


def embed_words(model, ids):
    """L x d embedding matrix of one sequence (PAD rows zero)."""
    arr, lengths = _seq(ids)
    rows = model.embed_ids(arr, lengths)
    return nx.reshape(nx.stack(rows), (len(rows), model.d))


def encode_sentence(model, ids):
    arr, lengths = _seq(ids)
    return nx.reshape(model.encode(arr, lengths), (model.d,))


def lstm_step(x, state, weights):
    """One LSTM cell step on a single d-vector (or an N x d batch)."""
    d = weights[1].shape[0]
    single = x.data.ndim == 1
    if single:
        x = nx.reshape(x, (1, -1))
        state = LstmState(nx.reshape(state.h, (1, d)), nx.reshape(state.c, (1, d)))
    Wx, Wh, b = weights
    if x.shape[1] != Wx.shape[0] or Wh.shape != (d, 4 * d) or b.shape != (4 * d,):
        raise DimensionError(f"lstm_step: x {x.shape}, Wx {Wx.shape}, Wh {Wh.shape}, b {b.shape}")
    z = nx.add_bias(nx.add(nx.matmul(x, Wx), nx.matmul(state.h, Wh)), b)
    out = nx.lstm_cell(z, state.c, state.h)
    h, c = nx.slice_last(out, 0, d), nx.slice_last(out, d, 2 * d)
    if single:
        h, c = nx.reshape(h, (d,)), nx.reshape(c, (d,))
    return LstmState(h, c)


def decode_sentence(model, f, target, feed="teacher"):
    """(framed length - 1) x V logits for one target sequence."""
    arr, lengths = _seq(target)
    steps = model.decode_teacher_forced(nx.reshape(f, (1, model.d)), arr, lengths, feed)
    return nx.reshape(nx.stack(steps), (len(steps), model.V))


def generate(model, f, t_max):
    f = f if f.data.ndim == 2 else nx.reshape(f, (1, model.d))
    return model.decode_greedy(f, t_max)
