"""Five-class sentiment head on frozen sentence embeddings, plus gradient saliency."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import frame, tokenize
from .errors import ContractError
from .numerics import Tensor
from .training import OptimizerState, rmsprop_step

log = logging.getLogger(__name__)

N_CLASSES = 5


@dataclass
class HeadConfig:
    learning_rate: float = 0.00009
    batch_size: int = 200
    alpha: float = 0.9
    epsilon: float = 1e-8
    epochs: int = 200
    seed: int = 0


class SentimentHead:
    """Multinomial logistic regression ``softmax(W f + b)``."""

    def __init__(self, d, W=None, b=None):
        self.W = Tensor(np.zeros((N_CLASSES, d)) if W is None else W, requires_grad=True, name="W")
        self.b = Tensor(np.zeros(N_CLASSES) if b is None else b, requires_grad=True, name="b")
        if self.W.shape != (N_CLASSES, d) or self.b.shape != (N_CLASSES,):
            raise ContractError(f"head shapes W {self.W.shape}, b {self.b.shape} do not fit d={d}")

    @property
    def d(self):
        return self.W.shape[1]

    def params(self):
        return {"W": self.W, "b": self.b}

    def logits(self, f):
        return nx.add_bias(nx.matmul(f, nx.transpose(self.W)), self.b)

    def probabilities(self, X):
        with nx.no_grad():
            return nx.softmax(self.logits(Tensor(np.atleast_2d(X)))).data


def _framed(model, vocab, phrase, max_len):
    tokens = tokenize(phrase) if isinstance(phrase, str) else list(phrase)
    seq = frame(tokens, vocab, max_len)
    return seq.ids[:seq.length], seq.length


def embed_phrase(phrase, model, vocab, max_len=64):
    """Sentence embedding (d,) of a phrase under the encoder, computed without recording."""
    ids, n = _framed(model, vocab, phrase, max_len)
    with nx.no_grad():
        return model.encode(ids[None, :], [n]).data[0].copy()


def embed_phrases(phrases, model, vocab, max_len=64):
    if not phrases:
        return np.zeros((0, model.d))
    seqs = [_framed(model, vocab, p, max_len) for p in phrases]
    width = max(n for _, n in seqs)
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    for i, (row, n) in enumerate(seqs):
        ids[i, :n] = row
    with nx.no_grad():
        return model.encode(ids, [n for _, n in seqs]).data.copy()


def head_loss(head, X, y):
    """Mean softmax cross-entropy of the head on embeddings X (N x d)."""
    X = X if isinstance(X, Tensor) else Tensor(X)
    y = np.asarray(y, dtype=np.int64)
    lp = nx.log_softmax(head.logits(X))
    return nx.scale(nx.sum(nx.pick(lp, y)), -1.0 / len(y))


def train_head_on_embeddings(X, y, config=None, head=None, history=None):
    """RMSProp on a zero-initialized head over fixed embeddings."""
    config = config or HeadConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ContractError("no training examples")
    if np.any((y < 0) | (y >= N_CLASSES)):
        raise ContractError(f"labels must lie in 0..{N_CLASSES - 1}")
    if len(np.unique(y)) < 2:
        log.warning("degenerate data: every example has label %d", y[0])
    head = head or SentimentHead(X.shape[1])
    state = OptimizerState()
    rng = np.random.default_rng([config.seed, 2])
    for _ in range(config.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            with nx.Graph() as g:
                loss = head_loss(head, X[idx], y[idx])
            head.W.grad = head.b.grad = None
            g.backward(loss, [head.W, head.b])
            rmsprop_step(head.params(), {"W": head.W.grad, "b": head.b.grad}, state,
                         config.learning_rate, config.alpha, config.epsilon)
        if history is not None:
            with nx.no_grad():
                history.append(float(head_loss(head, X, y).data))
    return head


def train_head(examples, model, vocab, config=None, max_len=64, history=None):
    """Fit a head on frozen encoder embeddings of PhraseExample records."""
    if not examples:
        raise ContractError("no training examples")
    X = embed_phrases([e.phrase for e in examples], model, vocab, max_len)
    y = [e.sentiment for e in examples]
    return train_head_on_embeddings(X, y, config, history=history)


def predict(phrase, model, vocab, head, max_len=64):
    """Five class probabilities; argmax (lowest index on ties) is the label."""
    return head.probabilities(embed_phrase(phrase, model, vocab, max_len))[0]


def predict_label(probs):
    return int(np.argmax(probs))


@dataclass
class SaliencyMap:
    tokens: list
    values: np.ndarray
    word_scores: np.ndarray
    predicted: int


def saliency(phrase, model, vocab, head, max_len=64, mode="logprob"):
    """Absolute gradient of the winning class w.r.t. each word's embedding (L x d).

    ``mode="logprob"`` differentiates the predicted class's log-probability;
    ``mode="score"`` differentiates its raw score ``W_c . f + b_c``, which
    scales linearly with the head weights.
    """
    if mode not in ("logprob", "score"):
        raise ContractError("mode must be 'logprob' or 'score'")
    tokens = tokenize(phrase) if isinstance(phrase, str) else list(phrase)
    tokens = tokens[:max_len - 2]
    if not tokens:
        return SaliencyMap([], np.zeros((0, model.d)), np.zeros(0), predict_label(
            head.probabilities(embed_phrase("", model, vocab, max_len))[0]))
    ids, n = _framed(model, vocab, tokens, max_len)
    with nx.no_grad():
        rows = model.embed_ids(ids[None, :], [n])
    leaves = [Tensor(r.data, requires_grad=True) for r in rows]
    with nx.Graph() as g:
        f = model.run_lstm(leaves, np.array([n]), "W_l").h
        logits = head.logits(f)
        c = int(np.argmax(logits.data[0]))
        target = nx.log_softmax(logits) if mode == "logprob" else logits
        out = nx.sum(nx.pick(target, [c]))
    g.backward(out, leaves)
    grads = np.vstack([t.grad for t in leaves[1:n - 1]])
    values = np.abs(grads)
    return SaliencyMap(tokens, values, np.linalg.norm(grads, axis=1), c)
