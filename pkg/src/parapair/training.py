"""RMSProp training loop over the eight loss/sharing variants."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import ContractError, TrainingAborted
from .losses import LossReport, batch_objective, hinge_matrix, local_ce_rows, ranking_accuracy
from .model import Seq2Seq
from .variants import VARIANT_NAMES, VariantSpec, variant

log = logging.getLogger(__name__)

DECODER_SIDE = ("W_d", "W_dl.", "W_v", "b_v")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0008
    batch_size: int = 150
    alpha: float = 0.99
    epsilon: float = 1e-8
    decay_a: int = 1500
    decay_b: int = 1250
    epochs: int = 1
    seed: int = 0
    variant: str = "EDLPS"
    decoder_feed: str = "teacher"
    max_len: int = 26
    vocab_size: int = 8000
    min_freq: int = 1
    d: int = 60
    widths: tuple = (1,)
    clip_norm: float = 5.0
    t_max: int = 24

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self.variant = variant(self.variant).name
        self.validate()

    def validate(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be > 0")
        if not 0 < self.alpha < 1:
            raise ContractError("alpha must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ContractError("epsilon must be > 0")
        if self.decay_a < 1 or self.decay_b < 1:
            raise ContractError("decay_a and decay_b must be >= 1")
        if self.decoder_feed not in ("teacher", "greedy"):
            raise ContractError("decoder_feed must be 'teacher' or 'greedy'")
        if self.batch_size < 1 or (self.spec.uses_global and self.batch_size < 2):
            raise ContractError("batch_size must be >= 2 when the pairwise loss is used")
        if self.epochs < 0 or self.max_len < 2 or self.d < 1:
            raise ContractError("epochs >= 0, max_len >= 2 and d >= 1 are required")

    @property
    def spec(self) -> VariantSpec:
        return variant(self.variant)

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["widths"] = list(self.widths)
        return out

    @classmethod
    def from_mapping(cls, values):
        """Build from string or typed values, coercing by field type."""
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in values.items():
            if key not in kinds:
                raise ContractError(f"unknown config key {key!r}")
            kind = kinds[key]
            if not isinstance(raw, str):
                kw[key] = tuple(raw) if kind == "tuple" else raw
            elif kind == "int":
                kw[key] = int(raw)
            elif kind == "float":
                kw[key] = float(raw)
            elif kind == "tuple":
                kw[key] = tuple(int(x) for x in raw.replace(",", " ").split())
            else:
                kw[key] = raw
        return cls(**kw)


def build_model(config, vocab_size):
    spec = config.spec
    return Seq2Seq(vocab_size, d=config.d, widths=config.widths,
                   shared=spec.shared_discriminator, discriminator=spec.separate_discriminator,
                   seed=config.seed)


# -- optimizer --------------------------------------------------------------

@dataclass
class OptimizerState:
    s: dict = field(default_factory=dict)
    step: int = 0


def rmsprop_step(params, grads, state, lr, alpha=0.99, epsilon=1e-8):
    """In-place RMSProp update of a ``name -> Tensor`` mapping.

    s <- alpha*s + (1-alpha)*g^2 ; p <- p - lr*g/(sqrt(s) + epsilon)
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient for parameter {name!r} at step {state.step + 1}")
    for name, g in grads.items():
        p = params[name]
        s = state.s.get(name)
        if s is None:
            s = np.zeros_like(p.data)
        s = alpha * s + (1.0 - alpha) * g * g
        state.s[name] = s
        p.data -= lr * g / (np.sqrt(s) + epsilon)
    state.step += 1


def decay_factor(a, b):
    """Per-epoch multiplicative learning-rate decay exp(ln(0.1) / (a*b))."""
    if a < 1 or b < 1:
        raise ContractError("a and b must be >= 1")
    return math.exp(math.log(0.1) / (a * b))


def lr_at_epoch(lr0, a, b, epoch):
    # composed in the log domain so long schedules do not accumulate rounding
    if a < 1 or b < 1:
        raise ContractError("a and b must be >= 1")
    return lr0 * math.exp(epoch * math.log(0.1) / (a * b))


def clip_gradients(grads, max_norm):
    """Scale ``grads`` in place to global L2 norm ``max_norm``; returns (norm, clipped)."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        k = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * k
        return norm, True
    return norm, False


# -- epoch loop -------------------------------------------------------------

@dataclass
class TrainState:
    optimizer: OptimizerState
    rng: np.random.Generator
    epoch: int = 0


def new_state(config):
    return TrainState(OptimizerState(), np.random.default_rng([config.seed, 1]))


def _is_decoder_side(name):
    return any(name == p or name.startswith(p) for p in DECODER_SIDE)


def batch_losses(model, batch, spec, feed="teacher"):
    """Forward pass; returns (local_rows or None, hinge matrix or None, outputs)."""
    out = model.forward(batch, need_global=spec.uses_global, feed=feed)
    local_rows = None
    if spec.uses_local or spec.adversarial_alternation:
        local_rows = local_ce_rows(out["logits"], batch.targets, batch.target_lengths)
    hinge = hinge_matrix(out["e_p"], out["e_g"]) if spec.uses_global else None
    return local_rows, hinge, out


def train_step(model, batch, config, state, log_sink=None):
    """One optimizer update on ``batch``; returns its LossReport."""
    spec = config.spec
    lr = lr_at_epoch(config.learning_rate, config.decay_a, config.decay_b, state.epoch)
    with nx.Graph() as graph:
        local_rows, hinge, out = batch_losses(model, batch, spec, config.decoder_feed)
        obj, report = batch_objective(local_rows if spec.uses_local else None, hinge, spec)
        names = list(model.params)
        if spec.adversarial_alternation:
            n = batch.size
            decoder_turn = (state.optimizer.step + 1) % 2 == 1
            if decoder_turn and spec.uses_local:
                obj = nx.scale(nx.sum(local_rows), 1.0 / n)
            else:
                obj = nx.scale(nx.sum(hinge), 1.0 / n)
            names = [k for k in names if _is_decoder_side(k) == decoder_turn]
    for p in model.parameters():
        p.grad = None
    graph.backward(obj, model.parameters())
    grads = {k: model.params[k].grad for k in names}
    norm, clipped = clip_gradients(grads, config.clip_norm)
    if clipped:
        log.debug("step %d: gradient norm %.4g clipped to %.4g", state.optimizer.step + 1, norm,
                  config.clip_norm)
    rmsprop_step(model.params, grads, state.optimizer, lr, config.alpha, config.epsilon)
    if log_sink is not None:
        line = {"step": state.optimizer.step, "epoch": state.epoch + 1, "variant": spec.name,
                "local": report.local, "global": report.global_, "total": report.total,
                "active_hinges": report.active_hinges, "lr": lr, "grad_norm": norm,
                "clipped": clipped}
        log_sink.write(json.dumps(line) + "\n")
    if spec.uses_global:
        report.ranking_accuracy = ranking_accuracy(out["e_p"], out["e_g"])
    return report


@dataclass
class EpochSummary:
    epoch: int
    steps: int
    local: float
    global_: float
    total: float
    effective: float
    active_hinges: int
    lr: float
    skipped: int = 0
    ranking_accuracy: float | None = None


def train_epoch(model, data, config, state, log_sink=None):
    """One pass over seeded-shuffled minibatches of ``data`` (a corpus Batch)."""
    spec = config.spec
    order = state.rng.permutation(data.size)
    bs = config.batch_size
    reports, sizes, skipped = [], [], 0
    for start in range(0, data.size, bs):
        idx = np.sort(order[start:start + bs])
        if spec.uses_global and len(idx) < 2:
            skipped += 1
            log.warning("skipping batch of size %d: the pairwise loss needs at least 2", len(idx))
            continue
        reports.append(train_step(model, data.rows(idx), config, state, log_sink))
        sizes.append(len(idx))
    lr = lr_at_epoch(config.learning_rate, config.decay_a, config.decay_b, state.epoch)
    state.epoch += 1
    w = np.asarray(sizes, dtype=np.float64)
    w = w / w.sum() if len(w) else w

    def avg(key):
        return float(sum(wi * getattr(r, key) for wi, r in zip(w, reports)))

    acc = avg("ranking_accuracy") if spec.uses_global and reports else None
    return EpochSummary(state.epoch, len(reports), avg("local"), avg("global_"), avg("total"),
                        avg("effective"), int(sum(r.active_hinges for r in reports)), lr, skipped,
                        acc)


def evaluate_losses(model, data, spec):
    """Loss report of the whole of ``data`` as one batch, without updating anything."""
    with nx.no_grad():
        local_rows, hinge, out = batch_losses(model, data, spec)
        _, report = batch_objective(local_rows if spec.uses_local else None, hinge, spec)
    if local_rows is not None:
        report.local = float(local_rows.data.mean())
    if spec.uses_global:
        report.ranking_accuracy = ranking_accuracy(out["e_p"], out["e_g"])
    return report


def train(model, data, config, log_sink=None, on_epoch=None, state=None):
    """Run ``config.epochs`` epochs; ``on_epoch(summary, state)`` is called after each."""
    state = state or new_state(config)
    history = []
    for _ in range(config.epochs):
        summary = train_epoch(model, data, config, state, log_sink)
        history.append(summary)
        if on_epoch is not None:
            on_epoch(summary, state)
    return history


__all__ = [
    "VARIANT_NAMES", "TrainConfig", "OptimizerState", "TrainState", "LossReport", "EpochSummary",
    "build_model", "rmsprop_step", "decay_factor", "lr_at_epoch", "clip_gradients", "new_state",
    "train_step", "train_epoch", "evaluate_losses", "train", "variant",
]
