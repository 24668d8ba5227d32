"""Token cross-entropy, the batch pairwise margin loss, and their composition."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import numerics as nx
from .corpus import TokenSeq
from .errors import ContractError, DimensionError, EmptySequenceError
from .numerics import Tensor
from .variants import variant as _variant

MARGIN = 1.0


@dataclass
class LossReport:
    local: float
    global_: float
    total: float
    active_hinges: int = 0
    global_raw: float = 0.0
    effective: float = 0.0
    margin: float = MARGIN
    ranking_accuracy: float | None = None

    def as_dict(self):
        out = asdict(self)
        out["global"] = out.pop("global_")
        return out


# -- local loss -------------------------------------------------------------

def local_ce_rows(logits, targets, lengths):
    """Per-example mean token cross-entropy, an (N,) tensor.

    ``logits`` is the decoder output (list of N x V step tensors, or a
    T x N x V tensor); step t scores target token t+1.  Positions at or past
    ``length - 1`` are masked out.
    """
    z = logits if isinstance(logits, Tensor) else nx.stack(logits)
    n_steps = z.shape[0]
    targets = np.atleast_2d(targets)
    lengths = np.atleast_1d(lengths)
    counts = lengths - 1
    if np.any(counts < 1):
        raise EmptySequenceError("target has no tokens to predict")
    if np.any(counts > n_steps):
        raise DimensionError(f"{n_steps} logit steps cannot cover targets of length {lengths.max()}")
    gold = np.zeros((n_steps, len(lengths)), dtype=np.int64)
    width = min(n_steps, targets.shape[1] - 1)
    gold[:width] = targets[:, 1:1 + width].T
    steps = np.arange(n_steps)[:, None]
    weight = (steps < counts[None, :]) / counts[None, :]
    picked = nx.pick(nx.log_softmax(z), gold)
    return nx.sum_axis(nx.mul_const(picked, -weight), 0)


def local_ce(logits, target):
    """Mean negative log-likelihood of one framed target under T x V logits (a scalar tensor)."""
    if isinstance(target, TokenSeq):
        ids, length = target.ids, target.length
    else:
        ids = np.asarray(target, dtype=np.int64)
        length = len(ids)
    if length < 2:
        raise EmptySequenceError("target has no tokens to predict")
    z = nx.reshape(logits, (logits.shape[0], 1, logits.shape[1]))
    return nx.reshape(local_ce_rows(z, ids[None, :], [length]), ())


# -- global loss ------------------------------------------------------------

def _check_pair(e_p, e_g):
    if e_p.data.ndim != 2 or e_p.shape != e_g.shape:
        raise DimensionError(f"embedding matrices disagree: e_p {e_p.shape} vs e_g {e_g.shape}")
    if e_p.shape[0] < 1:
        raise DimensionError("need at least one embedding row")


def hinge_matrix(e_p, e_g):
    """H[i, j] = max(0, f_i^p . f_j^g - f_i^p . f_i^g + margin); the diagonal is exactly margin."""
    _check_pair(e_p, e_g)
    s = nx.matmul(e_p, nx.transpose(e_g))
    return nx.relu_hinge(nx.add_scalar(nx.sub_col(s, nx.diag(s)), MARGIN))


def global_pairwise(e_p, e_g):
    """Sum over all (i, j), diagonal included, of the margin hinge."""
    return nx.sum(hinge_matrix(e_p, e_g))


def active_hinges(e_p, e_g):
    """Count of off-diagonal pairs whose hinge argument is positive."""
    ep = np.asarray(getattr(e_p, "data", e_p))
    eg = np.asarray(getattr(e_g, "data", e_g))
    s = ep @ eg.T
    arg = s - np.diag(s)[:, None] + MARGIN
    np.fill_diagonal(arg, 0.0)
    return int(np.count_nonzero(arg > 0))


def global_pairwise_grad_closed_form(e_p, e_g, check=False):
    """Gradients of the pairwise loss valid when every off-diagonal hinge is active.

    Row i of dL/de_p is sum_{j != i}(f_j^g - f_i^g); row i of dL/de_g is
    sum_{j != i}(f_j^p - f_i^p).
    """
    ep = np.asarray(getattr(e_p, "data", e_p), dtype=np.float64)
    eg = np.asarray(getattr(e_g, "data", e_g), dtype=np.float64)
    if ep.shape != eg.shape:
        raise DimensionError(f"embedding matrices disagree: {ep.shape} vs {eg.shape}")
    n = ep.shape[0]
    if check and active_hinges(ep, eg) != n * (n - 1):
        raise ContractError("closed form needs every off-diagonal hinge active")
    d_ep = eg.sum(axis=0) - n * eg
    d_eg = ep.sum(axis=0) - n * ep
    return d_ep, d_eg


def ranking_accuracy(e_p, e_g):
    """Share of rows whose own gold embedding strictly outscores every other one."""
    ep = np.asarray(getattr(e_p, "data", e_p))
    eg = np.asarray(getattr(e_g, "data", e_g))
    s = ep @ eg.T
    n = s.shape[0]
    if n < 2:
        return 1.0
    own = np.diag(s).copy()
    np.fill_diagonal(s, -np.inf)
    return float(np.mean(own > s.max(axis=1)))


# -- composition ------------------------------------------------------------

def total_loss(reports, variant):
    """(1/M) * sum over examples of the variant's active terms.

    ``reports`` are per-example LossReports whose ``global_`` is that
    example's row of the pairwise sum.
    """
    spec = _variant(variant)
    reports = list(reports)
    if not reports:
        raise ContractError("no reports to combine")
    acc = 0.0
    for r in reports:
        if spec.uses_local:
            if r.local is None:
                raise ContractError(f"{spec.name} needs the local loss")
            acc += r.local
        if spec.uses_global:
            if r.global_ is None:
                raise ContractError(f"{spec.name} needs the global loss")
            acc += r.global_
    return acc / len(reports)


def batch_objective(local_rows, hinge, spec):
    """Differentiable summed objective for one batch plus its LossReport.

    ``local_rows`` is the (N,) per-example local loss tensor (or None);
    ``hinge`` the N x N hinge matrix (or None).
    """
    terms = []
    n = None
    local_v = global_raw = 0.0
    hinges = 0
    if spec.uses_local:
        if local_rows is None:
            raise ContractError(f"{spec.name} needs the local loss")
        n = local_rows.shape[0]
        local_sum = nx.sum(local_rows)
        local_v = float(local_sum.data) / n
        terms.append(local_sum)
    if spec.uses_global:
        if hinge is None:
            raise ContractError(f"{spec.name} needs the global loss")
        n = hinge.shape[0]
        g_sum = nx.sum(hinge)
        global_raw = float(g_sum.data)
        h = hinge.data.copy()
        np.fill_diagonal(h, 0.0)
        hinges = int(np.count_nonzero(h > 0))
        terms.append(g_sum)
    if not terms:
        raise ContractError(f"{spec.name} has no active loss term")
    obj = terms[0] if len(terms) == 1 else nx.add(terms[0], terms[1])
    obj = nx.scale(obj, 1.0 / n)
    report = LossReport(local=local_v, global_=global_raw / n, total=float(obj.data),
                        active_hinges=hinges, global_raw=global_raw,
                        effective=global_raw - n if spec.uses_global else 0.0)
    return obj, report
