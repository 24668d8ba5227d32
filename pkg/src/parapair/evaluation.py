"""Corpus-level generation metrics and the Nemenyi post-hoc test.

Every metric takes ``pairs``: a sequence of ``(hypothesis, references)`` where
the hypothesis is a token list and references is a list of token lists.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import kernels
from .errors import AlignmentError, ContractError, UndefinedMetricError


class TableRangeError(ContractError):
    """A lookup falls outside an embedded table."""


def _check_pairs(pairs):
    pairs = [(list(h), [list(r) for r in refs]) for h, refs in pairs]
    if not pairs:
        raise UndefinedMetricError("metric is undefined for an empty hypothesis set")
    for _, refs in pairs:
        if not refs or not any(refs):
            raise UndefinedMetricError("each pair needs at least one non-empty reference")
    return pairs


def _interned(*seqs):
    """Map arbitrary hashable tokens to small ints so the kernels can compare them."""
    table = {}
    return [[table.setdefault(t, len(table)) for t in seq] for seq in seqs]


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# -- BLEU -------------------------------------------------------------------

def bleu(pairs, n=4):
    """Corpus BLEU-n with clipped counts, add-one smoothing on zero-match orders,
    and brevity penalty against the closest reference length."""
    if n < 1:
        raise ContractError("BLEU order must be >= 1")
    pairs = _check_pairs(pairs)
    matches = [0] * n
    totals = [0] * n
    hyp_len = ref_len = 0
    for hyp, refs in pairs:
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for k in range(1, n + 1):
            counts = ngrams(hyp, k)
            max_ref = Counter()
            for r in refs:
                max_ref |= ngrams(r, k)
            matches[k - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[k - 1] += sum(counts.values())
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, c in zip(matches, totals):
        log_p += math.log((m + 1) / (c + 1)) if m == 0 else math.log(m / c)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p / n)


# -- ROUGE-L ----------------------------------------------------------------

def _rouge_pair(hyp, ref):
    if not hyp or not ref:
        return 0.0
    lcs = kernels.lcs_length(*_interned(hyp, ref))
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return 2 * p * r / (p + r)


def rouge_l(pairs):
    """Mean over pairs of the best-reference LCS F-measure."""
    pairs = _check_pairs(pairs)
    return sum(max(_rouge_pair(h, r) for r in refs) for h, refs in pairs) / len(pairs)


# -- METEOR-lite ------------------------------------------------------------

_SUFFIXES = ("ing", "ed", "es", "s")
_VOWELS = set("aeiou")


def stem(word):
    """Strip one of ing/ed/es/s and undouble a trailing consonant (running -> run)."""
    for suf in _SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 2:
            base = word[: -len(suf)]
            if suf in ("ing", "ed") and len(base) >= 3 and base[-1] == base[-2] \
                    and base[-1] not in _VOWELS and base[-1] not in "ls":
                base = base[:-1]
            return base
    return word


def _align(hyp, ref):
    """Exact matches first, then stem matches; greedy left to right.

    Returns the list of (hyp_index, ref_index) pairs sorted by hyp index.
    """
    used_h, used_r, links = set(), set(), []
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in ref]
        for i, tok in enumerate(hyp):
            if i in used_h:
                continue
            k = key(tok)
            for j, rk in enumerate(ref_keys):
                if j not in used_r and rk == k:
                    used_h.add(i)
                    used_r.add(j)
                    links.append((i, j))
                    break
    return sorted(links)


def _meteor_pair(hyp, ref):
    links = _align(hyp, ref)
    m = len(links)
    if m == 0:
        return 0.0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(links, links[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    p, r = m / len(hyp), m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1.0 - 0.5 * (chunks / m) ** 3)


def meteor_lite(pairs):
    pairs = _check_pairs(pairs)
    return sum(max(_meteor_pair(h, r) for r in refs) for h, refs in pairs) / len(pairs)


# -- CIDEr ------------------------------------------------------------------

def _cosine(u, v):
    if u and u == v:
        return 1.0
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0 or nv == 0:
        return 0.0
    return sum(x * v.get(g, 0.0) for g, x in u.items()) / (nu * nv)


def cider(pairs, corpus=None):
    """Mean over pairs of 10 x the order-averaged (1..4) TF-IDF cosine to each reference.

    ``corpus`` is the list of reference sets (documents) used for document
    frequencies; defaults to the references of ``pairs``.  IDF is
    ``ln(|corpus| / (1 + df))``.  Identical non-empty vectors score 1 even when
    every weight is zero; an order with no n-grams on either side scores 0.
    """
    pairs = _check_pairs(pairs)
    docs = [refs for _, refs in pairs] if corpus is None else [[list(r) for r in d] for d in corpus]
    if not docs:
        raise UndefinedMetricError("CIDEr needs a non-empty reference corpus")
    n_docs = len(docs)
    df = [Counter() for _ in range(4)]
    for refs in docs:
        for k in range(4):
            seen = set()
            for r in refs:
                seen.update(ngrams(r, k + 1))
            df[k].update(seen)

    def vec(tokens, k):
        return {g: c * math.log(n_docs / (1.0 + df[k][g])) for g, c in ngrams(tokens, k + 1).items()}

    total = 0.0
    for hyp, refs in pairs:
        score = 0.0
        for k in range(4):
            hv = vec(hyp, k)
            score += sum(_cosine(hv, vec(r, k)) for r in refs) / len(refs)
        total += 10.0 * score / 4
    return total / len(pairs)


# -- TER --------------------------------------------------------------------

def ter_edits(hyp, ref):
    """Greedy shift count plus residual edit distance for one reference."""
    shifts, dist = kernels.ter_greedy(*_interned(hyp, ref))
    return shifts + dist


def ter(pairs):
    """Total edits over total average reference length (lower is better)."""
    pairs = [(list(h), [list(r) for r in refs]) for h, refs in pairs]
    if not pairs:
        raise UndefinedMetricError("metric is undefined for an empty hypothesis set")
    edits = ref_len = 0.0
    for hyp, refs in pairs:
        if not refs or any(len(r) == 0 for r in refs):
            raise UndefinedMetricError("TER is undefined for an empty reference")
        edits += min(ter_edits(hyp, r) for r in refs)
        ref_len += sum(len(r) for r in refs) / len(refs)
    return edits / ref_len


# -- corpus report ----------------------------------------------------------

@dataclass
class MetricReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    rouge_l: float
    meteor_lite: float
    cider: float
    ter: float
    n_pairs: int = 0
    ter_lower_is_better: bool = True

    def as_dict(self):
        return asdict(self)


def make_pairs(hyps, refs):
    """Zip hypotheses with references, accepting one reference or a list per item."""
    if len(hyps) != len(refs):
        raise AlignmentError(f"{len(hyps)} hypotheses but {len(refs)} references")
    out = []
    for h, r in zip(hyps, refs):
        r = list(r)
        multi = bool(r) and isinstance(r[0], (list, tuple))
        out.append((list(h), [list(x) for x in r] if multi else [r]))
    return out


def evaluate_corpus(hyps, refs, corpus=None):
    pairs = make_pairs(hyps, refs)
    return MetricReport(
        bleu_1=bleu(pairs, 1), bleu_2=bleu(pairs, 2), bleu_3=bleu(pairs, 3), bleu_4=bleu(pairs, 4),
        rouge_l=rouge_l(pairs), meteor_lite=meteor_lite(pairs), cider=cider(pairs, corpus),
        ter=ter(pairs), n_pairs=len(pairs))


# -- Nemenyi ----------------------------------------------------------------

# Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt 2), k = 2..10.
Q_TABLE = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


def q_alpha(k, alpha=0.05):
    if alpha not in Q_TABLE:
        raise TableRangeError(f"alpha must be one of {sorted(Q_TABLE)}, got {alpha}")
    if not 2 <= k <= 10:
        raise TableRangeError(f"the q table covers 2..10 methods, got k={k}")
    return Q_TABLE[alpha][k - 2]


def nemenyi_cd(k, n_datasets, alpha=0.05):
    """Critical difference q_alpha * sqrt(k (k + 1) / (6 N))."""
    if n_datasets < 1:
        raise ContractError("n_datasets must be >= 1")
    return q_alpha(k, alpha) * math.sqrt(k * (k + 1) / (6.0 * n_datasets))


def average_ranks(scores, higher_is_better=True):
    """Mean rank per method (column) over datasets (rows); rank 1 is best, ties averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ContractError("scores must be a datasets x methods matrix")
    ranks = stats.rankdata(-scores if higher_is_better else scores, axis=1)
    return ranks.mean(axis=0)


def nemenyi_test(scores, methods, alpha=0.05, higher_is_better=True):
    """Average ranks, CD, and which method pairs differ by more than CD."""
    scores = np.asarray(scores, dtype=np.float64)
    n, k = scores.shape
    if len(methods) != k:
        raise AlignmentError(f"{len(methods)} method names for {k} score columns")
    ranks = average_ranks(scores, higher_is_better)
    cd = nemenyi_cd(k, n, alpha)
    verdicts = []
    for a in range(k):
        for b in range(a + 1, k):
            diff = abs(float(ranks[a] - ranks[b]))
            verdicts.append({"a": methods[a], "b": methods[b], "rank_difference": diff,
                             "significant": diff > cd})
    out = {"cd": cd, "alpha": alpha, "n_datasets": n, "k": k,
           "average_ranks": {m: float(r) for m, r in zip(methods, ranks)}, "pairs": verdicts}
    if k >= 3 and n >= 2:
        spread = np.ptp(scores, axis=1)
        if np.any(spread > 0):
            out["friedman_p"] = float(stats.friedmanchisquare(*scores.T).pvalue)
    return out
