"""Pure-Python / numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``PARAPAIR_PURE=1`` is set).
"""

from collections import Counter

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def lstm_forward(z, c_prev, h_prev, mask):
    """Fused LSTM pointwise stage.

    ``z`` holds the pre-activations ``[i | f | g | o]`` (N x 4d).  Rows whose
    ``mask`` entry is 0 carry ``(h_prev, c_prev)`` through unchanged.
    Returns the packed ``[h | c]`` (N x 2d) and a cache for the backward pass.
    """
    d = c_prev.shape[1]
    i = _sigmoid(z[:, :d])
    f = _sigmoid(z[:, d:2 * d])
    g = np.tanh(z[:, 2 * d:3 * d])
    o = _sigmoid(z[:, 3 * d:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    keep = mask.astype(bool)
    out = np.empty((z.shape[0], 2 * d))
    out[:, :d] = np.where(keep[:, None], h, h_prev)
    out[:, d:] = np.where(keep[:, None], c, c_prev)
    return out, (i, f, g, o, tc, c_prev, keep)


def lstm_backward(gout, cache):
    i, f, g, o, tc, c_prev, keep = cache
    d = c_prev.shape[1]
    gh = gout[:, :d]
    gc = gout[:, d:]
    k = keep[:, None]
    gh_in = np.where(k, gh, 0.0)
    dc = np.where(k, gc, 0.0) + gh_in * o * (1.0 - tc * tc)
    dz = np.empty((gout.shape[0], 4 * d))
    dz[:, :d] = dc * g * i * (1.0 - i)
    dz[:, d:2 * d] = dc * c_prev * f * (1.0 - f)
    dz[:, 2 * d:3 * d] = dc * i * (1.0 - g * g)
    dz[:, 3 * d:] = gh_in * tc * o * (1.0 - o)
    dc_prev = np.where(k, dc * f, gc)
    dh_prev = np.where(k, 0.0, gh)
    return dz, dc_prev, dh_prev


def levenshtein(a, b):
    """Unit-cost insert/delete/substitute distance between two id sequences."""
    a = list(a)
    b = list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for x in a:
        cur = [prev[0] + 1]
        for j, y in enumerate(b):
            cur.append(min(prev[j + 1] + 1, cur[j] + 1, prev[j] + (x != y)))
        prev = cur
    return prev[-1]


def lcs_length(a, b):
    a = list(a)
    b = list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _shift_candidates(seq):
    n = len(seq)
    for i in range(n):
        for j in range(i + 1, n + 1):
            span = seq[i:j]
            rest = seq[:i] + seq[j:]
            for k in range(len(rest) + 1):
                if k == i:
                    continue
                yield rest[:k] + span + rest[k:]


def shift_floor(a, b):
    """Lower bound on the edit distance reachable by any shifts of ``a``.

    Shifts keep the token multiset, so at most ``|bag(a) & bag(b)|`` positions
    can ever match.
    """
    common = Counter(a) & Counter(b)
    return max(len(a), len(b)) - sum(common.values())


def _best_after_one_shift(seq, ref, floor):
    best = levenshtein(seq, ref)
    for cand in _shift_candidates(seq):
        if best <= floor:
            break
        best = min(best, levenshtein(cand, ref))
    return best


def ter_greedy(hyp, ref, lookahead=True):
    """Greedy block-shift search.

    Each round scores every single shift of the current hypothesis.  Without
    lookahead the score is the resulting edit distance and the shift is kept
    if it lowers the distance at all.  With lookahead, shifts that do not
    raise the distance are scored by the best distance reachable with one
    further shift, and a shift is kept only if the one-or-two-shift plan
    beats the current distance.  Ties go to the first candidate in
    (start, end, destination) order.

    Returns ``(shifts, residual_distance)``.
    """
    cur = list(hyp)
    ref = list(ref)
    dist = levenshtein(cur, ref)
    floor = shift_floor(cur, ref)
    shifts = 0
    for _ in range(2 * max(len(cur), len(ref)) + 2):
        if dist <= floor:
            break
        best = None
        best_v = best_d = None
        seen = set()
        for cand in _shift_candidates(cur):
            key = tuple(cand)
            if key in seen:
                continue
            seen.add(key)
            dd = levenshtein(cand, ref)
            if not lookahead:
                if best is None or dd < best_d:
                    best, best_v, best_d = cand, dd, dd
                continue
            lb = min(dd, 1 + floor)
            if best is not None and (lb > best_v or (lb == best_v and dd >= best_d)):
                continue
            v = dd
            if 1 + floor < dd <= dist:
                v = min(dd, 1 + _best_after_one_shift(cand, ref, floor))
            if best is None or v < best_v or (v == best_v and dd < best_d):
                best, best_v, best_d = cand, v, dd
        if best is None:
            break
        if lookahead:
            if 1 + best_v >= dist:
                break
        elif best_d >= dist:
            break
        cur = best
        dist = best_d
        shifts += 1
    return shifts, dist
