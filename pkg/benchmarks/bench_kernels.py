"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each row reports the best-of-``repeat`` wall time per call for both backends
and the speedup.  Outputs are compared first so a fast wrong kernel fails loudly.
"""

import argparse
import json
import random
import timeit

import numpy as np

from parapair import kernels


def token_pairs(n, length, alphabet, seed=0):
    rng = random.Random(seed)
    return [([rng.randrange(alphabet) for _ in range(length)],
             [rng.randrange(alphabet) for _ in range(length)]) for _ in range(n)]


def lstm_inputs(n, d, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 4 * d))
    c = rng.normal(size=(n, d))
    h = rng.normal(size=(n, d))
    mask = (rng.uniform(size=n) < 0.9).astype(np.uint8)
    return z, c, h, mask


def cases():
    """name -> (function of a kernel module, description)."""
    short = token_pairs(200, 12, 8, seed=1)
    # greedy TER with lookahead grows steeply with length; keep the fallback affordable
    ter_pairs = token_pairs(50, 8, 6, seed=2)
    z, c, h, mask = lstm_inputs(64, 60)
    g = np.random.default_rng(3).normal(size=(64, 120))

    def lstm_bw(k):
        _, cache = k.lstm_forward(z, c, h, mask)
        return k.lstm_backward(g, cache)

    return {
        "levenshtein 200x12": (lambda k: [k.levenshtein(a, b) for a, b in short], "token edit distance"),
        "lcs_length 200x12": (lambda k: [k.lcs_length(a, b) for a, b in short], "longest common subsequence"),
        "ter_greedy 50x8": (lambda k: [k.ter_greedy(a, b) for a, b in ter_pairs], "greedy shift + edit search"),
        "lstm_forward 64x60": (lambda k: k.lstm_forward(z, c, h, mask)[0], "fused cell, batch 64, d 60"),
        "lstm_fw+bw 64x60": (lstm_bw, "forward then backward"),
    }


def same(a, b):
    if isinstance(a, tuple | list) and a and isinstance(a[0], np.ndarray):
        return all(np.allclose(x, y, rtol=1e-12, atol=1e-14) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-12, atol=1e-14)
    return a == b


def run(repeat):
    found = kernels.backends()
    if "compiled" not in found:
        raise SystemExit("compiled kernels are not built; run `python setup.py build_ext --inplace`")
    py, cy = found["python"], found["compiled"]
    rows = []
    for name, (fn, what) in cases().items():
        if not same(fn(py), fn(cy)):
            raise SystemExit(f"{name}: backends disagree")
        number = 3
        t_py = min(timeit.repeat(lambda: fn(py), number=number, repeat=repeat)) / number
        t_cy = min(timeit.repeat(lambda: fn(cy), number=number, repeat=repeat)) / number
        rows.append({"kernel": name, "what": what, "python_s": t_py, "compiled_s": t_cy,
                     "speedup": t_py / t_cy})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows as JSON")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':<22}{'python (ms)':>14}{'compiled (ms)':>16}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<22}{1e3 * r['python_s']:>14.3f}{1e3 * r['compiled_s']:>16.3f}"
              f"{r['speedup']:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
