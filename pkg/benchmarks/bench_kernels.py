#!/usr/bin/env python3
"""Micro-benchmark: compiled kernels vs the numpy fallback.

Runs both backends on identical inputs (per-group top-k selection and the
ranked-match scatter), checks they agree, and prints a timing table. With
--end-to-end it also times a full synthetic build per backend in a
subprocess, since the backend is chosen at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from bustree import _kernels_py

try:
    from bustree import _kernels
except ImportError:
    _kernels = None


def make_topk_case(rng, n_groups, rows_per_group):
    sizes = rng.integers(rows_per_group // 2, rows_per_group * 2, size=n_groups)
    offsets = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    n = int(offsets[-1])
    items = np.empty(n, dtype=np.int32)
    for g in range(n_groups):  # unique items within each group
        lo, hi = offsets[g], offsets[g + 1]
        items[lo:hi] = rng.permutation(int(hi - lo))
    scores = rng.random(n)
    return offsets, items, scores


def make_scatter_case(rng, n_pred, n_q, n_users):
    pred_keys = np.unique(rng.integers(0, n_pred * 4, size=n_pred)).astype(np.int64)
    pred_disc = rng.random(pred_keys.size)
    q_keys = rng.integers(0, n_pred * 4, size=n_q).astype(np.int64)
    q_weights = rng.random(n_q)
    q_user = rng.integers(0, n_users, size=n_q).astype(np.int32)
    return pred_keys, pred_disc, q_keys, q_weights, q_user, n_users


def bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--groups", type=int, default=20_000)
    parser.add_argument("--rows-per-group", type=int, default=120)
    parser.add_argument("--k", type=int, default=100)
    parser.add_argument("--queries", type=int, default=2_000_000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full synthetic build per backend")
    args = parser.parse_args()

    if _kernels is None:
        print("compiled extension not available; nothing to compare",
              file=sys.stderr)
        return 1

    rng = np.random.default_rng(7)
    print(f"{'kernel':<14} {'python':>10} {'compiled':>10} {'speedup':>8}")

    case = make_topk_case(rng, args.groups, args.rows_per_group)
    t_py, out_py = bench(_kernels_py.select_topk, (*case, args.k), args.repeats)
    t_c, out_c = bench(_kernels.select_topk, (*case, args.k), args.repeats)
    assert np.array_equal(out_py[0], out_c[0]) and np.array_equal(out_py[1], out_c[1])
    print(f"{'select_topk':<14} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x")

    case = make_scatter_case(rng, 200_000, args.queries, 500_000)
    t_py, out_py = bench(_kernels_py.dcg_scatter, case, args.repeats)
    t_c, out_c = bench(_kernels.dcg_scatter, case, args.repeats)
    assert np.array_equal(out_py, out_c)
    print(f"{'dcg_scatter':<14} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x")

    if args.end_to_end:
        script = ("import time; from bustree import *; "
                  "cfg = SynthConfig(seed=1, n_users=200_000, n_items=3000, "
                  "attributes=(AttrSpec('a', 4), AttrSpec('b', 3), AttrSpec('c', 6), "
                  "AttrSpec('d', 5, null_rate=0.1)), governing=('a', 'b'), "
                  "items_per_segment=60); data = generate_synthetic(cfg); "
                  "t0 = time.perf_counter(); "
                  "r = build_tree(data.users, data.engagements, params=BuildParams(k=100, mu=250)); "
                  "print(f'{time.perf_counter() - t0:.2f}s', repr(r.final_reward))")
        for backend in ("python", "compiled"):
            env = dict(os.environ, BUSTREE_KERNELS=backend)
            out = subprocess.run([sys.executable, "-c", script], env=env,
                                 capture_output=True, text=True, check=True)
            print(f"build[{backend}]: {out.stdout.strip()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
