#!/usr/bin/env python3
"""Benchmark the Gibbs chain kernel: numba @njit vs pure-Python fallback.

The chain is sequential (each single-site update reads the previous
state), so this is the one loop numpy cannot vectorise and the one place
the compiled kernel pays off.  Both paths consume identical pre-drawn
uniforms and must produce identical samples; the benchmark checks that
too.

Run:  python benchmarks/bench_gibbs.py [--units 16] [--steps 20000]
"""

import argparse
import os
import time

import numpy as np

from natgradnet import nets
from natgradnet.sampler import GibbsConfig, gibbs_chain
from natgradnet.state_space import Config


def run_chain(model, params, clamp, steps, cfg, seed, disable_numba):
    if disable_numba:
        os.environ["NATGRAD_DISABLE_NUMBA"] = "1"
    else:
        os.environ.pop("NATGRAD_DISABLE_NUMBA", None)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    samples = gibbs_chain(model, params, clamp, steps, cfg, rng)
    return samples, time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--units", type=int, default=16, help="network size")
    parser.add_argument("--steps", type=int, default=20_000, help="samples per chain")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    model = nets.random_sigmoid_net(args.units, rng, edge_prob=0.4, n_visible=args.units // 2)
    params = nets.random_params(model, rng)
    vis = model.space.visible
    clamp = Config(vis, tuple(int(rng.integers(0, 2)) for _ in vis))
    cfg = GibbsConfig(burn_in=100, thinning=5)
    updates = (cfg.burn_in + args.steps * cfg.thinning) * len(model.space.hidden)

    # warm-up run to exclude JIT compilation from the timing
    run_chain(model, params, clamp, 10, cfg, args.seed, disable_numba=False)

    s_jit, t_jit = run_chain(model, params, clamp, args.steps, cfg, args.seed, False)
    s_py, t_py = run_chain(model, params, clamp, args.steps, cfg, args.seed, True)
    identical = np.array_equal(s_jit, s_py)

    print(f"network: {args.units} binary sigmoid units "
          f"({len(model.space.hidden)} hidden), {args.steps} samples, {updates} updates")
    print(f"numba kernel   : {t_jit:8.3f} s  ({updates / t_jit / 1e6:6.2f} M updates/s)")
    print(f"python fallback: {t_py:8.3f} s  ({updates / t_py / 1e6:6.2f} M updates/s)")
    print(f"speedup        : {t_py / t_jit:8.1f}x")
    print(f"samples identical across backends: {identical}")
    if not identical:
        raise SystemExit("backend mismatch: the two kernels diverged")


if __name__ == "__main__":
    main()
