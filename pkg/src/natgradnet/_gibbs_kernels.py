"""Single-site Gibbs chain kernels.

The chain is the one genuinely hot loop in this package: every update
depends on the previous one, so it cannot be vectorised.  The binary
sigmoid kernel therefore ships in two builds of the *same* function: a
numba ``@njit`` compile and the plain-Python original.  Both consume
pre-drawn site/uniform arrays, accumulate in the same order, and call
the same libm routines, so they produce bit-identical chains.

Selection: the njit build is used when numba imports and the environment
variable ``NATGRAD_DISABLE_NUMBA`` is unset (see :func:`use_numba`).
``benchmarks/bench_gibbs.py`` compares the two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False


def use_numba() -> bool:
    """True when the compiled kernel should run (env flag + numba present)."""
    if os.environ.get("NATGRAD_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes"):
        return False
    return HAS_NUMBA


def _binary_chain(W, theta, x, sites, unis, child_ptr, child_idx, hidden, skip, rec, out):
    """Run a clamped single-site chain over binary sigmoid units.

    W[i, j] is the weight of edge i -> j (0 where absent), ``x`` the
    current spin vector (visible entries fixed), ``sites``/``unis`` the
    pre-drawn update schedule.  Rows of ``out`` receive the hidden state
    indices every ``rec`` updates once ``skip`` updates have passed.

    The update draws x_s from p(x_s | blanket) via inverse CDF in state
    order (-1 first), with p(-1 | rest) = sigma(-(L(+1) - L(-1))) and

        L(+1) - L(-1) = h_s + sum_{c in ch(s)} [ln sig(x_c h_c^+) - ln sig(x_c h_c^-)]
    """
    n = W.shape[0]
    row = 0
    for t in range(sites.shape[0]):
        s = sites[t]
        h_s = -theta[s]
        for i in range(n):
            h_s += W[i, s] * x[i]
        delta = h_s
        for k in range(child_ptr[s], child_ptr[s + 1]):
            c = child_idx[k]
            base = -theta[c] - W[s, c] * x[s]
            for j in range(n):
                base += W[j, c] * x[j]
            a_pos = x[c] * (base + W[s, c])
            a_neg = x[c] * (base - W[s, c])
            # ln sigma(a), stable on both tails
            if a_pos >= 0.0:
                lp = -math.log1p(math.exp(-a_pos))
            else:
                lp = a_pos - math.log1p(math.exp(a_pos))
            if a_neg >= 0.0:
                ln = -math.log1p(math.exp(-a_neg))
            else:
                ln = a_neg - math.log1p(math.exp(a_neg))
            delta += lp - ln
        if delta <= 0.0:
            p_minus = 1.0 / (1.0 + math.exp(delta))
        else:
            e = math.exp(-delta)
            p_minus = e / (1.0 + e)
        if unis[t] < p_minus:
            x[s] = -1.0
        else:
            x[s] = 1.0
        if t >= skip and (t - skip + 1) % rec == 0:
            for k in range(hidden.shape[0]):
                out[row, k] = 1 if x[hidden[k]] > 0.0 else 0
            row += 1


if HAS_NUMBA:
    _binary_chain_jit = njit(cache=True)(_binary_chain)


def run_binary_chain(W, theta, x, sites, unis, child_ptr, child_idx, hidden, skip, rec, out):
    """Dispatch to the njit or plain build of the binary chain kernel."""
    args = (W, theta, x, sites, unis, child_ptr, child_idx, hidden, skip, rec, out)
    if use_numba():
        _binary_chain_jit(*args)
    else:
        _binary_chain(*args)
