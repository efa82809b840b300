"""Gibbs sampling from the clamped posterior p(x_H | x_V; xi).

Single-site updates only need the Markov blanket of the updated node:

    p(x_s | x_rest) is proportional to
        k^s(x_s | x_pa(s)) * prod_{c in ch(s)} k^c(x_c | x_pa(c))

For all-binary sigmoid networks the conditional has the closed form

    p(x_s | x_bl(s)) = 1 / (1 + exp(-x_s h_s) g_s(x_bl(s)))

with the modulation factor g_s collecting the children's terms; see
:func:`binary_gibbs_prob`.  Chains over such networks run on the packed
kernel in :mod:`natgradnet._gibbs_kernels`; everything else takes the
general tabular path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _gibbs_kernels
from .dag_model import DagModel, KernelFamily, conditional, joint_table
from .state_space import (
    Config,
    ConfigSpaceError,
    _strides,
    config_count,
    enumerate_configs,
)


@dataclass
class GibbsConfig:
    """Chain schedule; a sweep is one single-site update per hidden unit."""

    burn_in: int = 1000
    thinning: int = 10
    sweep_order: str = "random"  # or "sequential"
    seed: int | None = None

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.sweep_order not in ("random", "sequential"):
            raise ValueError(f"unknown sweep_order {self.sweep_order!r}")


def markov_blanket(dag, s: int) -> frozenset[int]:
    """Parents, children, and co-parents of node s."""
    if not 0 <= s < dag.node_count:
        raise ConfigSpaceError(f"unknown node {s}")
    children = dag.children[s]
    blanket = set(dag.parents[s]) | set(children)
    for c in children:
        blanket |= set(dag.parents[c]) - {s}
    return frozenset(blanket - {s})


def _pa_index_of_states(model: DagModel, r: int, states: np.ndarray) -> int:
    pa = model.dag.parents[r]
    if not pa:
        return 0
    strides = _strides(model.parent_cards(r))
    return int(sum(int(states[p]) * int(strides[pos]) for pos, p in enumerate(pa)))


def gibbs_conditional(model: DagModel, params: np.ndarray, s: int, states) -> np.ndarray:
    """Distribution of node s given all other coordinates of ``states``.

    Equals the conditional of the enumerated joint; only blanket states
    are actually read.
    """
    states = np.asarray(states, dtype=np.int64).copy()
    card = model.space.cardinalities[s]
    log_k_s = np.log(model.kernel_table(s, params))
    logits = log_k_s[_pa_index_of_states(model, s, states)].copy()
    for c in model.dag.children[s]:
        log_k_c = np.log(model.kernel_table(c, params))
        pa = model.dag.parents[c]
        strides = _strides(model.parent_cards(c))
        stride_s = int(strides[pa.index(s)])
        base = _pa_index_of_states(model, c, states) - int(states[s]) * stride_s
        x_c = int(states[c])
        for v in range(card):
            logits[v] += log_k_c[base + v * stride_s, x_c]
    z = logits - logits.max()
    ez = np.exp(z)
    return ez / ez.sum()


def _softplus(a: float) -> float:
    return max(a, 0.0) + np.log1p(np.exp(-abs(a)))


def binary_gibbs_prob(model: DagModel, params: np.ndarray, s: int, states) -> float:
    """Closed-form p(x_s | x_bl(s)) for binary sigmoid networks.

    Evaluates sigma(x_s h_s - ln g_s) where

        g_s = prod_{c in ch(s)} (1 + e^{-x_c h_c}) / (1 + e^{2 w_sc x_s x_c} e^{-x_c h_c})

    and h are the local fields at the current configuration.  With no
    children the product is empty and this reduces to the kernel itself.
    """
    states = np.asarray(states, dtype=np.int64)
    relevant = (s, *model.dag.children[s])
    for r in relevant:
        if model.kernels[r].family is not KernelFamily.SIGMOID:
            raise ValueError(f"binary_gibbs_prob needs SIGMOID kernels, node {r} is not")
    spins = 2.0 * states - 1.0

    def field(r: int) -> float:
        theta = params[model.block_slice(r)]
        pa = model.dag.parents[r]
        return float(sum(theta[i] * spins[p] for i, p in enumerate(pa)) - theta[-1])

    x_s = spins[s]
    log_g = 0.0
    for c in model.dag.children[s]:
        theta_c = params[model.block_slice(c)]
        w_sc = float(theta_c[model.dag.parents[c].index(s)])
        a = -spins[c] * field(c)
        log_g += _softplus(a) - _softplus(a + 2.0 * w_sc * x_s * spins[c])
    a = x_s * field(s) - log_g
    if a >= 0:
        return float(1.0 / (1.0 + np.exp(-a)))
    e = float(np.exp(a))
    return e / (1.0 + e)


def _is_binary_sigmoid(model: DagModel) -> bool:
    return all(c == 2 for c in model.space.cardinalities) and all(
        k.family is KernelFamily.SIGMOID for k in model.kernels
    )


def _pack_binary(model: DagModel, params: np.ndarray):
    n = model.space.unit_count
    W = np.zeros((n, n))
    theta = np.zeros(n)
    for r in range(n):
        block = params[model.block_slice(r)]
        for i, p in enumerate(model.dag.parents[r]):
            W[p, r] = block[i]
        theta[r] = block[-1]
    children = model.dag.children
    child_ptr = np.zeros(n + 1, dtype=np.int64)
    for r in range(n):
        child_ptr[r + 1] = child_ptr[r] + len(children[r])
    child_idx = np.concatenate(
        [np.asarray(children[r], dtype=np.int64) for r in range(n)]
    ) if child_ptr[-1] else np.zeros(0, dtype=np.int64)
    return W, theta, child_ptr, child_idx


def _tabular_chain(model, params, states, sites, unis, skip, rec, hidden, out):
    """General single-site chain over kernel tables (pure Python path)."""
    log_k = [np.log(model.kernel_table(r, params)) for r in range(model.space.unit_count)]
    row = 0
    for t in range(sites.shape[0]):
        s = int(sites[t])
        card = model.space.cardinalities[s]
        logits = log_k[s][_pa_index_of_states(model, s, states)].copy()
        for c in model.dag.children[s]:
            pa = model.dag.parents[c]
            strides = _strides(model.parent_cards(c))
            stride_s = int(strides[pa.index(s)])
            base = _pa_index_of_states(model, c, states) - int(states[s]) * stride_s
            x_c = int(states[c])
            for v in range(card):
                logits[v] += log_k[c][base + v * stride_s, x_c]
        z = np.exp(logits - logits.max())
        cdf = np.cumsum(z / z.sum())
        states[s] = int(np.searchsorted(cdf, unis[t], side="right"))
        if states[s] >= card:  # guard against u == 1.0 roundoff
            states[s] = card - 1
        if t >= skip and (t - skip + 1) % rec == 0:
            out[row] = states[hidden]
            row += 1


def gibbs_chain(
    model: DagModel,
    params: np.ndarray,
    clamp: Config,
    steps: int,
    config: GibbsConfig | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Clamped-visible single-site Gibbs; returns (steps, n_hidden) states.

    Hidden columns follow ascending unit order.  Samples are emitted
    after ``burn_in`` sweeps, one every ``thinning`` sweeps.  The whole
    update schedule (initial states, site choices, uniforms) is drawn
    up-front from ``rng``, so a fixed seed reproduces the chain exactly
    on either kernel backend.
    """
    config = config or GibbsConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params = model.check_params(params)
    hidden = np.asarray(model.space.hidden, dtype=np.int64)
    m = len(hidden)
    for u in model.space.visible:
        if u not in clamp.units:
            raise ConfigSpaceError(f"clamp must cover visible unit {u}")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    out = np.zeros((steps, m), dtype=np.int64)
    if m == 0 or steps * config.thinning + config.burn_in == 0:
        return out[:steps]

    states = np.zeros(model.space.unit_count, dtype=np.int64)
    for u in clamp.units:
        states[u] = clamp.state_of(u)
    for u in hidden:
        states[u] = int(rng.integers(0, model.space.cardinalities[u]))

    n_sweeps = config.burn_in + steps * config.thinning
    total = n_sweeps * m
    if config.sweep_order == "random":
        sites = hidden[rng.integers(0, m, size=total)]
    else:
        sites = np.tile(hidden, n_sweeps)
    unis = rng.random(total)
    skip = config.burn_in * m
    rec = config.thinning * m

    if _is_binary_sigmoid(model):
        W, theta, child_ptr, child_idx = _pack_binary(model, params)
        x = (2 * states - 1).astype(np.float64)
        _gibbs_kernels.run_binary_chain(
            W, theta, x, sites, unis, child_ptr, child_idx, hidden, skip, rec, out
        )
    else:
        _tabular_chain(model, params, states, sites, unis, skip, rec, hidden, out)
    return out


def draw_from_table(probs: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of indices from an enumerated distribution."""
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64))
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return np.minimum(idx, len(probs) - 1)


def target_posterior_sampler(
    model: DagModel,
    params: np.ndarray,
    target,
    n: int,
    config: GibbsConfig | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """(n, n_units) samples with x_V ~ p* and x_H from the clamped chain.

    Visible configurations are drawn by inverse CDF on the enumerated
    target; one chain per distinct visible configuration then supplies
    the hidden columns, interleaved back into draw order.
    """
    from .objective import check_target

    config = config or GibbsConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    target = check_target(model, target)
    visible = np.asarray(model.space.visible, dtype=np.int64)
    hidden = np.asarray(model.space.hidden, dtype=np.int64)
    vis_cfgs = enumerate_configs(model.space, model.space.visible)
    vis_idx = draw_from_table(target, n, rng)
    out = np.zeros((n, model.space.unit_count), dtype=np.int64)
    out[:, visible] = vis_cfgs[vis_idx]
    for v in np.unique(vis_idx):
        rows = np.nonzero(vis_idx == v)[0]
        clamp = Config(tuple(visible), tuple(int(s) for s in vis_cfgs[v]))
        samples = gibbs_chain(model, params, clamp, len(rows), config, rng)
        out[np.ix_(rows, hidden)] = samples
    return out


def exact_posterior_sampler(model: DagModel, params: np.ndarray, target):
    """Sampler drawing (x_V, x_H) exactly from p*(x_V) p(x_H | x_V; xi).

    Only feasible at enumeration scale; used as the ground-truth sampler
    in Monte Carlo consistency checks.
    """
    from .objective import target_weighted_joint

    pstar = target_weighted_joint(model, params, target)
    cfgs = enumerate_configs(model.space)

    def sampler(n: int, rng: np.random.Generator) -> np.ndarray:
        return cfgs[draw_from_table(pstar, n, rng)]

    return sampler


def single_site_transition_matrix(
    model: DagModel, params: np.ndarray, clamp: Config
) -> tuple[np.ndarray, np.ndarray]:
    """(pi, T) of the random-site chain on the hidden configuration space.

    pi is the exact clamped posterior and T the one-update transition
    matrix (site chosen uniformly, then resampled from its conditional).
    Detailed balance pi(x) T[x, y] = pi(y) T[y, x] holds exactly.
    """
    hidden = model.space.hidden
    m = len(hidden)
    if m == 0:
        raise ValueError("no hidden units to sample")
    post = conditional(joint_table(model, params), hidden, clamp)
    pi = post.probs
    hid_cfgs = enumerate_configs(model.space, hidden)
    n_cfg = len(hid_cfgs)
    strides = _strides([model.space.cardinalities[u] for u in hidden])
    T = np.zeros((n_cfg, n_cfg))
    states = np.zeros(model.space.unit_count, dtype=np.int64)
    for u in clamp.units:
        states[u] = clamp.state_of(u)
    for xi in range(n_cfg):
        states[list(hidden)] = hid_cfgs[xi]
        for pos, s in enumerate(hidden):
            dist = gibbs_conditional(model, params, s, states)
            for v, pv in enumerate(dist):
                yi = xi + (v - hid_cfgs[xi][pos]) * int(strides[pos])
                T[xi, yi] += pv / m
    return pi, T
