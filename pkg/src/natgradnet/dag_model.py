"""Generative models on directed acyclic graphs.

A :class:`DagModel` couples a :class:`~natgradnet.state_space.StateSpace`
with a DAG and one parametrised Markov kernel per node.  The joint
distribution is the product of the kernels, each conditioning on the
node's parents, so every strictly positive point of the model factorises
over the graph.

Three kernel families are supported; they are a closed enumeration
because each family needs a matching analytic log-gradient for the
Fisher code paths:

* ``SIGMOID`` -- binary units, k(x_r | x_pa) = 1 / (1 + exp(-x_r h_r))
  with h_r = sum_i w_ir x_i - theta_r, parameters (w_r, theta_r).
* ``EXP_FAMILY`` -- k proportional to exp(sum_i xi_i phi_i(x_pa, x_r))
  for caller-supplied statistic tables phi_i.
* ``TABULAR_LOGIT`` -- one free logit per (parent config, state), kernel
  = row-wise softmax.  Unconstrained reals keep the model interior.

Parameter vectors are flat numpy arrays; the model owns the block layout
(one contiguous block per node, ascending node order).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .state_space import (
    Config,
    ConfigSpaceError,
    StateSpace,
    _strides,
    config_count,
    config_to_index,
    subset_index_of_joint,
)


class CycleError(ValueError):
    """Raised when a graph admits no topological order."""


class KernelFamilyError(ValueError):
    """Raised on kernel family / unit cardinality mismatches."""


class ZeroMassError(ValueError):
    """Raised when a conditioning slice has vanishing mass."""


class KernelFamily(enum.Enum):
    SIGMOID = "sigmoid"
    EXP_FAMILY = "exp_family"
    TABULAR_LOGIT = "tabular_logit"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family tag plus family-specific data.

    ``stats`` is required for EXP_FAMILY only: an array of shape
    (d_r, n_parent_configs, cardinality) holding the sufficient
    statistics phi_i(x_pa, x_r).
    """

    family: KernelFamily
    stats: np.ndarray | None = None


SIGMOID = KernelSpec(KernelFamily.SIGMOID)
TABULAR_LOGIT = KernelSpec(KernelFamily.TABULAR_LOGIT)


def exp_family(stats: np.ndarray) -> KernelSpec:
    stats = np.asarray(stats, dtype=np.float64)
    if stats.ndim != 3:
        raise KernelFamilyError("stats must have shape (d_r, n_parent_configs, card)")
    return KernelSpec(KernelFamily.EXP_FAMILY, stats)


@dataclass(frozen=True)
class Dag:
    """Directed graph given by per-node ordered parent lists."""

    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "parents", tuple(tuple(int(p) for p in ps) for ps in self.parents)
        )
        n = len(self.parents)
        for r, ps in enumerate(self.parents):
            for p in ps:
                if not 0 <= p < n:
                    raise ConfigSpaceError(f"unknown parent {p} of node {r}")
            if r in ps:
                raise CycleError(f"node {r} is its own parent")
            if len(set(ps)) != len(ps):
                raise ConfigSpaceError(f"duplicate parent in pa({r}) = {ps}")

    @property
    def node_count(self) -> int:
        return len(self.parents)

    @property
    def children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in range(self.node_count)]
        for r, ps in enumerate(self.parents):
            for p in ps:
                ch[p].append(r)
        return tuple(tuple(c) for c in ch)


def validate_dag(dag: Dag) -> tuple[int, ...]:
    """Topological order of ``dag``, ties broken by ascending node index.

    Raises :class:`CycleError` when no order exists.
    """
    n = dag.node_count
    indeg = [len(ps) for ps in dag.parents]
    children = dag.children
    import heapq

    ready = [r for r in range(n) if indeg[r] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        r = heapq.heappop(ready)
        order.append(r)
        for c in children[r]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != n:
        raise CycleError("graph contains a directed cycle")
    return tuple(order)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (never exactly 0 or 1 for finite a)."""
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def kernel_param_dim(spec: KernelSpec, n_parents: int, parent_cards: Sequence[int], card: int) -> int:
    if spec.family is KernelFamily.SIGMOID:
        return n_parents + 1
    if spec.family is KernelFamily.EXP_FAMILY:
        return int(spec.stats.shape[0])
    n_pa_cfg = int(np.prod(parent_cards)) if n_parents else 1
    return n_pa_cfg * card


def _parent_spin_cols(parent_cards: Sequence[int]) -> np.ndarray:
    """(n_parents, n_pa_cfg) spin matrix for binary parents."""
    n_pa_cfg = int(np.prod(parent_cards)) if len(parent_cards) else 1
    strides = _strides(parent_cards)
    idx = np.arange(n_pa_cfg, dtype=np.int64)
    cols = np.empty((len(parent_cards), n_pa_cfg), dtype=np.float64)
    for pos, c in enumerate(parent_cards):
        cols[pos] = 2 * ((idx // strides[pos]) % c) - 1
    return cols


def kernel_table(
    spec: KernelSpec, parent_cards: Sequence[int], card: int, theta: np.ndarray
) -> np.ndarray:
    """(n_parent_configs, card) table of kernel probabilities.

    Rows sum to 1; all entries lie strictly inside (0, 1).
    """
    theta = np.asarray(theta, dtype=np.float64)
    n_pa_cfg = int(np.prod(parent_cards)) if len(parent_cards) else 1
    if spec.family is KernelFamily.SIGMOID:
        if card != 2 or any(c != 2 for c in parent_cards):
            raise KernelFamilyError("SIGMOID kernels need binary node and parents")
        w, thr = theta[:-1], theta[-1]
        h = _parent_spin_cols(parent_cards).T @ w - thr  # (n_pa_cfg,)
        return np.stack([_sigmoid(-h), _sigmoid(h)], axis=1)
    if spec.family is KernelFamily.EXP_FAMILY:
        stats = spec.stats
        if stats.shape[1:] != (n_pa_cfg, card):
            raise KernelFamilyError(
                f"stats shape {stats.shape} incompatible with ({n_pa_cfg}, {card})"
            )
        logits = np.einsum("i,icx->cx", theta, stats)
        return _softmax_rows(logits)
    if spec.family is KernelFamily.TABULAR_LOGIT:
        return _softmax_rows(theta.reshape(n_pa_cfg, card))
    raise KernelFamilyError(f"unknown family {spec.family}")


def kernel_log_grad_table(
    spec: KernelSpec, parent_cards: Sequence[int], card: int, theta: np.ndarray
) -> np.ndarray:
    """(d_r, n_parent_configs, card) table of d ln k / d theta_i."""
    theta = np.asarray(theta, dtype=np.float64)
    n_pa_cfg = int(np.prod(parent_cards)) if len(parent_cards) else 1
    if spec.family is KernelFamily.SIGMOID:
        if card != 2 or any(c != 2 for c in parent_cards):
            raise KernelFamilyError("SIGMOID kernels need binary node and parents")
        w, thr = theta[:-1], theta[-1]
        spins = _parent_spin_cols(parent_cards)  # (n_parents, n_pa_cfg)
        h = spins.T @ w - thr
        xr = np.array([-1.0, 1.0])
        # d ln k / d w_i = x_i x_r / (1 + exp(x_r h)) = x_i x_r sigma(-x_r h)
        s = _sigmoid(-np.outer(h, xr))  # (n_pa_cfg, 2)
        glt = np.empty((len(w) + 1, n_pa_cfg, 2))
        glt[:-1] = spins[:, :, None] * xr[None, None, :] * s[None, :, :]
        glt[-1] = -xr[None, :] * s
        return glt
    if spec.family is KernelFamily.EXP_FAMILY:
        stats = spec.stats
        k = kernel_table(spec, parent_cards, card, theta)
        mean = np.einsum("cx,icx->ic", k, stats)
        return stats - mean[:, :, None]
    if spec.family is KernelFamily.TABULAR_LOGIT:
        k = kernel_table(spec, parent_cards, card, theta)
        # d ln k(x | c) / d theta[c', y] = delta_cc' (delta_xy - k(y | c))
        glt = np.zeros((n_pa_cfg, card, n_pa_cfg, card))
        for c in range(n_pa_cfg):
            glt[c, :, c, :] = np.eye(card) - k[c][:, None]
        return glt.reshape(n_pa_cfg * card, n_pa_cfg, card)
    raise KernelFamilyError(f"unknown family {spec.family}")


def sigmoid_as_expfam(n_parents: int) -> KernelSpec:
    """EXP_FAMILY rewriting of a sigmoid kernel with the same parameters.

    Weight w_i becomes the pair statistic x_i x_r / 2 and the threshold
    the statistic -x_r / 2, so kernel tables and log-gradients coincide
    entry-wise with the SIGMOID family.
    """
    parent_cards = (2,) * n_parents
    n_pa_cfg = 2**n_parents
    spins = _parent_spin_cols(parent_cards)
    xr = np.array([-1.0, 1.0])
    stats = np.empty((n_parents + 1, n_pa_cfg, 2))
    stats[:-1] = 0.5 * spins[:, :, None] * xr[None, None, :]
    stats[-1] = -0.5 * np.broadcast_to(xr, (n_pa_cfg, 2))
    return exp_family(stats)


class DagModel:
    """A DAG of parametrised Markov kernels over a finite state space.

    Immutable after construction; parameter vectors live outside the
    model, so evaluation is pure and safe to run concurrently.
    """

    def __init__(self, space: StateSpace, dag: Dag, kernels: Sequence[KernelSpec]):
        if dag.node_count != space.unit_count:
            raise ConfigSpaceError("one DAG node per unit is required")
        if len(kernels) != dag.node_count:
            raise ConfigSpaceError("one kernel per node is required")
        self.space = space
        self.dag = dag
        self.kernels = tuple(kernels)
        self.topo_order = validate_dag(dag)
        cards = space.cardinalities
        self.block_dims = tuple(
            kernel_param_dim(
                kernels[r], len(dag.parents[r]), [cards[p] for p in dag.parents[r]], cards[r]
            )
            for r in range(dag.node_count)
        )
        offsets = np.zeros(dag.node_count + 1, dtype=np.int64)
        np.cumsum(self.block_dims, out=offsets[1:])
        self.block_offsets = offsets
        self.param_count = int(offsets[-1])
        for r in range(dag.node_count):
            if kernels[r].family is KernelFamily.SIGMOID:
                if cards[r] != 2 or any(cards[p] != 2 for p in dag.parents[r]):
                    raise KernelFamilyError(
                        f"node {r}: SIGMOID needs binary node and parents"
                    )
        self._pa_index_cols: dict[int, np.ndarray] = {}
        self._state_cols: dict[int, np.ndarray] = {}

    # -- parameter layout -----------------------------------------------------
    def block_slice(self, r: int) -> slice:
        return slice(int(self.block_offsets[r]), int(self.block_offsets[r + 1]))

    def flat_index(self, r: int, i: int) -> int:
        if not 0 <= i < self.block_dims[r]:
            raise IndexError(f"component {i} out of range for block {r}")
        return int(self.block_offsets[r]) + i

    def check_params(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.param_count,):
            raise ValueError(
                f"parameter vector must have shape ({self.param_count},), got {params.shape}"
            )
        return params

    def parent_cards(self, r: int) -> tuple[int, ...]:
        return tuple(self.space.cardinalities[p] for p in self.dag.parents[r])

    # -- kernel evaluation ----------------------------------------------------
    def kernel_table(self, r: int, params: np.ndarray) -> np.ndarray:
        params = self.check_params(params)
        return kernel_table(
            self.kernels[r],
            self.parent_cards(r),
            self.space.cardinalities[r],
            params[self.block_slice(r)],
        )

    def kernel_log_grad_table(self, r: int, params: np.ndarray) -> np.ndarray:
        params = self.check_params(params)
        return kernel_log_grad_table(
            self.kernels[r],
            self.parent_cards(r),
            self.space.cardinalities[r],
            params[self.block_slice(r)],
        )

    # -- enumeration machinery (structure-only, cached) ------------------------
    def pa_index_col(self, r: int) -> np.ndarray:
        """(N,) parent-config index of node r per full-space config."""
        if r not in self._pa_index_cols:
            self._pa_index_cols[r] = subset_index_of_joint(self.space, self.dag.parents[r])
        return self._pa_index_cols[r]

    def state_col(self, r: int) -> np.ndarray:
        """(N,) state index of unit r per full-space config."""
        if r not in self._state_cols:
            self._state_cols[r] = subset_index_of_joint(self.space, (r,))
        return self._state_cols[r]

    def joint_probs(self, params: np.ndarray) -> np.ndarray:
        """(N,) joint distribution, product of kernel tables over nodes."""
        params = self.check_params(params)
        n_joint = config_count(self.space, self.space.units)
        logp = np.zeros(n_joint)
        for r in range(self.dag.node_count):
            ktab = self.kernel_table(r, params)
            logp += np.log(ktab[self.pa_index_col(r), self.state_col(r)])
        return np.exp(logp)

    def log_grad_matrix(self, params: np.ndarray) -> np.ndarray:
        """(N, d) per-config score matrix d ln p(x; xi) / d xi.

        By the factorisation, the (r; i) column only reads node r's kernel.
        """
        params = self.check_params(params)
        n_joint = config_count(self.space, self.space.units)
        out = np.empty((n_joint, self.param_count))
        for r in range(self.dag.node_count):
            glt = self.kernel_log_grad_table(r, params)
            out[:, self.block_slice(r)] = glt[:, self.pa_index_col(r), self.state_col(r)].T
        return out

    def config_scores(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        """(n, d) score rows for the given (n, n_units) state array."""
        params = self.check_params(params)
        states = np.asarray(states, dtype=np.int64)
        out = np.empty((states.shape[0], self.param_count))
        for r in range(self.dag.node_count):
            glt = self.kernel_log_grad_table(r, params)
            pa = self.dag.parents[r]
            pa_strides = _strides(self.parent_cards(r))
            pa_idx = np.zeros(states.shape[0], dtype=np.int64)
            for pos, p in enumerate(pa):
                pa_idx += states[:, p] * pa_strides[pos]
            out[:, self.block_slice(r)] = glt[:, pa_idx, states[:, r]].T
        return out


@dataclass
class JointTable:
    """Dense probability table over a unit subset, kept in ascending unit order.

    The flat layout is mixed-radix with the lowest unit index most
    significant, matching :func:`natgradnet.state_space.enumerate_configs`.
    """

    space: StateSpace
    units: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        self.units = self.space.check_units(self.units)
        if any(a >= b for a, b in zip(self.units, self.units[1:])):
            raise ConfigSpaceError(f"table units must be ascending, got {self.units}")
        self.probs = np.asarray(self.probs, dtype=np.float64)
        n = config_count(self.space, self.units)
        if self.probs.shape != (n,):
            raise ConfigSpaceError(
                f"table over {self.units} must have {n} entries, got {self.probs.shape}"
            )

    def axes_shape(self) -> tuple[int, ...]:
        return tuple(self.space.cardinalities[u] for u in self.units)


def kernel_prob(
    model: DagModel, r: int, parent_config: Config, state: int, params: np.ndarray
) -> float:
    """k^r(state | parent_config; xi_r); sums to 1 over the node's states."""
    ktab = model.kernel_table(r, params)
    pa = model.dag.parents[r]
    c = config_to_index(model.space, pa, parent_config) if pa else 0
    card = model.space.cardinalities[r]
    if not 0 <= state < card:
        raise ConfigSpaceError(f"state {state} out of range for node {r}")
    return float(ktab[c, state])


def kernel_log_grad(
    model: DagModel, r: int, parent_config: Config, state: int, params: np.ndarray
) -> np.ndarray:
    """d ln k^r(state | parent_config; .) / d xi_r, length d_r."""
    glt = model.kernel_log_grad_table(r, params)
    pa = model.dag.parents[r]
    c = config_to_index(model.space, pa, parent_config) if pa else 0
    return glt[:, c, state].copy()


def joint_table(model: DagModel, params: np.ndarray) -> JointTable:
    """Joint distribution over all units as a :class:`JointTable`."""
    return JointTable(model.space, model.space.units, model.joint_probs(params))


def marginal(table: JointTable, subset: Iterable[int]) -> JointTable:
    """Marginalise ``table`` onto ``subset`` (kept in ascending unit order)."""
    subset = tuple(sorted(table.space.check_units(subset)))
    for u in subset:
        if u not in table.units:
            raise ConfigSpaceError(f"unit {u} not in table over {table.units}")
    keep = [table.units.index(u) for u in subset]
    drop = tuple(i for i in range(len(table.units)) if i not in keep)
    arr = table.probs.reshape(table.axes_shape())
    if drop:
        arr = arr.sum(axis=drop)
    # Restriction commutes with ascending-order enumeration because both
    # the table and the subset are kept sorted by unit index.
    return JointTable(table.space, subset, arr.reshape(-1))


def conditional(table: JointTable, target: Iterable[int], given: Config) -> JointTable:
    """Distribution of ``target`` given the states in ``given``.

    Units in neither set are summed out first; the result is the
    renormalised slice and sums to 1.
    """
    target = tuple(sorted(table.space.check_units(target)))
    if set(target) & set(given.units):
        raise ConfigSpaceError("target and given subsets must be disjoint")
    arr = table.probs.reshape(table.axes_shape())
    index = tuple(
        given.state_of(u) if u in given.units else slice(None) for u in table.units
    )
    sliced = arr[index]
    remaining = [u for u in table.units if u not in given.units]
    drop = tuple(i for i, u in enumerate(remaining) if u not in target)
    if drop:
        sliced = sliced.sum(axis=drop)
    mass = float(sliced.sum())
    if mass <= 0 or not np.isfinite(mass):
        raise ZeroMassError("conditioning slice has no mass")
    return JointTable(table.space, target, (sliced / mass).reshape(-1))


def ancestral_samples(
    model: DagModel, params: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """(n, n_units) one-shot samples, each node drawn in topological order."""
    params = model.check_params(params)
    states = np.zeros((n, model.space.unit_count), dtype=np.int64)
    for r in model.topo_order:
        ktab = model.kernel_table(r, params)
        pa = model.dag.parents[r]
        pa_strides = _strides(model.parent_cards(r))
        pa_idx = np.zeros(n, dtype=np.int64)
        for pos, p in enumerate(pa):
            pa_idx += states[:, p] * pa_strides[pos]
        cdf = np.cumsum(ktab[pa_idx], axis=1)
        u = rng.random(n)
        states[:, r] = np.minimum(
            (u[:, None] >= cdf).sum(axis=1), model.space.cardinalities[r] - 1
        )
    return states


def ancestral_sample(model: DagModel, params: np.ndarray, rng: np.random.Generator) -> Config:
    """One joint configuration drawn from the generative model."""
    states = ancestral_samples(model, params, 1, rng)[0]
    return Config(model.space.units, tuple(int(s) for s in states))


def visible_marginal(model: DagModel, params: np.ndarray) -> JointTable:
    """The model's distribution on the visible units."""
    return marginal(joint_table(model, params), model.space.visible)
