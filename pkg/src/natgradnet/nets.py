"""Builders for the networks used by experiments, reports, and tests.

All builders label nodes topologically (parents before children), so the
ascending-index parameter layout of :class:`~natgradnet.dag_model.DagModel`
is a topological block layout.
"""

from __future__ import annotations

import numpy as np

from .dag_model import Dag, DagModel, KernelSpec, SIGMOID, TABULAR_LOGIT, exp_family
from .state_space import StateSpace, binary_space


def sigmoid_net(parents: list[tuple[int, ...]], visible: tuple[int, ...]) -> DagModel:
    """All-binary sigmoid network with the given parent lists."""
    space = binary_space(len(parents), visible)
    return DagModel(space, Dag(tuple(parents)), [SIGMOID] * len(parents))


def shallow_architecture(n: int = 3, l: int = 3) -> DagModel:
    """n visible units, l*n hidden units in a single layer feeding all of them.

    Hidden units come first (no parents), visible units last with the full
    hidden layer as parents; n*m = l*n^2 edges.
    """
    m = l * n
    hidden = tuple(range(m))
    parents: list[tuple[int, ...]] = [() for _ in hidden]
    parents += [hidden for _ in range(n)]
    visible = tuple(range(m, m + n))
    return sigmoid_net(parents, visible)


def deep_architecture(n: int = 3, l: int = 3) -> DagModel:
    """n visible units below l hidden layers of width n, layerwise dense.

    Same edge count as the shallow architecture (l*n^2), but each unit has
    only n parents, so the Fisher blocks shrink from (l*n)^2 to n^2.
    """
    parents: list[tuple[int, ...]] = [() for _ in range(n)]
    for layer in range(1, l + 1):
        prev = tuple(range((layer - 1) * n, layer * n))
        parents += [prev for _ in range(n)]
    visible = tuple(range(l * n, (l + 1) * n))
    return sigmoid_net(parents, visible)


def acceptance_net() -> DagModel:
    """The 2-hidden / 2-visible sigmoid net used by the training checks."""
    parents = [(), (0,), (0, 1), (0, 1)]
    return sigmoid_net(parents, visible=(2, 3))


def random_dag(n_nodes: int, rng: np.random.Generator, edge_prob: float = 0.5) -> Dag:
    """Random topologically labelled DAG: i -> j possible only for i < j."""
    parents = []
    for r in range(n_nodes):
        ps = tuple(i for i in range(r) if rng.random() < edge_prob)
        parents.append(ps)
    return Dag(tuple(parents))


def random_sigmoid_net(
    n_nodes: int,
    rng: np.random.Generator,
    edge_prob: float = 0.5,
    n_visible: int | None = None,
) -> DagModel:
    """Random binary sigmoid network; the last units are visible."""
    if n_visible is None:
        n_visible = (n_nodes + 1) // 2
    dag = random_dag(n_nodes, rng, edge_prob)
    visible = tuple(range(n_nodes - n_visible, n_nodes))
    space = binary_space(n_nodes, visible)
    return DagModel(space, dag, [SIGMOID] * n_nodes)


def random_mixed_net(
    n_nodes: int,
    rng: np.random.Generator,
    edge_prob: float = 0.5,
    n_visible: int | None = None,
    max_card: int = 3,
) -> DagModel:
    """Random network mixing cardinalities and kernel families.

    Binary nodes with all-binary parents draw a family uniformly from the
    three; anything touching a higher-cardinality unit uses TABULAR_LOGIT
    or EXP_FAMILY.
    """
    if n_visible is None:
        n_visible = (n_nodes + 1) // 2
    dag = random_dag(n_nodes, rng, edge_prob)
    cards = tuple(int(rng.integers(2, max_card + 1)) for _ in range(n_nodes))
    visible = tuple(range(n_nodes - n_visible, n_nodes))
    hidden = tuple(range(n_nodes - n_visible))
    space = StateSpace(cards, visible, hidden)
    kernels: list[KernelSpec] = []
    for r in range(n_nodes):
        binary = cards[r] == 2 and all(cards[p] == 2 for p in dag.parents[r])
        choice = rng.integers(0, 3) if binary else rng.integers(1, 3)
        if choice == 0:
            kernels.append(SIGMOID)
        elif choice == 1:
            kernels.append(TABULAR_LOGIT)
        else:
            n_pa_cfg = 1
            for p in dag.parents[r]:
                n_pa_cfg *= cards[p]
            d_r = int(rng.integers(1, 4))
            kernels.append(exp_family(rng.uniform(-1.0, 1.0, size=(d_r, n_pa_cfg, cards[r]))))
    return DagModel(space, dag, kernels)


def random_params(
    model: DagModel, rng: np.random.Generator, low: float = -1.0, high: float = 1.0
) -> np.ndarray:
    return rng.uniform(low, high, size=model.param_count)


def init_params(model: DagModel, rng: np.random.Generator) -> np.ndarray:
    """Training initialisation: weights/logits U[-0.5, 0.5], thresholds 0.

    Small symmetric draws keep sigmoid units away from saturation.
    """
    params = rng.uniform(-0.5, 0.5, size=model.param_count)
    from .dag_model import KernelFamily

    for r in range(model.dag.node_count):
        if model.kernels[r].family is KernelFamily.SIGMOID:
            params[model.flat_index(r, model.block_dims[r] - 1)] = 0.0
    return params


def random_target(model: DagModel, rng: np.random.Generator, concentration: float = 1.0) -> np.ndarray:
    """Strictly positive random target distribution on the visible units."""
    from .state_space import config_count

    n = config_count(model.space, model.space.visible)
    t = rng.gamma(concentration, 1.0, size=n) + 1e-3
    return t / t.sum()
