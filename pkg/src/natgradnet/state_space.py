"""Finite configuration spaces with mixed-radix indexing.

Every table in this package (joint distributions, kernels, Fisher
conditioning marginals) is a dense vector over the configurations of a
finite set of units.  Configurations are indexed mixed-radix with the
FIRST unit of the indexing subset most significant, so table layouts are
deterministic across modules.

Binary units use the state set {-1, +1}; state index 0 maps to -1 and
index 1 to +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

#: Hard cap on the number of joint configurations (memory guard for the
#: exact-enumeration code paths).
MAX_CONFIGS = 1 << 26


class ConfigSpaceError(ValueError):
    """Raised for malformed spaces, unknown units, or out-of-range states."""


@dataclass(frozen=True)
class StateSpace:
    """Finite product space over units 0..n-1 with a visible/hidden split.

    cardinalities[i] is the number of states of unit i (all >= 2).
    ``visible`` and ``hidden`` are disjoint sorted unit tuples whose union
    is the full unit set.
    """

    cardinalities: tuple[int, ...]
    visible: tuple[int, ...]
    hidden: tuple[int, ...]

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "visible", tuple(sorted(int(u) for u in self.visible)))
        object.__setattr__(self, "hidden", tuple(sorted(int(u) for u in self.hidden)))
        n = len(cards)
        if any(c < 2 for c in cards):
            raise ConfigSpaceError(f"all cardinalities must be >= 2, got {cards}")
        vis, hid = set(self.visible), set(self.hidden)
        if vis & hid:
            raise ConfigSpaceError(f"visible and hidden overlap: {sorted(vis & hid)}")
        if vis | hid != set(range(n)):
            raise ConfigSpaceError("visible and hidden must partition the unit set")
        total = 1
        for c in cards:
            total *= c
            if total > MAX_CONFIGS:
                raise ConfigSpaceError(
                    f"configuration count exceeds the cap 2^26 ({MAX_CONFIGS})"
                )

    @property
    def unit_count(self) -> int:
        return len(self.cardinalities)

    @property
    def units(self) -> tuple[int, ...]:
        return tuple(range(len(self.cardinalities)))

    def check_units(self, subset: Iterable[int]) -> tuple[int, ...]:
        subset = tuple(int(u) for u in subset)
        for u in subset:
            if not 0 <= u < self.unit_count:
                raise ConfigSpaceError(f"unknown unit index {u}")
        if len(set(subset)) != len(subset):
            raise ConfigSpaceError(f"duplicate unit in subset {subset}")
        return subset


def binary_space(n_units: int, visible: Iterable[int]) -> StateSpace:
    """All-binary space with the given visible units; the rest are hidden."""
    visible = tuple(sorted(visible))
    hidden = tuple(u for u in range(n_units) if u not in set(visible))
    return StateSpace((2,) * n_units, visible, hidden)


@dataclass(frozen=True)
class Config:
    """States of an ordered unit tuple; binary index 0 is spin -1, 1 is +1."""

    units: tuple[int, ...]
    states: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(int(u) for u in self.units))
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        if len(self.units) != len(self.states):
            raise ConfigSpaceError("units and states must have equal length")

    def state_of(self, unit: int) -> int:
        try:
            return self.states[self.units.index(unit)]
        except ValueError:
            raise ConfigSpaceError(f"unit {unit} not in config") from None

    def spins(self) -> tuple[int, ...]:
        """The +-1 view of a binary config."""
        return tuple(2 * s - 1 for s in self.states)

    @classmethod
    def from_spins(cls, units: Iterable[int], spins: Iterable[int]) -> "Config":
        states = []
        for s in spins:
            if s not in (-1, 1):
                raise ConfigSpaceError(f"spin must be -1 or +1, got {s}")
            states.append((s + 1) // 2)
        return cls(tuple(units), tuple(states))


def config_count(space: StateSpace, subset: Iterable[int]) -> int:
    """Number of configurations of ``subset``; the empty subset has 1."""
    subset = space.check_units(subset)
    count = 1
    for u in subset:
        count *= space.cardinalities[u]
    return count


def _strides(cards: Sequence[int]) -> np.ndarray:
    """Mixed-radix strides, first position most significant."""
    k = len(cards)
    strides = np.ones(k, dtype=np.int64)
    for i in range(k - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]
    return strides


def config_to_index(space: StateSpace, subset: Sequence[int], config: Config) -> int:
    """Mixed-radix index of ``config`` on the ordered ``subset``."""
    subset = space.check_units(subset)
    cards = [space.cardinalities[u] for u in subset]
    strides = _strides(cards)
    index = 0
    for pos, u in enumerate(subset):
        s = config.state_of(u)
        if not 0 <= s < cards[pos]:
            raise ConfigSpaceError(
                f"state {s} out of range for unit {u} (cardinality {cards[pos]})"
            )
        index += s * int(strides[pos])
    return index


def index_to_config(space: StateSpace, subset: Sequence[int], index: int) -> Config:
    """Inverse of :func:`config_to_index`."""
    subset = space.check_units(subset)
    total = config_count(space, subset)
    if not 0 <= index < total:
        raise ConfigSpaceError(f"index {index} out of range [0, {total})")
    cards = [space.cardinalities[u] for u in subset]
    strides = _strides(cards)
    states = tuple(int(index // strides[pos]) % cards[pos] for pos in range(len(subset)))
    return Config(subset, states)


def restrict(config: Config, subset: Iterable[int]) -> Config:
    """Sub-configuration on ``subset``, in the order ``subset`` lists its units."""
    subset = tuple(int(u) for u in subset)
    return Config(subset, tuple(config.state_of(u) for u in subset))


def enumerate_configs(space: StateSpace, subset: Sequence[int] | None = None) -> np.ndarray:
    """(N, k) array of all configurations of ``subset``, in index order.

    Row ``i`` is ``index_to_config(space, subset, i).states``.
    """
    subset = space.units if subset is None else space.check_units(subset)
    total = config_count(space, subset)
    if total > MAX_CONFIGS:
        raise ConfigSpaceError("configuration count exceeds the cap 2^26")
    cards = [space.cardinalities[u] for u in subset]
    strides = _strides(cards)
    idx = np.arange(total, dtype=np.int64)
    out = np.empty((total, len(subset)), dtype=np.int64)
    for pos in range(len(subset)):
        out[:, pos] = (idx // strides[pos]) % cards[pos]
    return out


def subset_index_of_joint(space: StateSpace, subset: Sequence[int]) -> np.ndarray:
    """(N,) map from full-space config index to the config index on ``subset``.

    The workhorse for marginalisation and for conditioning distributions:
    ``np.bincount(subset_index_of_joint(...), weights=probs)`` sums a joint
    table onto the subset.
    """
    subset = space.check_units(subset)
    n_joint = config_count(space, space.units)
    joint_strides = _strides(space.cardinalities)
    sub_strides = _strides([space.cardinalities[u] for u in subset])
    idx = np.arange(n_joint, dtype=np.int64)
    out = np.zeros(n_joint, dtype=np.int64)
    for pos, u in enumerate(subset):
        col = (idx // joint_strides[u]) % space.cardinalities[u]
        out += col * sub_strides[pos]
    return out


def spins_from_states(states: np.ndarray) -> np.ndarray:
    """Vectorised state-index -> spin map for binary units."""
    return 2 * np.asarray(states, dtype=np.int64) - 1
