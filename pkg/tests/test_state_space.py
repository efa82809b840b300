"""Mixed-radix indexing, enumeration, and restriction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from natgradnet.state_space import (
    Config,
    ConfigSpaceError,
    StateSpace,
    binary_space,
    config_count,
    config_to_index,
    enumerate_configs,
    index_to_config,
    restrict,
    subset_index_of_joint,
)


class TestConfigCount:
    def test_two_binary_units(self):
        space = binary_space(2, visible=(0,))
        assert config_count(space, (0, 1)) == 4

    def test_empty_subset_is_one(self):
        space = binary_space(3, visible=(0,))
        assert config_count(space, ()) == 1

    def test_mixed_cardinalities(self):
        space = StateSpace((2, 3), (0,), (1,))
        assert config_count(space, (0, 1)) == 6

    def test_unknown_unit_rejected(self):
        space = binary_space(2, visible=(0,))
        with pytest.raises(ConfigSpaceError):
            config_count(space, (5,))


class TestIndexing:
    def test_first_unit_most_significant(self):
        space = binary_space(2, visible=(0,))
        cfg = Config.from_spins((0, 1), (1, -1))
        assert config_to_index(space, (0, 1), cfg) == 2

    def test_all_zero_states_index_zero(self):
        space = StateSpace((3, 2, 4), (0, 1, 2), ())
        cfg = Config((0, 1, 2), (0, 0, 0))
        assert config_to_index(space, (0, 1, 2), cfg) == 0

    def test_mixed_radix_value(self):
        space = StateSpace((2, 3), (0,), (1,))
        assert config_to_index(space, (0, 1), Config((0, 1), (1, 2))) == 5

    def test_index_zero_is_all_minimal(self):
        space = StateSpace((2, 3), (0,), (1,))
        assert index_to_config(space, (0, 1), 0).states == (0, 0)

    def test_index_three_binary_pair(self):
        space = binary_space(2, visible=(0,))
        assert index_to_config(space, (0, 1), 3).spins() == (1, 1)

    def test_out_of_range_index(self):
        space = binary_space(2, visible=(0,))
        with pytest.raises(ConfigSpaceError):
            index_to_config(space, (0, 1), 4)

    def test_out_of_range_state(self):
        space = StateSpace((2, 3), (0,), (1,))
        with pytest.raises(ConfigSpaceError):
            config_to_index(space, (0, 1), Config((0, 1), (0, 3)))

    def test_round_trip_2_3_2(self):
        space = StateSpace((2, 3, 2), (0, 1, 2), ())
        subset = (0, 1, 2)
        for idx in range(12):
            cfg = index_to_config(space, subset, idx)
            assert config_to_index(space, subset, cfg) == idx

    @given(
        cards=st.lists(st.integers(2, 4), min_size=1, max_size=5),
        data=st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_random_spaces(self, cards, data):
        space = StateSpace(tuple(cards), tuple(range(len(cards))), ())
        total = config_count(space, space.units)
        idx = data.draw(st.integers(0, total - 1))
        cfg = index_to_config(space, space.units, idx)
        assert config_to_index(space, space.units, cfg) == idx


class TestRestrict:
    def test_to_visible(self):
        cfg = Config.from_spins((0, 1), (1, -1))
        assert restrict(cfg, (0,)).spins() == (1,)

    def test_full_set_identity(self):
        cfg = Config((0, 1, 2), (1, 0, 1))
        assert restrict(cfg, (0, 1, 2)) == cfg

    def test_empty_subset(self):
        cfg = Config((0, 1), (1, 0))
        assert restrict(cfg, ()).states == ()


class TestEnumeration:
    @pytest.mark.parametrize("cards", [(2, 2), (2, 3, 2), (3, 3), (2, 2, 2, 2)])
    def test_enumeration_matches_indexing(self, cards):
        space = StateSpace(cards, tuple(range(len(cards))), ())
        cfgs = enumerate_configs(space)
        assert len(cfgs) == config_count(space, space.units)
        assert len({tuple(row) for row in cfgs}) == len(cfgs)
        for k, row in enumerate(cfgs):
            cfg = Config(space.units, tuple(int(s) for s in row))
            assert config_to_index(space, space.units, cfg) == k

    def test_restrict_commutes_with_enumeration(self):
        space = StateSpace((2, 3, 2), (0, 2), (1,))
        joint = enumerate_configs(space)
        restricted = {
            tuple(restrict(Config(space.units, tuple(int(s) for s in row)), (0, 2)).states)
            for row in joint
        }
        expected = {tuple(int(s) for s in row) for row in enumerate_configs(space, (0, 2))}
        assert restricted == expected

    def test_subset_index_of_joint(self):
        space = StateSpace((2, 3, 2), (0, 1, 2), ())
        col = subset_index_of_joint(space, (0, 2))
        cfgs = enumerate_configs(space)
        for k, row in enumerate(cfgs):
            cfg = Config((0, 2), (int(row[0]), int(row[2])))
            assert col[k] == config_to_index(space, (0, 2), cfg)


class TestSpaceValidation:
    def test_cardinality_below_two_rejected(self):
        with pytest.raises(ConfigSpaceError):
            StateSpace((1, 2), (0,), (1,))

    def test_overlapping_split_rejected(self):
        with pytest.raises(ConfigSpaceError):
            StateSpace((2, 2), (0, 1), (1,))

    def test_incomplete_split_rejected(self):
        with pytest.raises(ConfigSpaceError):
            StateSpace((2, 2), (0,), ())

    def test_cap_guard(self):
        with pytest.raises(ConfigSpaceError):
            StateSpace((2,) * 30, tuple(range(30)), ())

    def test_spin_round_trip(self):
        cfg = Config.from_spins((0, 1, 2), (-1, 1, -1))
        assert cfg.states == (0, 1, 0)
        assert cfg.spins() == (-1, 1, -1)
