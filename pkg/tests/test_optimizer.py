import numpy as np
import pytest

from teamform.data import gen_rsca, gen_rsim
from teamform.errors import CapacityExceededError
from teamform.mechanisms import run_mechanism
from teamform.metrics import social_welfare
from teamform.model import (
    Game,
    Partition,
    SerialOrder,
    count_partitions,
    enumerate_partitions,
    normalize,
    validate_partition,
)
from teamform.optimizer import DEFAULT_MAX_NODES, WelfareSearch, max_welfare

from conftest import random_game


def brute_force_optimum(game):
    best_value, best = -1.0, None
    for p in enumerate_partitions(game.n, game.k_min, game.k_max, sizes=game.schedule):
        value = social_welfare(game, p)
        if value > best_value + 1e-9:
            best_value, best = value, p
    return best, best_value


class TestMaxWelfare:
    def test_cycle_game(self, cycle_game):
        partition, value = max_welfare(cycle_game)
        assert partition == Partition.of([(0, 1), (2, 3)])
        assert value == pytest.approx(4.0)

    def test_zero_utilities(self):
        game = Game(np.zeros((6, 6)), 2, 3)
        partition, value = max_welfare(game)
        assert validate_partition(game, partition)
        assert value == 0.0

    def test_value_matches_partition(self, rng):
        game = random_game(rng, 8, 4)
        partition, value = max_welfare(game)
        assert value == pytest.approx(social_welfare(game, partition))

    @pytest.mark.parametrize("n, k_min, k_max", [(6, 3, 3), (6, 2, 2), (7, 2, 3), (8, 4, 4), (8, 3, 4)])
    def test_matches_enumeration(self, n, k_min, k_max, rng):
        for _ in range(15):
            game = random_game(rng, n, k_min, k_max, integer=bool(rng.integers(2)))
            partition, value = max_welfare(game)
            _, expected = brute_force_optimum(game)
            assert value == pytest.approx(expected)
            assert partition.sizes() == game.schedule

    @pytest.mark.slow
    @pytest.mark.parametrize("n, k", [(6, 3), (8, 4), (9, 3)])
    def test_matches_enumeration_full(self, n, k, rng):
        for _ in range(100):
            game = random_game(rng, n, k)
            _, value = max_welfare(game)
            assert value == pytest.approx(brute_force_optimum(game)[1])

    def test_beats_every_mechanism(self, rng):
        for _ in range(10):
            game = random_game(rng, 8, 2, 3)
            _, value = max_welfare(game)
            order = SerialOrder.random(8, rng)
            for name in ("rsd", "hbs", "opop"):
                assert value >= social_welfare(game, run_mechanism(name, game, order)) - 1e-9

    def test_node_guard(self, rng):
        with pytest.raises(CapacityExceededError):
            max_welfare(random_game(rng, 12, 4), max_nodes=10)


class TestWelfareSearch:
    def test_counts_nodes(self, rng):
        game = random_game(rng, 6, 3)
        result = WelfareSearch(game).run()
        assert result.nodes > 0
        assert validate_partition(game, result.incumbent)
        assert result.incumbent_value == pytest.approx(social_welfare(game, result.incumbent))

    def test_unplaced_sets_solved_once(self, rng):
        game = random_game(rng, 16, 4)
        result = WelfareSearch(game).run()
        assert result.nodes < count_partitions(16, 4, 4) / 5
        assert result.incumbent_value == pytest.approx(social_welfare(game, result.incumbent))

    def test_grand_coalition(self, rng):
        game = random_game(rng, 5, 5)
        result = WelfareSearch(game).run()
        assert result.incumbent == Partition.of([range(5)])

    @pytest.mark.slow
    @pytest.mark.parametrize("generator, level", [(gen_rsim, 0.25), (gen_rsca, 0.35)])
    def test_twenty_agents_within_default_limit(self, generator, level):
        game = generator(20, np.random.default_rng(0), 5, 5)
        result = WelfareSearch(game).run()
        assert result.nodes <= DEFAULT_MAX_NODES
        assert validate_partition(game, result.incumbent)
        order = SerialOrder.identity(20)
        for name in ("rsd", "hbs", "opop"):
            assert result.incumbent_value >= social_welfare(game, run_mechanism(name, game, order)) - 1e-9
        normalized = social_welfare(normalize(game), result.incumbent, normalized=True)
        assert normalized == pytest.approx(level, abs=0.05)
