from itertools import combinations

import numpy as np
import pytest

from teamform.aceei import (
    DEFAULT_EPSILON,
    BudgetVector,
    DemandProfile,
    PriceSearch,
    PriceState,
    aceei_tf,
    assign_budgets,
    clearing_error,
    clearing_norm,
    demand,
    initial_prices,
    is_exact_clearing,
    is_relaxed_clearing,
    price_scale,
    price_search,
    price_update,
    stranded_agents,
    tatonnement,
)
from teamform.data import gen_rsca
from teamform.mechanisms import rsd
from teamform.model import Game, Partition, SerialOrder, legal_team_sizes, validate_partition

from conftest import random_game

A, B, C, D = range(4)


def brute_force_demand(game, i, remaining, prices, budget, legal_sizes):
    others = sorted(j for j in remaining if j != i)
    best_value, best = -1.0, ()
    for size in sorted(set(legal_sizes)):
        for bundle in combinations(others, size - 1):
            if sum(prices[j] for j in bundle) > budget + 1e-12:
                continue
            value = sum(game.rows[i][j] for j in bundle)
            if value > best_value + 1e-12 or (abs(value - best_value) <= 1e-12 and bundle < best):
                best_value, best = value, bundle
    return best


def mutual_pairs_game():
    # 0 and 1 favor each other, as do 2 and 3
    matrix = np.array([
        [0, 5, 1, 1],
        [5, 0, 1, 1],
        [1, 1, 0, 5],
        [1, 1, 5, 0],
    ], dtype=float)
    return Game(matrix, 2, 2)


class TestBudgets:
    def test_bounds(self, rng):
        budgets = assign_budgets(20, rng)
        assert budgets.n == 20
        assert all(1.0 <= b < 1.025 for b in budgets.b)
        assert budgets.b_bar == pytest.approx(1.025)

    def test_distinct(self, rng):
        for n in (2, 5, 40):
            budgets = assign_budgets(n, rng)
            assert len(set(budgets.b)) == n

    def test_seeded(self):
        assert assign_budgets(10, np.random.default_rng(7)) == assign_budgets(10, np.random.default_rng(7))

    def test_ratio(self, rng):
        for n in range(2, 30):
            budgets = assign_budgets(n, rng)
            assert max(budgets.b) / min(budgets.b) < 1 + 1 / n


class TestDemand:
    def test_free_agents(self, rng):
        game = random_game(rng, 6, 3)
        prices = {j: 0.0 for j in range(6)}
        bundle = demand(game, 0, range(6), prices, 1.0, [3])
        row = game.rows[0]
        top = sorted((j for j in range(1, 6)), key=lambda j: -row[j])[:2]
        assert bundle == tuple(sorted(top))

    def test_cycle_game(self, cycle_game):
        prices = {j: 0.9 for j in range(4)}
        picks = [demand(cycle_game, i, range(4), prices, 1.0, [2]) for i in range(4)]
        assert picks == [(B,), (C,), (D,), (A,)]

    def test_nothing_affordable(self, rng):
        game = random_game(rng, 6, 3)
        prices = {j: 0.8 for j in range(6)}
        assert demand(game, 0, range(6), prices, 0.5, [3]) == ()

    def test_matches_enumeration(self, rng):
        for _ in range(300):
            n = int(rng.integers(4, 10))
            k_min = int(rng.integers(1, 3))
            k_max = int(rng.integers(k_min + 1, min(n, 5) + 1))
            game = random_game(rng, n, k_min, k_max)
            remaining = sorted(rng.choice(n, size=int(rng.integers(3, n + 1)), replace=False).tolist())
            legal = legal_team_sizes(len(remaining), k_min, k_max)
            if not legal:
                continue
            prices = {j: float(rng.uniform(0, 0.6)) for j in remaining}
            i = remaining[0]
            budget = float(rng.uniform(0.5, 1.5))
            assert demand(game, i, remaining, prices, budget, legal) == \
                brute_force_demand(game, i, remaining, prices, budget, legal)

    def test_split_size_runs(self, rng):
        game = random_game(rng, 9, 2, 5)
        prices = {j: float(rng.uniform(0, 0.4)) for j in range(9)}
        legal = [2, 4, 5]
        assert demand(game, 3, range(9), prices, 1.0, legal) == \
            brute_force_demand(game, 3, range(9), prices, 1.0, legal)

    def test_ties_pick_smallest_bundle(self):
        game = Game(np.ones((5, 5)), 1, 5)
        prices = {j: 0.0 for j in range(5)}
        assert demand(game, 2, range(5), prices, 1.0, [3]) == (0, 1)


class TestDemandProfile:
    def test_statistics(self):
        profile = DemandProfile.from_demands((0, 1, 2, 3), {0: (1,), 1: (0,), 2: (1,), 3: (1,)})
        assert profile.D.tolist() == [0, 2, 0, 0]
        assert profile.U.tolist() == [0, 0, 1, 1]

    def test_exclusive(self, rng):
        for _ in range(200):
            game = random_game(rng, 6, 2, 3)
            budgets = assign_budgets(6, rng)
            state = PriceState(tuple(range(6)), tuple(rng.uniform(0, budgets.b_bar, 6).tolist()), budgets.b_bar)
            profile, _ = clearing_error(game, state, budgets, [2, 3])
            assert not np.any((profile.D > 0) & (profile.U > 0))


class TestClearingError:
    def test_reciprocal_demands(self):
        game = mutual_pairs_game()
        budgets = BudgetVector((1.0, 1.01, 1.02, 1.03))
        state = PriceState.uniform(range(4), 0.0, budgets.b_bar)
        profile, z = clearing_error(game, state, budgets, [2])
        assert np.all(z == 0)
        assert is_relaxed_clearing(profile, state.prices)
        assert is_exact_clearing(profile, [2])

    def test_undemanded_agent(self, cycle_game):
        budgets = BudgetVector((1.0, 1.01, 1.02, 1.03))
        # Only B is affordable, so everyone but B wants B; nobody can afford anyone else
        state = PriceState((0, 1, 2, 3), (2.0, 0.1, 2.0, 2.0), budgets.b_bar)
        profile, z = clearing_error(cycle_game, state, budgets, [2])
        assert profile.U[C] == 1
        assert z[C] == pytest.approx(-1.0)

    def test_no_exact_clearing_in_cycle_game(self, cycle_game, rng):
        for _ in range(10_000):
            budgets = assign_budgets(4, rng)
            state = PriceState((0, 1, 2, 3), tuple(rng.uniform(0, budgets.b_bar, 4).tolist()), budgets.b_bar)
            profile, _ = clearing_error(cycle_game, state, budgets, [2])
            assert not is_exact_clearing(profile, [2])

    def test_norm_ignores_free_undemanded(self):
        z = np.array([-1.0, -1.0, 2.0])
        prices = np.array([0.0, 0.3, 0.5])
        assert clearing_norm(z, prices) == pytest.approx(np.sqrt(5.0))


class TestPriceUpdate:
    def test_fixed_point(self):
        state = PriceState((0, 1, 2, 3), (0.2, 0.4, 0.6, 0.8), 1.125)
        profile = DemandProfile((0, 1, 2, 3), {}, np.zeros(4, dtype=int), np.zeros(4, dtype=int))
        assert price_update(state, profile).aux == pytest.approx(state.aux)

    def test_hand_evaluation(self):
        state = PriceState((0, 1, 2, 3), (0.5, 0.5, 0.5, 0.5), 1.025, 0.01)
        profile = DemandProfile((0, 1, 2, 3), {}, np.array([2, 0, 0, 0]), np.array([0, 1, 0, 0]))
        updated = price_update(state, profile)
        assert updated.aux[0] == pytest.approx(0.5 + (1.01 - (0.01 / 1.025) * 0.5) * 2 / 4)
        assert updated.aux[1] == pytest.approx(0.5 - 0.25)
        assert updated.aux[2] == pytest.approx(0.5)

    def test_closure(self, rng):
        for _ in range(100_000 // 50):
            m = int(rng.integers(2, 30))
            b_bar = 1.0 + 1.0 / (2 * m)
            for _ in range(50):
                aux = rng.uniform(-1.0, 1.0 + b_bar, m)
                D = rng.integers(0, m, m)
                U = np.where(D == 0, rng.integers(0, 2, m), 0)
                state = PriceState(tuple(range(m)), tuple(aux.tolist()), b_bar, DEFAULT_EPSILON)
                updated = np.asarray(price_update(state, DemandProfile(tuple(range(m)), {}, D, U)).aux)
                assert np.all(updated >= -1.0)
                assert np.all(updated <= 1.0 + b_bar)

    def test_fixed_points_clear(self, rng):
        for _ in range(1000):
            game = random_game(rng, 4, 2)
            budgets = assign_budgets(4, rng)
            state = PriceState((0, 1, 2, 3), tuple(rng.choice([0.0, 0.3, 0.6, 0.9], 4).tolist()), budgets.b_bar)
            profile, z = clearing_error(game, state, budgets, [2])
            if np.allclose(price_update(state, profile).aux, state.prices):
                assert is_relaxed_clearing(profile, state.prices)


class TestPriceSearch:
    def test_clearing_start_is_kept(self):
        game = mutual_pairs_game()
        budgets = BudgetVector((1.0, 1.01, 1.02, 1.03))
        start = PriceState.uniform(range(4), 0.0, budgets.b_bar)
        assert price_search(game, budgets, [2], start).aux == start.aux

    def test_never_worse_than_start(self, rng):
        for _ in range(10):
            game = random_game(rng, 6, 3)
            budgets = assign_budgets(6, rng)
            start = initial_prices(range(6), budgets, game.k_max)
            search = PriceSearch(game, budgets, [3], iterations=5)
            best = search.run(start)
            assert search.evaluate(best).error <= search.evaluate(start).error

    def test_no_agent_stranded_from_initial_prices(self, rng):
        for _ in range(10):
            game = random_game(rng, 8, 4)
            budgets = assign_budgets(8, rng)
            start = initial_prices(range(8), budgets, game.k_max)
            search = PriceSearch(game, budgets, [4], iterations=8)
            assert search.evaluate(start).stranded == 0
            assert search.evaluate(search.run(start)).stranded == 0

    def test_demands_survive_on_scattered_preferences(self):
        game = gen_rsca(20, np.random.default_rng(0), 5, 5)
        budgets = assign_budgets(20, np.random.default_rng(3))
        search = PriceSearch(game, budgets, [5])
        start = initial_prices(range(20), budgets, game.k_max)
        best = search.run(start)
        profile = search.evaluate(best).profile
        assert any(profile.demand.values())
        for i, price in best.price_map().items():
            if price > 0:
                assert len(profile.demand[i]) == 4
        assert search.evaluate(best).error <= search.evaluate(start).error

    def test_raised_price_reuses_demands(self, rng):
        for _ in range(50):
            game = random_game(rng, 7, 2, 3)
            budgets = assign_budgets(7, rng)
            parent = PriceState(tuple(range(7)), tuple(rng.uniform(0.1, 0.6, 7).tolist()), budgets.b_bar)
            raised = np.asarray(parent.prices)
            raised[int(rng.integers(7))] += float(rng.uniform(0.001, 0.3))
            child = parent.with_prices(raised)

            search = PriceSearch(game, budgets, [2, 3])
            search.evaluate(parent)
            reused = search.evaluate(child, parent)
            fresh, z = clearing_error(game, child, budgets, [2, 3])
            assert reused.profile.demand == fresh.demand
            assert reused.z == pytest.approx(z)

    def test_lowered_price_recomputes(self, rng):
        game = random_game(rng, 6, 3)
        budgets = assign_budgets(6, rng)
        parent = initial_prices(range(6), budgets, game.k_max)
        lowered = np.asarray(parent.prices)
        lowered[0] = 0.0
        search = PriceSearch(game, budgets, [3])
        search.evaluate(parent)
        search.evaluate(parent.with_prices(lowered), parent)
        assert search.demand_calls == 12

    def test_stranded_count(self):
        profile = DemandProfile.from_demands((0, 1, 2, 3), {0: (1,), 1: (0,), 2: (), 3: ()})
        assert stranded_agents(profile, np.array([0.5, 0.5, 0.5, 0.0])) == 1
        assert stranded_agents(profile, np.array([0.5, 0.5, 0.0, 0.0])) == 0

    def test_two_agents_clear(self):
        game = Game(np.array([[0, 1], [1, 0]], dtype=float), 2, 2)
        budgets = BudgetVector((1.0, 1.1))
        start = initial_prices(range(2), budgets, 2)
        best = price_search(game, budgets, [2], start)
        profile, z = clearing_error(game, best, budgets, [2])
        assert clearing_norm(z, best.prices) == 0.0

    def test_tatonnement_never_worse(self, rng):
        game = random_game(rng, 6, 3)
        budgets = assign_budgets(6, rng)
        start = initial_prices(range(6), budgets, game.k_max)
        best = tatonnement(game, budgets, [3], start, 10)
        _, z_start = clearing_error(game, start, budgets, [3])
        _, z_best = clearing_error(game, best, budgets, [3])
        assert clearing_norm(z_best, best.prices) <= clearing_norm(z_start, start.prices)

    def test_price_scale(self):
        budgets = BudgetVector((1.0, 1.05, 1.1))
        assert price_scale(budgets) == pytest.approx(0.01)
        assert initial_prices(range(3), budgets, 3).aux == (0.5, 0.5, 0.5)


class TestACEEITF:
    def test_grand_coalition(self, rng):
        game = random_game(rng, 5, 5)
        assert aceei_tf(game, SerialOrder.random(5, rng), rng) == Partition.of([range(5)])

    def test_cycle_game_pairs(self, cycle_game):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            p = aceei_tf(cycle_game, SerialOrder.random(4, rng), rng)
            assert validate_partition(cycle_game, p)
            assert p.sizes() == [2, 2]

    def test_deterministic(self, rng):
        game = random_game(rng, 6, 3)
        order = SerialOrder.random(6, rng)
        first = aceei_tf(game, order, np.random.default_rng(11))
        assert aceei_tf(game, order, np.random.default_rng(11)) == first

    @pytest.mark.parametrize("search", ["tabu", "tatonnement"])
    def test_follows_schedule(self, search, rng):
        for n, k_min, k_max in [(6, 3, 3), (7, 2, 3), (9, 2, 4), (12, 3, 4)]:
            for _ in range(5):
                game = random_game(rng, n, k_min, k_max)
                p = aceei_tf(game, SerialOrder.random(n, rng), rng, tabu_iters=5, search=search)
                assert validate_partition(game, p)
                assert p.sizes() == game.schedule

    def test_fixed_budgets(self, cycle_game):
        budgets = BudgetVector((1.0, 1.01, 1.02, 1.03))
        order = SerialOrder((A, B, C, D))
        p = aceei_tf(cycle_game, order, np.random.default_rng(0), budgets=budgets)
        assert p == aceei_tf(cycle_game, order, np.random.default_rng(99), budgets=budgets)

    def test_unknown_search(self, cycle_game, rng):
        with pytest.raises(ValueError):
            aceei_tf(cycle_game, SerialOrder.identity(4), rng, search="annealing")

    def test_team_sizes_stay_scheduled(self, rng):
        # Any size in 3..4 leaves a coverable rest of 12, but only 4 is scheduled
        game = random_game(rng, 12, 3, 4)
        assert legal_team_sizes(12, 3, 4) == [3, 4]
        p = aceei_tf(game, SerialOrder.random(12, rng), rng, tabu_iters=5)
        assert p.sizes() == [4, 4, 4]

    @pytest.mark.slow
    def test_differs_from_rsd(self):
        differs = 0
        for seed in range(6):
            game = gen_rsca(20, np.random.default_rng([1, seed]), 5, 5)
            order = SerialOrder.random(20, np.random.default_rng([2, seed]))
            if aceei_tf(game, order, np.random.default_rng(seed)) != rsd(game, order):
                differs += 1
        assert differs >= 4
