from collections import Counter

import numpy as np
import pytest

from teamform.errors import CannotDeviateError, CapacityExceededError
from teamform.harness import (
    gen_deviation,
    mechanism_key,
    order_sweep,
    regret_estimate,
    stream,
    unique_deviations,
)
from teamform.mechanisms import run_mechanism
from teamform.model import Game, SerialOrder

from conftest import random_game

A, B, C, D, E, F = range(6)


class TestStreams:
    def test_reproducible(self):
        assert stream(3, 1, 2).random() == stream(3, 1, 2).random()

    def test_independent_keys(self):
        assert stream(3, 1).random() != stream(3, 2).random()

    def test_mechanism_keys_distinct(self):
        keys = [mechanism_key(name) for name in ("rsd", "hbs", "opop", "aceei", "maxwelfare")]
        assert len(set(keys)) == 5


class TestGenDeviation:
    def test_preserves_values(self, rng):
        row = [0.0, 5.0, 1.0, 3.0, 2.0, 4.0]
        for _ in range(200):
            report = gen_deviation(row, 0, rng)
            assert Counter(report.deviated_row) == Counter(report.original_row)
            assert report.deviated_row[0] == 0.0
            assert len(report.swaps) >= 1

    def test_swaps_replay(self, rng):
        row = [3.0, 0.0, 1.0, 7.0, 2.0]
        report = gen_deviation(row, 1, rng)
        replayed = list(row)
        for a, b in report.swaps:
            assert 1 not in (a, b)
            replayed[a], replayed[b] = replayed[b], replayed[a]
        assert tuple(replayed) == report.deviated_row

    def test_flat_row(self, rng):
        with pytest.raises(CannotDeviateError):
            gen_deviation([0.0, 2.0, 2.0, 2.0], 0, rng)

    def test_favors_top_ranks(self, rng):
        row = [0.0] + [float(v) for v in range(1, 10)]
        moved = Counter()
        for _ in range(2000):
            for a, _ in gen_deviation(row, 0, rng).swaps:
                moved[a] += 1
        assert moved[9] > moved[1]


class TestUniqueDeviations:
    def test_distinct_and_untruthful(self, rng):
        row = [0.0, 5.0, 1.0, 3.0, 2.0, 4.0]
        reports = unique_deviations(row, 0, 25, rng)
        rows = [r.deviated_row for r in reports]
        assert len(rows) == 25
        assert len(set(rows)) == 25
        assert tuple(row) not in rows

    def test_exhaustion_warns(self, rng, caplog):
        row = [0.0, 1.0, 2.0]
        reports = unique_deviations(row, 0, 5, rng, max_attempts=200)
        assert len(reports) == 1
        assert "distinct misreports" in caplog.text


class TestOrderSweep:
    def test_too_many_agents(self, rng):
        game = random_game(rng, 9, 3)
        with pytest.raises(CapacityExceededError):
            order_sweep(game, "rsd", 0, list(game.rows[0]))

    def test_truthful_report_changes_nothing(self, draft_incentive_game):
        sweep = order_sweep(draft_incentive_game, "opop", A, list(draft_incentive_game.rows[A]))
        assert sweep.better == sweep.worse == 0
        assert sweep.mean_gain == 0.0


class TestRegretEstimate:
    def test_rsd_has_no_regret(self, rng):
        for seed in range(3):
            game = random_game(rng, 6, 3)
            result = regret_estimate(game, "rsd", runs=4, deviations_per_agent=10, seed=seed)
            assert result.per_run == [0.0] * 4
            assert result.mean == 0.0

    def test_rsd_no_regret_generated(self):
        from teamform.data import gen_rsca, gen_rsim
        for index in range(3):
            for generator in (gen_rsim, gen_rsca):
                game = generator(8, np.random.default_rng([9, index]), 4, 4)
                result = regret_estimate(game, "rsd", runs=2, deviations_per_agent=5, seed=index)
                assert max(result.per_run) == 0.0

    def test_gains_measured_on_true_row(self, draft_incentive_game, draft_misreport):
        order = SerialOrder((A, D, B, C, E, F))
        truthful = run_mechanism("hbs", draft_incentive_game, order)
        lying = run_mechanism("hbs", draft_incentive_game.with_row(A, draft_misreport), order)
        honest_value = draft_incentive_game.value(A, truthful.team_of(A))
        deviated_value = draft_incentive_game.value(A, lying.team_of(A))
        assert (deviated_value - honest_value) / draft_incentive_game.total(A) == pytest.approx(4.7 / 17.1)

    def test_best_gains_stay_normalized(self, draft_incentive_game):
        result = regret_estimate(draft_incentive_game, "hbs", runs=6, deviations_per_agent=25, seed=0)
        assert all(gain >= -1.0 for gain in result.best_gain.values())
        assert result.mean >= 0.0

    def test_interval_and_floor(self, draft_incentive_game):
        result = regret_estimate(draft_incentive_game, "hbs", runs=5, deviations_per_agent=10, seed=1)
        assert len(result.per_run) == 5
        assert all(v >= 0.0 for v in result.per_run)
        assert result.mean == pytest.approx(np.mean(result.per_run))
        assert result.half_width >= 0.0

    def test_reproducible(self, draft_incentive_game):
        first = regret_estimate(draft_incentive_game, "opop", runs=3, deviations_per_agent=5, seed=2)
        second = regret_estimate(draft_incentive_game, "opop", runs=3, deviations_per_agent=5, seed=2)
        assert first.per_run == second.per_run

    def test_worker_pool_matches_serial(self, draft_incentive_game):
        serial = regret_estimate(draft_incentive_game, "hbs", runs=2, deviations_per_agent=5, seed=4)
        pooled = regret_estimate(draft_incentive_game, "hbs", runs=2, deviations_per_agent=5, seed=4, workers=2)
        assert pooled.per_run == serial.per_run

    def test_indifferent_agents_skipped(self):
        matrix = np.ones((4, 4))
        matrix[0] = 0.0
        game = Game(matrix, 2, 2)
        result = regret_estimate(game, "hbs", runs=2, deviations_per_agent=3)
        assert 0 not in result.best_gain

    def test_aceei_options_passed(self, cycle_game):
        result = regret_estimate(cycle_game, "aceei", runs=2, deviations_per_agent=2, seed=0,
                                 options={"tabu_iters": 2})
        assert len(result.per_run) == 2

    @pytest.mark.slow
    def test_rsd_no_regret_full_scale(self):
        from teamform.data import gen_rsca, gen_rsim
        for index in range(20):
            for generator in (gen_rsim, gen_rsca):
                game = generator(20, np.random.default_rng([0, index]), 5, 5)
                result = regret_estimate(game, "rsd", runs=8, deviations_per_agent=25, seed=0)
                assert max(result.per_run) == 0.0
