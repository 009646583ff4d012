"""Tests for the Monte Carlo harness.

The load-bearing property is exact equivalence between the vectorized
lockstep kernel and the step-by-step reference path: same arms, same
cumulative floats, bit for bit.  Everything else (intervals, bounds
columns, summaries) is tested against closed forms or frozen values.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from cbandits.core import (
    Arm,
    Bernoulli,
    Beta,
    Discrete,
    PointMass,
    ProblemInstance,
    ValidationError,
)
from cbandits.strategies import (
    POLICY_CONSTRAINED,
    POLICY_UNCONSTRAINED,
    POLICY_UNIFORM,
    TIE_LOWEST_INDEX,
    TIE_UNIFORM,
    ConstantSchedule,
    InverseTimeSchedule,
    SelectionEvent,
)
from cbandits.analysis import delta_best_arms, exact_selection_probability
import cbandits.harness as harness
from cbandits.harness import (
    RESULTS_CSV_COLUMNS,
    ExperimentConfig,
    MonteCarloEstimate,
    run_chunk,
    run_experiment,
    run_trial,
    regret_metric,
    wilson_interval,
    write_results_csv,
    write_summary_json,
    _chunk_bounds,
)


def mixed_instance() -> ProblemInstance:
    return ProblemInstance(
        arms=(
            Arm(Bernoulli(0.7), Bernoulli(0.3)),
            Arm(Beta(2.0, 3.0), Discrete((0.2, 0.6, 1.0), (0.3, 0.4, 0.3))),
            Arm(PointMass(0.55), Beta(1.5, 2.5)),
        ),
        constraint_level=0.5,
    )


def separated_instance() -> ProblemInstance:
    return ProblemInstance(
        arms=(
            Arm(Bernoulli(0.7), Bernoulli(0.3)),
            Arm(Bernoulli(0.5), Bernoulli(0.7)),
        ),
        constraint_level=0.5,
    )


def base_config(**overrides) -> ExperimentConfig:
    kwargs = dict(
        instance=separated_instance(),
        schedule=InverseTimeSchedule(5.0),
        checkpoints=(1, 7, 50),
        deltas=(0.0,),
        replications=32,
        master_seed=11,
    )
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


class TestWilsonInterval:
    def test_frozen_midpoint_example(self):
        low, high = wilson_interval(50, 100, 1.96)
        assert low == pytest.approx(0.404, abs=1e-3)
        assert high == pytest.approx(0.596, abs=1e-3)

    def test_matches_quadratic_roots_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 5000))
            s = int(rng.integers(0, n + 1))
            z = float(rng.uniform(0.5, 5.0))
            low, high = wilson_interval(s, n, z)
            # Interval endpoints solve (p_hat - p)^2 = z^2 p (1 - p) / n.
            p_hat = s / n
            z2n = z * z / n
            roots = np.roots([1.0 + z2n, -(2.0 * p_hat + z2n), p_hat * p_hat])
            lo_ref, hi_ref = sorted(float(r) for r in roots.real)
            assert low == pytest.approx(max(0.0, lo_ref), abs=1e-12)
            assert high == pytest.approx(min(1.0, hi_ref), abs=1e-12)

    def test_boundaries(self):
        low, high = wilson_interval(0, 17)
        assert low == 0.0 and high > 0.0
        low, high = wilson_interval(17, 17)
        assert high == 1.0 and low < 1.0

    def test_contains_point_estimate(self):
        for n in (1, 2, 10, 1000):
            for s in range(0, n + 1, max(1, n // 4)):
                low, high = wilson_interval(s, n)
                assert low <= s / n <= high

    def test_validation(self):
        with pytest.raises(ValidationError):
            wilson_interval(0, 0)
        with pytest.raises(ValidationError):
            wilson_interval(5, 4)
        with pytest.raises(ValidationError):
            wilson_interval(-1, 4)
        with pytest.raises(ValidationError):
            wilson_interval(1, 4, z=0.0)


class TestKernelMatchesReference:
    @pytest.mark.parametrize(
        "policy", [POLICY_CONSTRAINED, POLICY_UNIFORM, POLICY_UNCONSTRAINED]
    )
    @pytest.mark.parametrize("tie_rule", [TIE_LOWEST_INDEX, TIE_UNIFORM])
    def test_bitwise_equivalence(self, policy, tie_rule):
        config = ExperimentConfig(
            instance=mixed_instance(),
            schedule=InverseTimeSchedule(5.0),
            checkpoints=(1, 7, 50, 250),
            deltas=(0.0, 0.1, 1.0),
            replications=48,
            master_seed=2026,
            policy=policy,
            tie_rule=tie_rule,
        )
        chunk = run_chunk(config, 0, config.replications, keep_trajectories=True)
        successes = np.zeros_like(chunk.successes)
        for rep in range(config.replications):
            records = run_trial(config, rep)
            assert [r.t for r in records] == list(config.checkpoints)
            for ci, rec in enumerate(records):
                assert rec.arm == chunk.trajectory_arms[ci, rep]
                assert rec.cumulative_reward == chunk.trajectory_rewards[ci, rep]
                assert rec.cumulative_cost == chunk.trajectory_costs[ci, rep]
                successes[ci] += np.asarray(rec.events, dtype=np.int64)
        assert np.array_equal(successes, chunk.successes)

    def test_chunk_split_invariance(self):
        config = base_config(replications=40, checkpoints=(1, 9, 60))
        whole = run_chunk(config, 0, 40)
        split_successes = np.zeros_like(whole.successes)
        for lo, hi in ((0, 13), (13, 14), (14, 40)):
            split_successes += run_chunk(config, lo, hi).successes
        assert np.array_equal(whole.successes, split_successes)

    def test_trial_determinism(self):
        config = base_config()
        first = run_trial(config, 3)
        second = run_trial(config, 3)
        assert first == second
        others = [run_trial(config, i) for i in range(20)]
        assert any(o != first for o in others)


class TestRunExperiment:
    def test_oracle_agreement_small_horizon(self):
        instance = separated_instance()
        schedule = InverseTimeSchedule(2.0)
        config = ExperimentConfig(
            instance=instance,
            schedule=schedule,
            checkpoints=(1, 2, 3),
            deltas=(0.0,),
            replications=40_000,
            master_seed=99,
        )
        result = run_experiment(config)
        for estimate in result.estimates:
            oracle = exact_selection_probability(
                instance, schedule, estimate.t, deltas=(0.0,)
            )
            p = oracle.event_probability(0.0)
            width = 4.0 * math.sqrt(p * (1.0 - p) / config.replications)
            assert abs(estimate.p_hat - p) <= width, (estimate.t, estimate.p_hat, p)

    def test_first_checkpoint_is_uniform(self):
        config = base_config(checkpoints=(1,), replications=20_000, master_seed=4)
        result = run_experiment(config)
        best = delta_best_arms(config.instance, 0.0)
        p = len(best) / config.instance.num_arms
        width = 4.0 * math.sqrt(p * (1.0 - p) / config.replications)
        assert abs(result.estimates[0].p_hat - p) <= width

    def test_single_replication(self):
        config = base_config(replications=1)
        result = run_experiment(config)
        for estimate in result.estimates:
            assert estimate.p_hat in (0.0, 1.0)
            assert estimate.ci_low < estimate.ci_high
            assert estimate.replications == 1

    def test_uniform_baseline_tracks_delta_best_share(self):
        instance = ProblemInstance(
            arms=(
                Arm(PointMass(0.9), PointMass(0.7)),
                Arm(PointMass(0.8), PointMass(0.4)),
                Arm(PointMass(0.5), PointMass(0.3)),
            ),
            constraint_level=0.5,
        )
        config = ExperimentConfig(
            instance=instance,
            schedule=ConstantSchedule(0.5),
            checkpoints=(1, 10, 100),
            deltas=(0.0, 0.25),
            replications=3000,
            master_seed=12,
            policy=POLICY_UNIFORM,
        )
        result = run_experiment(config)
        for estimate in result.estimates:
            share = len(delta_best_arms(instance, estimate.delta)) / 3
            width = 4.0 * math.sqrt(share * (1.0 - share) / config.replications) + 1e-9
            assert abs(estimate.p_hat - share) <= width, estimate

    def test_constraint_changes_behavior_vs_unconstrained(self):
        instance = ProblemInstance(
            arms=(
                Arm(Bernoulli(0.9), PointMass(0.9)),
                Arm(Bernoulli(0.6), PointMass(0.1)),
            ),
            constraint_level=0.5,
        )
        shared = dict(
            instance=instance,
            schedule=InverseTimeSchedule(10.0),
            checkpoints=(1000,),
            deltas=(0.0,),
            replications=300,
            master_seed=31,
        )
        constrained = run_experiment(ExperimentConfig(**shared))
        unconstrained = run_experiment(
            ExperimentConfig(**shared, policy=POLICY_UNCONSTRAINED)
        )
        assert constrained.estimates[0].p_hat > 0.8
        assert unconstrained.estimates[0].p_hat < 0.3

    def test_dominated_on_well_separated_instance(self):
        config = ExperimentConfig(
            instance=separated_instance(),
            schedule=InverseTimeSchedule(100.0),
            checkpoints=(3000,),
            deltas=(0.1,),
            replications=2000,
            master_seed=7,
        )
        result = run_experiment(config)
        estimate = result.estimates[0]
        assert estimate.bound_clamped > 0.2
        assert estimate.dominated
        assert estimate.ci_high >= estimate.bound_clamped

    def test_degenerate_instances_run_and_report_vacuous_bounds(self):
        boundary_cost = ProblemInstance(
            arms=(
                Arm(Bernoulli(0.7), PointMass(0.5)),
                Arm(Bernoulli(0.5), PointMass(0.2)),
            ),
            constraint_level=0.5,
        )
        duplicate_means = ProblemInstance(
            arms=(
                Arm(Bernoulli(0.6), Bernoulli(0.3)),
                Arm(Bernoulli(0.6), Bernoulli(0.7)),
            ),
            constraint_level=0.5,
        )
        for instance in (boundary_cost, duplicate_means):
            config = ExperimentConfig(
                instance=instance,
                schedule=InverseTimeSchedule(10.0),
                checkpoints=(10, 200),
                deltas=(0.0,),
                replications=50,
                master_seed=3,
            )
            result = run_experiment(config)
            for estimate in result.estimates:
                assert estimate.bound_clamped == 0.0
                assert 0.0 <= estimate.p_hat <= 1.0

    def test_estimate_grid_shape_and_order(self):
        config = base_config(deltas=(0.0, 0.2), checkpoints=(2, 5))
        result = run_experiment(config)
        assert [(e.t, e.delta) for e in result.estimates] == [
            (2, 0.0),
            (2, 0.2),
            (5, 0.0),
            (5, 0.2),
        ]
        assert result.profile.rho == pytest.approx(0.2, abs=1e-15)


class TestParallelism:
    def test_worker_count_invariance(self, monkeypatch):
        # Force many small chunks so several pool tasks actually run.
        monkeypatch.setattr(harness, "_CHUNK_BYTES_TARGET", 40 * 32 * 8)
        config = base_config(replications=500, checkpoints=(1, 5, 40))
        serial = run_experiment(config, workers=1)
        parallel = run_experiment(config, workers=3)
        assert serial.estimates == parallel.estimates
        assert serial.diagnostics == parallel.diagnostics

    def test_chunk_layout_does_not_change_estimates(self, monkeypatch):
        config = base_config(replications=120, checkpoints=(1, 5, 40))
        single = run_experiment(config)
        monkeypatch.setattr(harness, "_CHUNK_BYTES_TARGET", 40 * 32 * 8)
        chunked = run_experiment(config)
        assert single.estimates == chunked.estimates

    def test_chunk_bounds_partition(self):
        for replications, horizon in ((1, 1), (7, 3), (1000, 10_000), (10**6, 2)):
            bounds = _chunk_bounds(replications, horizon)
            assert bounds[0][0] == 0
            assert bounds[-1][1] == replications
            for (_, hi), (lo, _) in zip(bounds, bounds[1:]):
                assert hi == lo
            assert all(hi > lo for lo, hi in bounds)


class TestRegretMetric:
    def test_optimal_play_has_zero_regret(self):
        instance = separated_instance()
        events = [
            SelectionEvent(t=i + 1, arm=0, branch="greedy", reward=1.0, cost=0.0)
            for i in range(5)
        ]
        assert regret_metric(events, instance) == 0.0

    def test_single_suboptimal_play(self):
        instance = separated_instance()
        events = [SelectionEvent(t=1, arm=1, branch="random", reward=0.0, cost=1.0)]
        assert regret_metric(events, instance) == pytest.approx(0.2, abs=1e-15)

    def test_optimum_is_over_feasible_arms_only(self):
        instance = ProblemInstance(
            arms=(
                Arm(PointMass(0.9), PointMass(0.9)),
                Arm(PointMass(0.6), PointMass(0.1)),
            ),
            constraint_level=0.5,
        )
        events = [SelectionEvent(t=1, arm=0, branch="random", reward=0.9, cost=0.9)]
        # Playing the infeasible high-reward arm scores against the
        # feasible optimum 0.6, giving negative regret, not zero.
        assert regret_metric(events, instance) == pytest.approx(-0.3, abs=1e-15)


class TestOutputs:
    def test_results_csv_golden_bytes(self, tmp_path):
        estimates = [
            MonteCarloEstimate(
                t=10,
                delta=0.0,
                successes=5,
                replications=8,
                p_hat=0.625,
                ci_low=0.25,
                ci_high=0.875,
                bound_raw=-1.5,
                bound_clamped=0.0,
                dominated=True,
            ),
            MonteCarloEstimate(
                t=100,
                delta=0.25,
                successes=8,
                replications=8,
                p_hat=1.0,
                ci_low=0.5,
                ci_high=1.0,
                bound_raw=0.5,
                bound_clamped=0.5,
                dominated=True,
            ),
        ]
        path = tmp_path / "results.csv"
        write_results_csv(path, estimates)
        expected = (
            "t,delta,successes,R,p_hat,ci_low,ci_high,bound_raw,bound_clamped,dominated\n"
            "10,0.0,5,8,0.625,0.25,0.875,-1.5,0.0,true\n"
            "100,0.25,8,8,1.0,0.5,1.0,0.5,0.5,true\n"
        )
        assert path.read_bytes().decode("utf-8") == expected

    def test_csv_round_trips_through_run(self, tmp_path):
        config = base_config()
        result = run_experiment(config)
        path = tmp_path / "results.csv"
        write_results_csv(path, result.estimates)
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == list(RESULTS_CSV_COLUMNS)
        assert len(lines) == 1 + len(result.estimates)
        first = lines[1].split(",")
        assert int(first[0]) == result.estimates[0].t
        assert float(first[4]) == result.estimates[0].p_hat

    def test_summary_json_deterministic_outside_metadata(self, tmp_path):
        config = base_config()
        result = run_experiment(config)
        path_a = tmp_path / "a.json"
        path_b = tmp_path / "b.json"
        write_summary_json(path_a, result, metadata={"elapsed_seconds": 1.5})
        write_summary_json(path_b, result, metadata={"elapsed_seconds": 9.9})
        blob_a = json.loads(path_a.read_text())
        blob_b = json.loads(path_b.read_text())
        assert blob_a["metadata"] != blob_b["metadata"]
        del blob_a["metadata"], blob_b["metadata"]
        assert blob_a == blob_b
        assert blob_a["config"]["experiment"]["master_seed"] == 11
        assert blob_a["profile"]["optimal"] == [0]

    def test_config_echo_structure(self):
        config = base_config()
        echo = config.to_config()
        assert set(echo) == {"instance", "strategy", "schedule", "experiment"}
        assert echo["strategy"] == {
            "kind": POLICY_CONSTRAINED,
            "tie_rule": TIE_LOWEST_INDEX,
        }
        assert echo["schedule"] == {"kind": "inverse_time", "k": 5.0}
        assert echo["experiment"]["checkpoints"] == [1, 7, 50]


class TestConfigValidation:
    def test_rejects_bad_shapes(self):
        good = dict(
            instance=separated_instance(),
            schedule=ConstantSchedule(0.5),
            checkpoints=(1, 2),
            deltas=(0.0,),
            replications=4,
            master_seed=0,
        )

        def reject(message_part=None, **bad):
            with pytest.raises(ValidationError) as err:
                ExperimentConfig(**{**good, **bad})
            assert err.value.code in ("bad_config", "bad_parameter")
            if message_part is not None:
                assert message_part in str(err.value)

        reject(checkpoints=())
        reject("strictly increasing", checkpoints=(5, 5))
        reject("strictly increasing", checkpoints=(5, 2))
        reject(checkpoints=(0, 1))
        reject(checkpoints=(1.5, 2))
        reject(deltas=())
        reject(deltas=(-0.1,))
        reject(replications=0)
        reject(master_seed=2**64)
        reject(master_seed=-1)
        reject(policy="epsilon_first")
        reject(tie_rule="alphabetical")
        reject(instance="not an instance")
        reject(schedule="not a schedule")

    def test_run_trial_validates_index(self):
        with pytest.raises(ValidationError):
            run_trial(base_config(), -1)

    def test_run_chunk_validates_range(self):
        config = base_config()
        with pytest.raises(ValidationError):
            run_chunk(config, 5, 5)
        with pytest.raises(ValidationError):
            run_chunk(config, 0, config.replications + 1)

    def test_run_experiment_validates_workers(self):
        with pytest.raises(ValidationError):
            run_experiment(base_config(), workers=0)
