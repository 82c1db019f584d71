"""
Unit tests for alignment metrics, sweeps and report files.
"""
import pytest

from alignrl.core.exceptions import UsageError
from alignrl.schemas.experiment import EvalConfig
from alignrl.schemas.infer import InferConfig
from alignrl.schemas.reports import AblationReport, AblationRow, AlignmentReport, AlignmentRow, SafetyReport
from alignrl.services.evaluation import (
    abs_error,
    ablation_N,
    alignment_report,
    alignment_sweep,
    episode_rngs,
    extrapolation_gap,
    fraction_grid,
    parse_target_grid,
    run_target_episodes,
    safety_eval,
    target_grid,
    write_ablation_csv,
    write_alignment_csv,
    write_safety_csv,
)
from alignrl.services.inference import RolloutResult


@pytest.mark.unit
class TestMetrics:
    """Scalar metrics and target grids."""

    @pytest.mark.parametrize("target, rewards, expected", [
        (0.0, [0.0], 0.0),
        (10.0, [3.0, 4.0], 3.0),
        (5.0, [3.0, 4.0], 2.0),
        (2.0, [], 2.0),
    ])
    def test_abs_error(self, target, rewards, expected):
        assert abs_error(target, rewards) == expected

    def test_report_rows_use_the_episode_rewards(self, factory):
        results = [
            RolloutResult(trajectory=traj, achieved_return=traj.achieved_return, outcome=None)
            for traj in (factory.continuous([1.0, 2.0]), factory.continuous([4.0, 4.0]))
        ]

        row = alignment_report([5.0], [results], r_max=8.0).rows[0]

        assert row.mean_return == pytest.approx(5.5)
        assert row.std_return == pytest.approx(2.5)
        assert row.mean_abs_err == pytest.approx(2.5)
        assert row.episodes == 2

    def test_target_grid_includes_the_stop(self):
        assert parse_target_grid("2:18:2") == [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0]

    def test_fractional_steps(self):
        assert parse_target_grid("0:1:0.1") == pytest.approx([i / 10 for i in range(11)])

    @pytest.mark.parametrize("text", ["2:18", "a:b:c", "2:18:0", "5:1:1"])
    def test_bad_grids(self, text):
        with pytest.raises(UsageError):
            parse_target_grid(text)

    def test_fraction_grid(self):
        assert fraction_grid(10.0, 0.1, 1.0, 10) == pytest.approx([float(v) for v in range(1, 11)])

    def test_configured_grid_takes_precedence(self):
        assert target_grid(EvalConfig(targets="1:3:1"), 100.0) == [1.0, 2.0, 3.0]
        assert len(target_grid(EvalConfig(), 100.0)) == 9

    def test_episode_streams_are_independent(self):
        env_rng, select_rng = episode_rngs(0, 1, 2)
        again, _ = episode_rngs(0, 1, 2)
        other, _ = episode_rngs(0, 1, 3)
        first = env_rng.random()
        assert first == again.random()
        assert first != select_rng.random()
        assert first != other.random()


@pytest.mark.unit
class TestSweeps:
    """Sweeps over targets with a small model."""

    def test_rows_per_target(self, tiny_model, dial_env):
        config = InferConfig(n_candidates=3, delta=0.1)
        report = alignment_sweep(tiny_model, dial_env, [1.0, 2.0, 3.0], 2, config, 1.0, r_max=5.0)

        assert [row.target for row in report.rows] == [1.0, 2.0, 3.0]
        assert all(row.episodes == 2 for row in report.rows)
        assert all(0.0 <= row.mean_return <= dial_env.max_steps for row in report.rows)

    def test_results_do_not_depend_on_workers(self, tiny_model, dial_env):
        config = InferConfig(n_candidates=3, delta=0.1)
        serial = run_target_episodes(tiny_model, dial_env, [1.0, 4.0], 2, config, 1.0, 5.0, workers=1)
        parallel = run_target_episodes(tiny_model, dial_env, [1.0, 4.0], 2, config, 1.0, 5.0, workers=3)
        for left, right in zip(serial, parallel):
            assert [r.achieved_return for r in left] == [r.achieved_return for r in right]

    def test_zero_episodes_rejected(self, tiny_model, dial_env):
        with pytest.raises(UsageError):
            run_target_episodes(tiny_model, dial_env, [1.0], 0, InferConfig(), 1.0, 5.0)

    def test_ablation_rows_follow_the_list(self, tiny_model, dial_env):
        report = ablation_N(tiny_model, dial_env, [1, 4, 4], 2.0, 1, InferConfig(delta=0.1), 1.0, 5.0)
        assert [row.variant_or_N for row in report.rows] == ["1", "4", "4"]
        assert report.rows[1].mean_abs_err == report.rows[2].mean_abs_err

    def test_ablation_needs_candidates(self, tiny_model, dial_env):
        with pytest.raises(UsageError):
            ablation_N(tiny_model, dial_env, [], 2.0, 1, InferConfig(), 1.0, 5.0)

    def test_extrapolation_report(self, tiny_model, dial_env):
        report = extrapolation_gap(tiny_model, dial_env, [6.0], 1, InferConfig(n_candidates=2), 1.0, 5.0)
        assert report.targets == [6.0]
        assert report.gap == pytest.approx(report.conditioning_only_abs_err - report.full_abs_err)

    def test_safety_needs_discrete_actions(self, tiny_model, dial_env):
        with pytest.raises(UsageError):
            safety_eval(tiny_model, dial_env, 0.4, 2, InferConfig(), 1.0, 5.0)


@pytest.mark.unit
class TestReportFiles:
    """CSV output."""

    def alignment_report(self):
        return AlignmentReport(r_max=4.0, rows=[
            AlignmentRow(target=2.0, mean_return=1.5, std_return=0.25, mean_abs_err=0.5, episodes=10),
            AlignmentRow(target=4.0, mean_return=4.1, std_return=0.0, mean_abs_err=0.1, episodes=10),
        ])

    def test_alignment_csv(self, tmp_path):
        path = tmp_path / "align.csv"
        write_alignment_csv(self.alignment_report(), path)
        assert path.read_text() == (
            "target,mean_return,std_return,mean_abs_err,episodes\n"
            "2.0,1.5,0.25,0.5,10\n"
            "4.0,4.1,0.0,0.1,10\n"
        )

    def test_csv_bytes_are_deterministic(self, tmp_path):
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_alignment_csv(self.alignment_report(), first)
        write_alignment_csv(self.alignment_report(), second)
        assert first.read_bytes() == second.read_bytes()

    def test_ablation_csv(self, tmp_path):
        path = tmp_path / "ablation.csv"
        write_ablation_csv(AblationReport(rows=[AblationRow(variant_or_N="w/o DB", mean_abs_err=1.25)]), path)
        assert path.read_text() == "variant_or_N,mean_abs_err\nw/o DB,1.25\n"

    def test_safety_csv(self, tmp_path):
        path = tmp_path / "safety.csv"
        report = SafetyReport(
            target_fraction=0.4, target=6.4, mean_return=5.5, adverse_per_1k=12.0,
            remission_rate=0.5, episodes=1000, adverse_events=12, remissions=500, exhausted=488,
        )
        write_safety_csv([report], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "target_fraction,mean_return,adverse_per_1k,remission_rate,episodes"
        assert lines[1] == "0.4,5.5,12.0,0.5,1000"
