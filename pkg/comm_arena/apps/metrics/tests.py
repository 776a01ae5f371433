"""
Tests for metrics app.
"""
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.agents.policies import PolicySet
from apps.env.modes import CommMode, Team
from apps.env.world import EnvConfig
from apps.metrics.exceptions import EmptySeriesError, MismatchedRunsError, NotCommunicatingError
from apps.metrics.plotting import plot_curves
from apps.metrics.runlog import EpochRecord, RunLog
from apps.metrics.services import (
    ConfusionMatrix, aggregate_runs, build_confusion_matrix, ewma, peak_performance, read_curves,
    read_summary, write_curves, write_summary,
)


class EwmaTest(SimpleTestCase):
    """Test exponential smoothing."""

    def test_half_alpha(self):
        """Test alpha 0.5 on [0, 1]."""
        np.testing.assert_allclose(ewma([0.0, 1.0], 0.5), [0.0, 0.5])

    def test_constant_fixed_point(self):
        """Test a constant series is unchanged."""
        np.testing.assert_allclose(ewma([-7.0] * 20, 0.3), [-7.0] * 20)

    def test_step_closed_form(self):
        """Test a 0 -> 1 step follows 1 - (1 - alpha)^k."""
        alpha = 0.0005
        smoothed = ewma([0.0] + [1.0] * 2000, alpha)
        for k in (1, 10, 500, 2000):
            self.assertAlmostEqual(smoothed[k], 1.0 - (1.0 - alpha) ** k, places=10)

    def test_bounded_by_input(self):
        """Test the output stays inside the input range."""
        series = np.random.default_rng(0).normal(size=300)
        smoothed = ewma(series, 0.1)
        self.assertTrue(np.all(smoothed >= series.min()) and np.all(smoothed <= series.max()))

    def test_rejects_empty_and_bad_alpha(self):
        """Test invalid inputs are refused."""
        with self.assertRaises(EmptySeriesError):
            ewma([], 0.5)
        with self.assertRaises(ValueError):
            ewma([1.0], 0.0)


class PeakPerformanceTest(SimpleTestCase):
    """Test run peaks."""

    def test_max_of_raw_series(self):
        """Test the peak is the raw maximum."""
        self.assertEqual(peak_performance(RunLog.from_rewards([-5, -3, -4])), -3.0)

    def test_monotone_log_peaks_last(self):
        """Test an improving run peaks at its last epoch."""
        self.assertEqual(peak_performance(RunLog.from_rewards([-9, -7, -2])), -2.0)

    def test_prey_team(self):
        """Test the prey peak reads the prey column."""
        self.assertEqual(peak_performance(RunLog.from_rewards([-5, -3, -4]), Team.PREY), 5.0)

    def test_empty_rejected(self):
        """Test an empty log has no peak."""
        with self.assertRaises(EmptySeriesError):
            peak_performance(RunLog())


class AggregateRunsTest(SimpleTestCase):
    """Test cross-run summaries."""

    def test_constant_logs(self):
        """Test constant logs at -10, -20, -30."""
        logs = [RunLog.from_rewards([value] * 4) for value in (-10, -20, -30)]
        stats = aggregate_runs(logs)
        self.assertAlmostEqual(stats.average_reward, -20.0)
        self.assertAlmostEqual(stats.average_std, math.sqrt(200 / 3))
        self.assertAlmostEqual(stats.average_std, 8.165, places=3)
        self.assertAlmostEqual(stats.average_peak, -20.0)
        self.assertEqual((stats.runs, stats.epochs), (3, 4))

    def test_identical_logs(self):
        """Test identical logs have zero spread."""
        log = RunLog.from_rewards([-40, -30, -35])
        stats = aggregate_runs([log, log])
        self.assertEqual(stats.average_std, 0.0)
        self.assertEqual(stats.peak_std, 0.0)

    def test_peak_dominates_average(self):
        """Test every configuration's peak is at least its average."""
        rng = np.random.default_rng(1)
        logs = [RunLog.from_rewards(rng.normal(-50, 10, size=30)) for _ in range(5)]
        stats = aggregate_runs(logs)
        self.assertGreaterEqual(stats.average_peak, stats.average_reward)

    def test_mismatched_lengths(self):
        """Test logs of different lengths are refused."""
        with self.assertRaises(MismatchedRunsError):
            aggregate_runs([RunLog.from_rewards([1, 2]), RunLog.from_rewards([1])])

    def test_no_logs(self):
        """Test an empty collection is refused."""
        with self.assertRaises(EmptySeriesError):
            aggregate_runs([])


class ConfusionMatrixTest(SimpleTestCase):
    """Test message tabulation."""

    def test_threshold_at_zero(self):
        """Test message 0.0 is symbol 0 and 0.3 is symbol 1."""
        self.assertEqual(ConfusionMatrix.symbol(0.0), 0)
        self.assertEqual(ConfusionMatrix.symbol(0.3), 1)

    def test_perfect_protocol_accuracy(self):
        """Test a diagonal or anti-diagonal matrix scores 1."""
        self.assertEqual(ConfusionMatrix([[12, 0], [0, 9]]).accuracy, 1.0)
        self.assertEqual(ConfusionMatrix([[0, 7], [4, 0]]).accuracy, 1.0)
        self.assertEqual(ConfusionMatrix([[5, 5], [5, 5]]).accuracy, 0.5)

    def test_record_and_csv(self):
        """Test recorded pairs land in their cells and are written out."""
        matrix = ConfusionMatrix()
        matrix.record(0, 0.0)
        matrix.record(1, 0.8)
        matrix.record(1, 0.2)
        self.assertEqual(matrix.counts.tolist(), [[1, 0], [0, 2]])
        with tempfile.TemporaryDirectory() as tmp:
            text = matrix.to_csv(Path(tmp) / 'confusion.csv').read_text()
        self.assertIn('prey1,0,2', text)
        self.assertIn('accuracy,1.0', text)

    def test_greedy_rollout_total(self):
        """Test every predator message of every step is counted."""
        policies = PolicySet.for_mode(CommMode.PRIVATE_COMM, np.random.default_rng(0))
        matrix = build_confusion_matrix(policies, EnvConfig(mode=CommMode.PRIVATE_COMM), episodes=3, seed=5)
        self.assertEqual(matrix.total, 3 * 30 * 2)
        self.assertTrue(0.5 <= matrix.accuracy <= 1.0)

    def test_constant_message_one_column(self):
        """Test a C-Net that always sends 0.5 fills only the symbol 1 column."""
        policies = PolicySet.for_mode(CommMode.PUBLIC_COMM, np.random.default_rng(0))
        policies.cnet.layers[0].weights[:] = 0.0
        policies.cnet.layers[0].bias[:] = 0.5
        matrix = build_confusion_matrix(policies, EnvConfig(mode=CommMode.PUBLIC_COMM), episodes=2, seed=1)
        self.assertEqual(matrix.counts[:, 0].sum(), 0)
        self.assertEqual(matrix.total, 120)

    def test_non_communicating_rejected(self):
        """Test no_comm policies have no messages to tabulate."""
        policies = PolicySet.for_mode(CommMode.NO_COMM, np.random.default_rng(0))
        with self.assertRaises(NotCommunicatingError):
            build_confusion_matrix(policies, EnvConfig(mode=CommMode.NO_COMM), episodes=1, seed=0)


class ArtifactTest(SimpleTestCase):
    """Test summary and curve artifacts."""

    def setUp(self):
        """Set up a temporary directory and two runs."""
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name)
        self.logs = [RunLog.from_rewards([-30, -20, -25]), RunLog.from_rewards([-40, -22, -21])]

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_summary_carries_both_teams_and_formula(self):
        """Test summary.json holds predator and prey stats and the std formula."""
        summaries = {team: aggregate_runs(self.logs, team) for team in Team}
        write_summary(self.directory / 'summary.json', summaries, extra={'mode': 'no_comm'})
        data = read_summary(self.directory / 'summary.json')
        self.assertEqual(set(data['teams']), {'predators', 'prey'})
        self.assertAlmostEqual(data['teams']['prey']['average_reward'], -data['teams']['predators']['average_reward'])
        self.assertIn('population', data['std_formula'])
        self.assertEqual(data['mode'], 'no_comm')

    def test_curves_csv(self):
        """Test curves.csv keeps raw and smoothed values per configuration."""
        write_curves(self.directory / 'curves.csv', {'no_comm': [-3.0, -1.0]}, alpha=0.5)
        raw, smoothed = read_curves(self.directory / 'curves.csv')['no_comm']
        np.testing.assert_array_equal(raw, [-3.0, -1.0])
        np.testing.assert_array_equal(smoothed, [-3.0, -2.0])

    def test_curves_svg(self):
        """Test the figure is written as SVG with one legend entry per configuration."""
        path = plot_curves(self.directory / 'curves.svg', {'private_comm': [-50, -40], 'no_comm': [-60, -55]})
        text = path.read_text()
        self.assertTrue(text.lstrip().startswith('<?xml'))
        self.assertIn('private_comm', text)

    def test_runlog_csv_round_trip_keeps_blank_losses(self):
        """Test absent losses survive the CSV as blanks."""
        log = RunLog([EpochRecord(0, -10.0, 10.0, 1.0, dial_loss=0.25)])
        log.to_csv(self.directory / 'run0.csv')
        restored = RunLog.from_csv(self.directory / 'run0.csv')
        self.assertEqual(restored.to_dicts(), log.to_dicts())
        self.assertIn(',0.25,,', (self.directory / 'run0.csv').read_text())
