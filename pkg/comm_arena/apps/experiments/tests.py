"""
Tests for experiments app.
"""
import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from apps.env.modes import CommMode, Team
from apps.experiments.config import RESOLVED_CONFIG_FILE, load_resolved, parse_config
from apps.experiments.exceptions import MissingArtifactsError, RunFailedError
from apps.experiments.models import Experiment, RunStatus
from apps.experiments.services import analyze_directory, compare_experiments, load_checkpoints, run_experiment
from apps.metrics.runlog import RunLog
from apps.metrics.services import build_confusion_matrix, read_summary

SMALL = {'epochs': 2, 'episodes_per_epoch': 2, 'batch_size': 20, 'eval_episodes': 2}


class TempDirMixin:
    """Per-test scratch directory."""

    def setUp(self):
        """Create the scratch directory."""
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        """Remove the scratch directory."""
        self.tmp.cleanup()

    def write_file(self, name, text):
        path = self.root / name
        path.write_text(text)
        return path


class ParseConfigTest(TempDirMixin, SimpleTestCase):
    """Test configuration resolution."""

    def test_defaults(self):
        """Test an empty file with no flags resolves to the published defaults."""
        config = parse_config(self.write_file('empty.cfg', ''), {})
        self.assertEqual(config.mode, CommMode.NO_COMM)
        self.assertEqual(config.eval_episodes, 200)
        self.assertEqual(config.epochs, 2000)
        self.assertEqual(config.training.gamma, 0.97)
        self.assertEqual(config.training.lr, 0.0005)
        self.assertEqual(config.env.episode_length, 30)
        self.assertEqual(config.training.episodes_per_epoch, 50)
        self.assertEqual(config.training.batch_size, 200)
        self.assertEqual(config.runs, 5)

    def test_flag_overrides_file(self):
        """Test --gamma beats gamma= in the file."""
        path = self.write_file('exp.cfg', 'mode=private_comm\ngamma=0.97\nruns=3\n')
        config = parse_config(path, {'gamma': '0.9'})
        self.assertEqual(config.training.gamma, 0.9)
        self.assertEqual(config.runs, 3)
        self.assertEqual(config.mode, CommMode.PRIVATE_COMM)

    def test_comments_and_quotes(self):
        """Test comment lines and quoted values are understood."""
        path = self.write_file('exp.cfg', '# campaign\nmode="public_comm"\nprey_accel=4.5\n')
        config = parse_config(path)
        self.assertEqual(config.mode, CommMode.PUBLIC_COMM)
        self.assertEqual(config.env.prey_accel, 4.5)

    def test_invalid_mode(self):
        """Test an unknown mode is a usage error."""
        with self.assertRaises(ValidationError) as ctx:
            parse_config(None, {'mode': 'banana'})
        self.assertEqual(ctx.exception.code, 'invalid_mode')

    def test_unknown_key_named(self):
        """Test an unknown key is rejected by name."""
        path = self.write_file('exp.cfg', 'mode=no_comm\nlearning_rate=0.1\n')
        with self.assertRaises(ValidationError) as ctx:
            parse_config(path)
        self.assertIn('learning_rate', ctx.exception.message)

    def test_non_numeric(self):
        """Test a non-numeric value for a numeric key is rejected."""
        with self.assertRaises(ValidationError) as ctx:
            parse_config(None, {'mode': 'no_comm', 'epochs': 'many'})
        self.assertEqual(ctx.exception.code, 'not_numeric')

    def test_seeds(self):
        """Test run i uses seed base + i."""
        config = parse_config(None, {'mode': 'no_comm', 'seed': '10', 'runs': '3'})
        self.assertEqual(config.seeds(), [10, 11, 12])

    def test_resolved_file_round_trip(self):
        """Test resolved_config.txt rebuilds the same configuration."""
        config = parse_config(None, {'mode': 'full_obs', 'out': str(self.root), 'gamma': '0.5', 'dt': '0.05'})
        config.write_resolved()
        restored = load_resolved(self.root)
        self.assertEqual(restored.resolved(), config.resolved())

    @override_settings(ARENA_DEFAULT_JOBS=3)
    def test_jobs_default_from_settings(self):
        """Test jobs falls back to ARENA_DEFAULT_JOBS."""
        self.assertEqual(parse_config(None, {'mode': 'no_comm'}).jobs, 3)


class RunExperimentTest(TempDirMixin, TestCase):
    """Test whole experiments at toy scale."""

    def make_config(self, mode, name, **extra):
        overrides = {'mode': mode, 'runs': 1, 'out': str(self.root / name), **SMALL, **extra}
        return parse_config(None, {key: str(value) for key, value in overrides.items()})

    def test_full_obs_artifacts(self):
        """Test a full_obs run writes logs and summary but no confusion matrix."""
        config = self.make_config('full_obs', 'full')
        run_experiment(config)
        out = config.out
        self.assertEqual(len(RunLog.from_csv(out / 'run0.csv')), 2)
        for name in ('summary.json', 'curves.csv', 'curves.svg', RESOLVED_CONFIG_FILE, 'run0/predator_iql.json'):
            self.assertTrue((out / name).exists(), name)
        self.assertFalse((out / 'confusion.csv').exists())
        summary = read_summary(out / 'summary.json')
        self.assertEqual(summary['runs'], 1)
        self.assertIn(Team.PREY.value, summary['teams'])

    def test_registry_completed(self):
        """Test the experiment and its runs end COMPLETED with results stored."""
        config = self.make_config('no_comm', 'registry', runs=2)
        run_experiment(config)
        experiment = Experiment.objects.get()
        self.assertEqual(experiment.status, RunStatus.COMPLETED)
        self.assertEqual(list(experiment.training_runs.values_list('seed', flat=True)), [0, 1])
        for run in experiment.training_runs.all():
            self.assertEqual(run.status, RunStatus.COMPLETED)
            self.assertGreaterEqual(run.peak_reward, run.average_reward)

    def test_deterministic_run_csv(self):
        """Test the same config twice gives byte-identical run logs."""
        first = self.make_config('private_comm', 'a')
        second = self.make_config('private_comm', 'b')
        run_experiment(first)
        run_experiment(second)
        self.assertEqual((first.out / 'run0.csv').read_bytes(), (second.out / 'run0.csv').read_bytes())

    def test_private_comm_confusion_total(self):
        """Test the confusion matrix counts eval_episodes x 30 x 2 messages."""
        config = self.make_config('private_comm', 'private')
        result = run_experiment(config)
        self.assertEqual(result.confusion.total, 2 * 30 * 2)
        with (config.out / 'confusion.csv').open(newline='') as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(sum(int(v) for row in rows[1:3] for v in row[1:]), 120)

    def test_failed_run_named_and_recorded(self):
        """Test a failing run raises with its seed and marks the registry failed."""
        config = self.make_config('no_comm', 'failing', seed=7)
        with mock.patch('apps.experiments.services.execute_run', side_effect=FloatingPointError('boom')):
            with self.assertRaises(RunFailedError) as ctx:
                run_experiment(config)
        self.assertEqual(ctx.exception.seed, 7)
        experiment = Experiment.objects.get()
        self.assertEqual(experiment.status, RunStatus.FAILED)
        self.assertIn('boom', experiment.training_runs.get(index=0).error_message)

    def test_process_pool_matches_sequential(self):
        """Test jobs=2 writes the same run logs as jobs=1 and completes the registry."""
        sequential = self.make_config('private_comm', 'sequential', runs=2, jobs=1)
        pooled = self.make_config('private_comm', 'pooled', runs=2, jobs=2)
        run_experiment(sequential)
        run_experiment(pooled)
        for name in ('run0.csv', 'run1.csv'):
            self.assertEqual((sequential.out / name).read_bytes(), (pooled.out / name).read_bytes(), name)
        experiment = Experiment.objects.get(output_dir=str(pooled.out))
        self.assertEqual(experiment.status, RunStatus.COMPLETED)
        self.assertEqual(experiment.training_runs.filter(status=RunStatus.COMPLETED).count(), 2)

    def test_process_pool_failure_named_and_recorded(self):
        """Test a run failing inside a pool process is reported with its seed."""
        config = self.make_config('no_comm', 'pool_failing', runs=2, jobs=2, seed=3)
        (config.out / 'run1.csv').mkdir(parents=True)
        with self.assertRaises(RunFailedError) as ctx:
            run_experiment(config)
        self.assertEqual(ctx.exception.index, 1)
        self.assertEqual(ctx.exception.seed, 4)
        experiment = Experiment.objects.get()
        self.assertEqual(experiment.status, RunStatus.FAILED)
        self.assertEqual(experiment.training_runs.get(index=1).status, RunStatus.FAILED)

    def test_confusion_from_best_run(self):
        """Test the confusion matrix is built from the run with the highest predator peak."""
        config = self.make_config('private_comm', 'best', runs=2)
        run_experiment(config)
        RunLog.from_rewards([-30.0, -20.0]).to_csv(config.out / 'run0.csv')
        RunLog.from_rewards([-25.0, -5.0]).to_csv(config.out / 'run1.csv')

        result = analyze_directory(config.out)

        self.assertEqual(result.best_run, 1)
        self.assertEqual(read_summary(config.out / 'summary.json')['confusion_run'], 1)
        policies = load_checkpoints(config.out, 1, config.mode)
        expected = build_confusion_matrix(policies, config.env, config.eval_episodes, seed=config.seed + 1)
        self.assertEqual(result.confusion.counts.tolist(), expected.counts.tolist())

    def test_resume_files_written(self):
        """Test --resume-every leaves a resume file per run."""
        config = self.make_config('no_comm', 'resume', resume_every=1)
        run_experiment(config)
        data = json.loads((config.out / 'run0.resume.json').read_text())
        self.assertEqual(data['epoch'], 2)

    def test_analyze_reproduces_summary_and_exports_trajectories(self):
        """Test re-analysis matches and trajectories hold 4 rows per step."""
        config = self.make_config('public_comm', 'public')
        run_experiment(config)
        before = (config.out / 'summary.json').read_text()
        analyze_directory(config.out, trajectories=1)
        self.assertEqual((config.out / 'summary.json').read_text(), before)
        with (config.out / 'trajectories.csv').open(newline='') as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 30 * 4)

    def test_analyze_without_logs(self):
        """Test analysing an empty directory fails clearly."""
        config = self.make_config('no_comm', 'empty')
        config.out.mkdir()
        config.write_resolved()
        with self.assertRaises(MissingArtifactsError):
            analyze_directory(config.out)

    def test_compare_checks(self):
        """Test comparison.json carries every configuration and the peak-gap checks."""
        directories = []
        for mode in ('no_comm', 'private_comm'):
            config = self.make_config(mode, mode)
            run_experiment(config)
            directories.append(config.out)
        data = compare_experiments(directories, self.root / 'comparison')
        self.assertEqual(set(data['configurations']), {'no_comm', 'private_comm'})
        self.assertIn('private_comm_beats_no_comm', data['checks'])
        self.assertNotIn('public_comm_beats_no_comm', data['checks'])
        self.assertTrue((self.root / 'comparison' / 'curves.svg').exists())


class CommandTest(TempDirMixin, TestCase):
    """Test the management commands."""

    def test_run_invalid_mode_is_usage_error(self):
        """Test --mode banana exits with status 2."""
        with self.assertRaises(CommandError) as ctx:
            call_command('run', '--mode', 'banana', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_run_unknown_config_key(self):
        """Test an unknown key in the config file exits with status 2."""
        path = self.write_file('exp.cfg', 'mode=no_comm\nbogus=1\n')
        with self.assertRaises(CommandError) as ctx:
            call_command('run', '--config', str(path), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('bogus', str(ctx.exception))

    def test_run_failure_exits_one(self):
        """Test a failing run exits with status 1 naming the seed."""
        with mock.patch('apps.experiments.services.execute_run', side_effect=RuntimeError('diverged')):
            with self.assertRaises(CommandError) as ctx:
                call_command('run', '--mode', 'no_comm', '--runs', '1', '--seed', '4',
                             '--out', str(self.root / 'x'), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('seed 4', str(ctx.exception))

    def test_run_and_analyze(self):
        """Test run then analyze on its directory."""
        out = self.root / 'cli'
        stdout = StringIO()
        call_command('run', '--mode', 'full_obs', '--runs', '1', '--epochs', '2', '--episodes-per-epoch', '2',
                     '--batch-size', '20', '--out', str(out), stdout=stdout)
        self.assertIn('average reward', stdout.getvalue())
        call_command('analyze', '--out', str(out), '--trajectories', '1', stdout=StringIO())
        self.assertTrue((out / 'trajectories.csv').exists())

    def test_analyze_missing_directory(self):
        """Test analyze on a non-results directory exits with status 1."""
        with self.assertRaises(CommandError) as ctx:
            call_command('analyze', '--out', str(self.root), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)

    def test_gradcheck_passes(self):
        """Test the gradient check suite passes on every network shape."""
        stdout = StringIO()
        call_command('gradcheck', '--samples', '20', stdout=stdout)
        output = stdout.getvalue()
        for name in ('cnet', 'anet', 'predator_iql', 'prey_iql', 'prey_iql_public'):
            self.assertIn(f'PASS {name}', output)
        self.assertNotIn('FAIL', output)
