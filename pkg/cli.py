#!/usr/bin/env python3
"""
AffordLab - multi-object effect learning for compound building
Command-line interface
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from affordlab.baseline import BaselineModel, train_baseline
from affordlab.config import MODES, PREDICTORS, SCHEDULES, RunConfig, resolve_config
from affordlab.dataset import (
    CSVDataSource, EmptyDataset, default_catalog, generate_dataset, read_records,
    split_by_episode, summarize_sizes, write_image_sidecar, write_records,
)
from affordlab.encoder import FeatureBank, ObjectEncoder, train_autoencoder, training_images
from affordlab.errors import AffordLabError
from affordlab.evaluation import error_table, format_table, oracle_predict, success_table
from affordlab.geometry import catalog_by_name
from affordlab.metric_assertions import default_acceptance_assertions, run_metric_assertions
from affordlab.mogan import MoganModel, TrainingConfig, prepare_samples, train_mogan
from affordlab.planner import (
    LearnedPredictor, NoFeasiblePlan, OraclePredictor, Task, execute_and_verify,
    sample_inventories, search,
)
from affordlab.reporters import (
    BaseReporter, ConsoleReporter, CSVReporter, JSONReporter, MultiReporter, SVGChartReporter,
)
from affordlab.utils import derive_seed, file_digest

logger = logging.getLogger("affordlab.cli")


def _reporter(args: argparse.Namespace, config: RunConfig) -> BaseReporter:
    reporters: List[BaseReporter] = [JSONReporter(config.report_path / f"run_{args.command}.json")]
    if not args.quiet:
        reporters.insert(0, ConsoleReporter(show_progress=True, progress_interval=5))
    return MultiReporter(reporters)


def _progress(reporter: BaseReporter):
    def report(epoch: int, losses: Dict[str, float]):
        elapsed = time.time() - (reporter.start_time or time.time())
        reporter.report_progress(elapsed, {'epoch': epoch, **losses})
    return report


def _training_config(config: RunConfig) -> TrainingConfig:
    return TrainingConfig(epochs=config.epochs, lr=config.lr, gamma=config.gamma,
                          step_size=config.step_size, sign_weight=config.sign_weight,
                          schedule_per=config.schedule_per, eval_every=config.eval_every,
                          seed=config.seed)


def _load_samples(config: RunConfig):
    if not config.dataset_path.exists():
        raise EmptyDataset(f"Dataset not found: {config.dataset_path} (run gen-data first)")
    records = read_records(config.dataset_path)
    if not records:
        raise EmptyDataset(f"Dataset is empty: {config.dataset_path}")
    train, val = split_by_episode(records, config.val_fraction, config.seed)
    bank = FeatureBank(ObjectEncoder.load(config.encoder_path), config.mode)
    return prepare_samples(train, bank), prepare_samples(val, bank), bank


def _task_slug(task: Task) -> str:
    return task.key().replace(':', '_').replace(',', '-')


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_data(config: RunConfig, reporter: BaseReporter) -> int:
    print(f"📊 Generating up to {config.records} records ({config.mode}, seed {config.seed})...")
    records = generate_dataset(config.seed, config.mode, target_records=config.records,
                               max_episodes=config.episodes, workers=config.workers,
                               embed_images=config.embed_images)
    if not records:
        print("⚠️  No episodes were run; writing an empty dataset")
    path = write_records(config.dataset_path, records)
    write_image_sidecar(config.images_path, default_catalog(config.mode))
    rows = [{'tower_size': size, 'records': n} for size, n in summarize_sizes(records).items()]
    reporter.report_metrics({'records': len(records),
                             'episodes': len({r.episode for r in records}),
                             'dataset': str(path), 'sha256': file_digest(path)[:16],
                             'rows': rows})
    return 0


def cmd_train_encoder(config: RunConfig, reporter: BaseReporter) -> int:
    train, val = training_images(seed=config.seed)
    print(f"📊 Training autoencoder on {len(train)} renders ({len(val)} held out)...")
    progress = _progress(reporter)
    result = train_autoencoder(train, val, epochs=config.encoder_epochs, lr=config.encoder_lr,
                               seed=config.seed,
                               progress=lambda e, t, v: progress(e, {'train_mse': t, 'val_mse': v}))
    ObjectEncoder(result.model).save(config.encoder_path, {
        'stopped_epoch': result.stopped_epoch, 'final_val_mse': result.final_val_mse})
    history = [{'epoch': e, 'train_mse': round(t, 8), 'val_mse': round(v, 8)} for e, t, v in result.history]
    CSVReporter(config.report_path / 'encoder_history.csv').report_metrics({'rows': history})
    print(f"Final reconstruction MSE: {result.final_val_mse:.6f} (epoch {result.stopped_epoch})")
    reporter.report_metrics({'stopped_epoch': result.stopped_epoch,
                             'final_val_mse': result.final_val_mse,
                             'snapshot': str(config.encoder_path)})
    return 0


def _train_effect_model(config: RunConfig, reporter: BaseReporter, which: str) -> int:
    train, val, bank = _load_samples(config)
    print(f"📊 Training {which} on {len(train)} samples ({len(val)} validation)...")
    if which == 'mogan':
        model = MoganModel(bank.feature_size, config.mode, config.seed)
        log = train_mogan(model, train, val, _training_config(config), _progress(reporter))
        path = config.mogan_path
    else:
        model = BaselineModel(bank.feature_size, config.mode, config.seed)
        log = train_baseline(model, train, val, _training_config(config), _progress(reporter))
        path = config.baseline_path
    model.save(path, {'epochs': config.epochs, 'lr': config.lr, 'records': len(train) + len(val)})
    CSVReporter(config.report_path / f'{which}_{config.mode}_metrics.csv').report_metrics(
        {'rows': [r.to_dict() for r in log.rows]})
    rows = []
    for head in ('e1', 'e2', 'e3'):
        for size, value in sorted(log.latest(head).items()):
            rows.append({'head': head, 'tower_size': size, 'val_mae': round(value, 3)})
    reporter.report_metrics({'snapshot': str(path), 'rows': rows})
    return 0


def cmd_train_mogan(config: RunConfig, reporter: BaseReporter) -> int:
    return _train_effect_model(config, reporter, 'mogan')


def cmd_train_baseline(config: RunConfig, reporter: BaseReporter) -> int:
    return _train_effect_model(config, reporter, 'baseline')


def cmd_eval(config: RunConfig, reporter: BaseReporter) -> int:
    _, val, _ = _load_samples(config)
    if not val:
        raise EmptyDataset("No validation episodes; raise val_fraction or generate more data")
    predictors = {'oracle': oracle_predict}
    for name, path, cls in (('mogan', config.mogan_path, MoganModel),
                            ('baseline', config.baseline_path, BaselineModel)):
        if path.exists():
            predictors[name] = cls.load(path).predict_sample
        else:
            print(f"⚠️  No {name} snapshot at {path}; skipping")
    rows = error_table(predictors, val)
    CSVReporter(config.report_path / f'errors_{config.mode}.csv').report_metrics({'rows': rows})
    print(format_table(rows))
    reporter.report_metrics({'validation_samples': len(val), 'models': ", ".join(predictors)})
    return 0


def _predictor(config: RunConfig, catalog: str):
    if config.predictor == 'oracle':
        return OraclePredictor()
    bank = FeatureBank(ObjectEncoder.load(config.encoder_path), config.mode)
    cls = MoganModel if config.predictor == 'mogan' else BaselineModel
    path = config.mogan_path if config.predictor == 'mogan' else config.baseline_path
    return LearnedPredictor(cls.load(path), bank, catalog)


def cmd_plan(config: RunConfig, reporter: BaseReporter) -> int:
    task = Task.parse(config.task, config.mode)
    config = replace(config, mode=task.mode.value)
    catalog = default_catalog(task.mode)
    specs = catalog_by_name(catalog)
    predictor = _predictor(config, catalog)
    slug = f"{_task_slug(task)}_{config.predictor}"

    plans: List[Dict[str, Any]] = []
    rows: List[Dict[str, Any]] = []
    for size in config.size_list:
        print(f"📊 Planning {task.key()} with {size} objects ({config.samples} inventories)...")
        inventories = sample_inventories(specs, size, config.samples, derive_seed(config.seed, "inventory"),
                                         task, solvable_only=True)
        for index, inventory in enumerate(inventories):
            row = {'model': config.predictor, 'task': task.key(), 'size': size, 'sample': index,
                   'inventory': " ".join(str(s.id) for s in inventory)}
            try:
                plan = search(inventory, task, predictor, config.planner_budget,
                              config.collapse_cutoff, config.workers)
            except NoFeasiblePlan:
                row.update(success=False, reason='NoFeasiblePlan', predicted=None, true_metric=None, optimum=None)
                plans.append({'size': size, 'sample': index, 'inventory': [s.id for s in inventory],
                              'plan': None, 'reason': 'NoFeasiblePlan'})
            else:
                report = execute_and_verify(plan, task)
                row.update(success=report.success, reason=report.reason,
                           predicted=round(plan.predicted_score, 6),
                           true_metric=None if report.true_metric is None else round(report.true_metric, 6),
                           optimum=None if report.optimum is None else round(report.optimum, 6))
                plans.append({'size': size, 'sample': index, 'plan': plan.to_dict()})
            rows.append(row)
            elapsed = time.time() - (reporter.start_time or time.time())
            reporter.report_progress(elapsed, {'size': size, 'sample': index, 'success': row['success']})

    out = config.report_path
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f'plans_{slug}.json', 'w', encoding='utf-8') as f:
        json.dump({'task': task.key(), 'mode': task.mode.value, 'predictor': config.predictor,
                   'plans': plans}, f, indent=2, sort_keys=True)
    CSVReporter(out / f'verification_{slug}.csv').report_metrics({'rows': rows})
    summary = success_table(rows)
    CSVReporter(out / f'success_{slug}.csv').report_metrics({'rows': summary})
    SVGChartReporter(out / f'success_{slug}.svg', title=f"Plan success: {task.key()}").report_metrics(
        {'rows': summary})
    total = sum(r['success'] for r in rows)
    reporter.report_metrics({'plans': len(rows), 'successes': total,
                             'success_rate': 100.0 * total / len(rows) if rows else 0.0,
                             'rows': summary})
    return 0


def cmd_report(config: RunConfig, reporter: BaseReporter) -> int:
    out = config.report_path
    metrics: Dict[str, Any] = {'errors': [], 'plans': []}
    for path in sorted(out.glob('errors_*.csv')):
        metrics['errors'].extend(CSVDataSource(path).load_data())
    for path in sorted(out.glob('success_*.csv')):
        metrics['plans'].extend(CSVDataSource(path).load_data())
    if not metrics['errors'] and not metrics['plans']:
        print(f"⚠️  No metric tables found in {out}")
        return 0

    if metrics['plans']:
        chart_rows = [dict(r, model=f"{r['model']}/{r['task']}") for r in metrics['plans']]
        SVGChartReporter(out / 'success_summary.svg').report_metrics({'rows': chart_rows})
    if metrics['errors']:
        print(format_table(metrics['errors']))

    assertions = default_acceptance_assertions(metrics)
    passed, failures = run_metric_assertions(metrics, assertions)
    reporter.report_metrics({'error_rows': len(metrics['errors']), 'plan_rows': len(metrics['plans']),
                             'assertions': len(assertions), 'failed': len(failures),
                             'rows': metrics['plans']})
    for message in failures:
        print(f"❌ {message}")
    if passed:
        print("✅ All metric assertions passed")
    return 0 if passed else 1


COMMANDS = {
    'gen-data': (cmd_gen_data, "Generate the interaction dataset"),
    'train-encoder': (cmd_train_encoder, "Train the single-object autoencoder"),
    'train-mogan': (cmd_train_mogan, "Train the graph effect model"),
    'train-baseline': (cmd_train_baseline, "Train the feed-forward baseline"),
    'eval': (cmd_eval, "Per-tower-size prediction errors on held-out episodes"),
    'plan': (cmd_plan, "Plan, verify and chart task success rates"),
    'report': (cmd_report, "Re-read emitted tables and run metric assertions"),
}


def _config_arguments() -> argparse.ArgumentParser:
    """Flags shared by every subcommand; unset flags stay None so the config file can fill them"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', help='key=value config file')
    common.add_argument('--seed', type=int, help='Random seed (default: 42)')
    common.add_argument('--mode', choices=MODES, help='Simulation mode (default: linear)')
    common.add_argument('-o', '--out-dir', dest='out_dir', help='Output directory (default: runs)')
    common.add_argument('--workers', type=int, help='Worker threads (default: 1)')
    common.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    common.add_argument('-q', '--quiet', action='store_true', help='Suppress progress output')

    data = common.add_argument_group('data generation')
    data.add_argument('--episodes', type=int, help='Episode cap (default: 1000)')
    data.add_argument('--records', type=int, help='Target record count (default: 1500)')
    data.add_argument('--embed-images', dest='embed_images', action='store_const', const=True,
                      help='Embed normalized renders in every record')

    train = common.add_argument_group('training')
    train.add_argument('--encoder-epochs', dest='encoder_epochs', type=int)
    train.add_argument('--encoder-lr', dest='encoder_lr', type=float)
    train.add_argument('--epochs', type=int, help='Effect model epochs (default: 200)')
    train.add_argument('--lr', type=float, help='Base learning rate (default: 1e-3)')
    train.add_argument('--gamma', type=float, help='Decay factor (default: 0.95)')
    train.add_argument('--step-size', dest='step_size', type=int, help='Decay period (default: 3000)')
    train.add_argument('--sign-weight', dest='sign_weight', type=float, help='Sign loss weight (default: 1.0)')
    train.add_argument('--schedule-per', dest='schedule_per', choices=SCHEDULES)
    train.add_argument('--val-fraction', dest='val_fraction', type=float)
    train.add_argument('--eval-every', dest='eval_every', type=int)

    plan = common.add_argument_group('planning')
    plan.add_argument('--task', help='tallest, shortest, occluded, occluding, height:<dm>, '
                                     'pair:<a>,<b>[:min|max] or bridge')
    plan.add_argument('--sizes', help='Inventory sizes, e.g. 2,3,4,5 or 2-5')
    plan.add_argument('--samples', type=int, help='Inventories per size (default: 10)')
    plan.add_argument('--predictor', choices=PREDICTORS, help='Effect predictor (default: mogan)')
    plan.add_argument('--planner-budget', dest='planner_budget', type=int)
    plan.add_argument('--collapse-cutoff', dest='collapse_cutoff', type=float)
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="AffordLab - learn multi-object effects and plan compound building",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate data, train, evaluate
  affordlab gen-data --seed 42
  affordlab train-encoder
  affordlab train-mogan --epochs 200
  affordlab train-baseline --epochs 200
  affordlab eval

  # Plan with the trained model and verify in the simulator
  affordlab plan --task shortest --sizes 2-5 --samples 10

  # Bridge goal in nonlinear mode
  affordlab plan --mode nonlinear --task bridge --sizes 3

  # Re-check every emitted table
  affordlab report
        """
    )
    common = _config_arguments()
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command, _ = COMMANDS[args.command]
    try:
        config = resolve_config(args)
        reporter = _reporter(args, config)
        logger.debug("Resolved config: %s", config.to_dict())
        config.save(Path(config.out_dir) / 'config.txt')
        reporter.start_reporting(f"affordlab {args.command}")
        try:
            return command(config, reporter)
        finally:
            reporter.end_reporting()
    except KeyboardInterrupt:
        print("\n⏹️  Interrupted by user")
        return 130
    except (AffordLabError, OSError, ValueError) as e:
        print(f"❌ {args.command} failed: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
