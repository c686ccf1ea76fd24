#!/usr/bin/env python3
"""
Tests for the command-line interface
"""

import json

import pytest

from cli import COMMANDS, build_parser, main


class TestParser:
    """Argument parsing"""

    def test_every_command_registered(self):
        """Each pipeline step has a subcommand"""
        assert set(COMMANDS) == {'gen-data', 'train-encoder', 'train-mogan', 'train-baseline',
                                 'eval', 'plan', 'report'}

    def test_unset_flags_are_none(self):
        """Flags not given stay None so config files can fill them"""
        args = build_parser().parse_args(['plan'])
        assert args.seed is None
        assert args.task is None
        assert args.embed_images is None
        assert args.quiet is False

    def test_flags_parse(self):
        """Typed values and dest names"""
        args = build_parser().parse_args(['plan', '--seed', '7', '--planner-budget', '100',
                                          '--collapse-cutoff', '0.4', '--embed-images'])
        assert (args.seed, args.planner_budget, args.collapse_cutoff) == (7, 100, 0.4)
        assert args.embed_images is True

    def test_command_required(self):
        """Running without a subcommand exits"""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestCommands:
    """End-to-end runs of cheap commands"""

    def test_plan_with_oracle(self, tmp_path):
        """Oracle planning writes plans, tables and a chart"""
        out = tmp_path / "run"
        code = main(['plan', '--predictor', 'oracle', '--sizes', '2', '--samples', '1', '-q',
                     '-o', str(out)])
        assert code == 0
        reports = out / "reports"
        plans = json.loads((reports / "plans_tallest_oracle.json").read_text())
        assert plans['task'] == 'tallest'
        assert len(plans['plans']) == 1
        assert (reports / "success_tallest_oracle.csv").exists()
        assert (reports / "success_tallest_oracle.svg").exists()
        assert (out / "config.txt").exists()

    def test_gen_data(self, tmp_path):
        """A small dataset and the image sidecar are written"""
        out = tmp_path / "run"
        code = main(['gen-data', '--records', '4', '--episodes', '2', '-q', '-o', str(out)])
        assert code == 0
        assert (out / "dataset_linear.jsonl").exists()
        assert (out / "images.json").exists()

    def test_report_on_empty_directory(self, tmp_path):
        """Nothing to check is not a failure"""
        assert main(['report', '-q', '-o', str(tmp_path)]) == 0

    def test_report_runs_assertions(self, tmp_path):
        """Oracle rows below 100% fail the report"""
        reports = tmp_path / "reports"
        reports.mkdir()
        header = "model,task,size,samples,successes,success_rate\n"
        (reports / "success_ok.csv").write_text(header + "oracle,tallest,2,4,4,100.0\n")
        assert main(['report', '-q', '-o', str(tmp_path)]) == 0
        (reports / "success_bad.csv").write_text(header + "oracle,shortest,3,4,2,50.0\n")
        assert main(['report', '-q', '-o', str(tmp_path)]) == 1

    def test_missing_config_file(self, tmp_path, capsys):
        """Errors are reported and give exit code 1"""
        code = main(['plan', '-q', '-c', str(tmp_path / "missing.cfg"), '-o', str(tmp_path)])
        assert code == 1
        assert "plan failed" in capsys.readouterr().out

    def test_invalid_sizes(self, tmp_path):
        """Config validation failures give exit code 1"""
        assert main(['plan', '-q', '--sizes', '2,9', '-o', str(tmp_path)]) == 1

    def test_eval_without_dataset(self, tmp_path):
        """Commands that need a dataset fail cleanly without one"""
        assert main(['eval', '-q', '-o', str(tmp_path)]) == 1
