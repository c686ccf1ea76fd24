#!/usr/bin/env python3
"""
Tests for run configuration files and flag precedence
"""

import argparse
from pathlib import Path

import pytest

from affordlab.config import ConfigError, RunConfig, coerce, parse_text, resolve_config


def namespace(**kwargs):
    return argparse.Namespace(**kwargs)


class TestRunConfig:
    """Defaults, derived paths and validation"""

    def test_defaults_are_valid(self):
        """The default configuration passes validation"""
        config = RunConfig().validate()
        assert config.seed == 42
        assert config.mode == 'linear'
        assert config.size_list == [2, 3, 4, 5]

    def test_derived_paths(self):
        """Empty artifact paths live under out_dir"""
        config = RunConfig(out_dir='out', mode='nonlinear')
        assert config.dataset_path == Path('out') / 'dataset_nonlinear.jsonl'
        assert config.mogan_path == Path('out') / 'mogan_nonlinear.bin'
        assert config.report_path == Path('out') / 'reports'

    def test_explicit_path_wins(self):
        """A set artifact path is used as given"""
        assert RunConfig(encoder='/tmp/enc.bin').encoder_path == Path('/tmp/enc.bin')

    def test_validation_collects_errors(self):
        """Every problem is named in one message"""
        with pytest.raises(ConfigError) as exc:
            RunConfig(mode='planar', epochs=0, val_fraction=1.0).validate()
        message = str(exc.value)
        assert "mode" in message
        assert "epochs must be positive" in message
        assert "val_fraction" in message

    def test_sizes_out_of_range(self):
        """Inventories are limited to eight objects"""
        with pytest.raises(ConfigError, match="sizes"):
            RunConfig(sizes='2,9').validate()

    def test_sizes_accept_ranges(self):
        """Ranges expand inclusively"""
        assert RunConfig(sizes='2-4,7').size_list == [2, 3, 4, 7]

    def test_clashing_paths(self):
        """Two artifacts cannot share a file"""
        with pytest.raises(ConfigError, match="distinct"):
            RunConfig(mogan='x.bin', baseline='x.bin').validate()


class TestTextForm:
    """key=value parsing"""

    def test_parse_text(self):
        """Comments and blanks are skipped; values are typed"""
        values = parse_text("# run\nseed=7\n\nlr = 0.01\nembed_images=yes\nmode=nonlinear\n")
        assert values == {'seed': 7, 'lr': 0.01, 'embed_images': True, 'mode': 'nonlinear'}

    def test_unknown_key(self):
        """Typos are rejected"""
        with pytest.raises(ConfigError, match="Unknown config key"):
            parse_text("epochz=5")

    def test_bad_value(self):
        """Values must parse as the field type"""
        with pytest.raises(ConfigError, match="Bad value"):
            parse_text("epochs=many")
        with pytest.raises(ConfigError):
            coerce('embed_images', 'maybe')

    def test_missing_equals(self):
        """Lines without '=' name their number"""
        with pytest.raises(ConfigError, match="Line 2"):
            parse_text("seed=1\nepochs\n")

    def test_save_and_load(self, tmp_path):
        """Saved files load back to the same config"""
        config = RunConfig(seed=5, embed_images=True, lr=0.002, task='height:1.5')
        path = config.save(tmp_path / "nested" / "run.cfg")
        assert RunConfig.load(path) == config

    def test_missing_file(self, tmp_path):
        """Absent config files raise FileNotFoundError"""
        with pytest.raises(FileNotFoundError):
            RunConfig.load(tmp_path / "none.cfg")


class TestPrecedence:
    """CLI flag > config file > default"""

    def test_file_over_default(self, tmp_path):
        """Values from the file replace defaults"""
        path = tmp_path / "run.cfg"
        path.write_text("epochs=12\nseed=3\n")
        config = resolve_config(namespace(config=str(path), epochs=None, seed=None))
        assert (config.epochs, config.seed) == (12, 3)

    def test_flag_over_file(self, tmp_path):
        """Given flags replace file values; absent ones do not"""
        path = tmp_path / "run.cfg"
        path.write_text("epochs=12\nseed=3\n")
        config = resolve_config(namespace(config=str(path), epochs=40, seed=None))
        assert (config.epochs, config.seed) == (40, 3)

    def test_no_config_file(self):
        """Without a file the defaults apply"""
        config = resolve_config(namespace(config=None, mode='nonlinear'))
        assert config.mode == 'nonlinear'
        assert config.epochs == RunConfig().epochs

    def test_invalid_flag_value(self):
        """Resolved configs are validated"""
        with pytest.raises(ConfigError):
            resolve_config(namespace(config=None, samples=0))
