"""
Run configuration

A RunConfig is read from a flat ``key=value`` file and overridden by
command-line flags. Artifact paths left empty are derived from ``out_dir``.
"""

import argparse
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .errors import AffordLabError
from .utils import parse_int_list

logger = logging.getLogger(__name__)

MODES = ('linear', 'nonlinear')
SCHEDULES = ('step', 'epoch')
PREDICTORS = ('mogan', 'baseline', 'oracle')

_TRUE = ('true', '1', 'yes', 'on')
_FALSE = ('false', '0', 'no', 'off')


class ConfigError(AffordLabError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    mode: str = 'linear'
    out_dir: str = 'runs'

    # data generation
    episodes: int = 1000
    records: int = 1500
    embed_images: bool = False
    workers: int = 1

    # training
    encoder_epochs: int = 5000
    encoder_lr: float = 1e-3
    epochs: int = 200
    lr: float = 1e-3
    gamma: float = 0.95
    step_size: int = 3000
    sign_weight: float = 1.0
    schedule_per: str = 'step'
    val_fraction: float = 0.1
    eval_every: int = 10

    # planning
    planner_budget: int = 20000
    collapse_cutoff: float = 0.5
    task: str = 'tallest'
    sizes: str = '2,3,4,5'
    samples: int = 10
    predictor: str = 'mogan'

    # artifacts; empty means derived from out_dir
    dataset: str = ''
    images: str = ''
    encoder: str = ''
    mogan: str = ''
    baseline: str = ''
    report_dir: str = ''

    # -- derived paths -----------------------------------------------------

    def _path(self, value: str, default: str) -> Path:
        return Path(value) if value else Path(self.out_dir) / default

    @property
    def dataset_path(self) -> Path:
        return self._path(self.dataset, f'dataset_{self.mode}.jsonl')

    @property
    def images_path(self) -> Path:
        return self._path(self.images, 'images.json')

    @property
    def encoder_path(self) -> Path:
        return self._path(self.encoder, 'encoder.bin')

    @property
    def mogan_path(self) -> Path:
        return self._path(self.mogan, f'mogan_{self.mode}.bin')

    @property
    def baseline_path(self) -> Path:
        return self._path(self.baseline, f'baseline_{self.mode}.bin')

    @property
    def report_path(self) -> Path:
        return self._path(self.report_dir, 'reports')

    @property
    def size_list(self) -> List[int]:
        try:
            return parse_int_list(self.sizes)
        except ValueError:
            raise ConfigError(f"sizes must be comma-separated integers, got '{self.sizes}'")

    # -- validation and text form -----------------------------------------

    def validate(self) -> "RunConfig":
        errors = []
        if self.mode not in MODES:
            errors.append(f"mode must be one of {MODES}")
        if self.schedule_per not in SCHEDULES:
            errors.append(f"schedule_per must be one of {SCHEDULES}")
        if self.predictor not in PREDICTORS:
            errors.append(f"predictor must be one of {PREDICTORS}")
        for name in ('encoder_epochs', 'epochs', 'step_size', 'eval_every', 'planner_budget',
                     'samples', 'workers'):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        for name in ('episodes', 'records'):
            if getattr(self, name) < 0:
                errors.append(f"{name} must not be negative")
        for name in ('encoder_lr', 'lr', 'gamma', 'sign_weight'):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if not 0 <= self.val_fraction < 1:
            errors.append("val_fraction must be in [0, 1)")
        if not 0 < self.collapse_cutoff <= 1:
            errors.append("collapse_cutoff must be in (0, 1]")
        sizes = self.size_list
        if not sizes or any(s < 1 or s > 8 for s in sizes):
            errors.append("sizes must lie in 1..8")
        paths = [self.dataset_path, self.images_path, self.encoder_path, self.mogan_path,
                 self.baseline_path, self.report_path]
        if len({p.resolve() for p in paths}) != len(paths):
            errors.append("artifact paths must be distinct")
        if errors:
            raise ConfigError("Invalid configuration: " + "; ".join(errors))
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = 'true' if value else 'false'
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: Optional["RunConfig"] = None) -> "RunConfig":
        """Parse ``key=value`` lines on top of ``base`` (defaults when omitted)"""
        return replace(base or cls(), **parse_text(text))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding='utf-8')
        except FileNotFoundError:
            raise FileNotFoundError(f"Config file not found: {path}")
        return cls.from_text(text)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding='utf-8')
        return path


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: Any) -> Any:
    """Convert ``raw`` to the type of RunConfig field ``key``"""
    if key not in _TYPES:
        raise ConfigError(f"Unknown config key '{key}'")
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    value = raw.strip()
    try:
        if kind in (bool, 'bool'):
            if value.lower() in _TRUE:
                return True
            if value.lower() in _FALSE:
                return False
            raise ValueError(value)
        if kind in (int, 'int'):
            return int(value)
        if kind in (float, 'float'):
            return float(value)
    except ValueError:
        raise ConfigError(f"Bad value for '{key}': '{raw}'")
    return value


def parse_text(text: str) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"Line {number}: expected key=value, got '{line}'")
        key, raw = line.split('=', 1)
        values[key.strip()] = coerce(key.strip(), raw)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """CLI flag > config file > default.

    Flags that were not given on the command line must be None in ``args``.
    """
    config = RunConfig()
    path = getattr(args, 'config', None)
    if path:
        config = RunConfig.load(path)
        logger.debug("Loaded config from %s", path)
    overrides = {}
    for name in _TYPES:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = coerce(name, value)
    return replace(config, **overrides).validate()
