"""
Interaction records and the dataset files built from them
Supports JSON-lines record streams and CSV metric tables
"""

import csv
import hashlib
import json
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .effects import EffectTriple, effect_row
from .errors import AffordLabError
from .geometry import ObjectSpec, Orientation, Pose, catalog_by_name
from .renderer import cached_render, normalize, render_object
from .simulator import (
    CompoundState, Placement, SettleKind, SettleOutcome, SimulationMode, place, run_episode,
)

logger = logging.getLogger(__name__)

#: Decimal places kept for poses and labels in serialized records.
PRECISION = 9

DEFAULT_RECORDS = 1500
DEFAULT_MAX_EPISODES = 1000


class EmptyDataset(AffordLabError):
    pass


class LabelDrift(AffordLabError):
    """Raised when a record's labels no longer match its hash or its replay"""
    pass


def _round(values) -> Any:
    return np.round(np.asarray(values, dtype=float), PRECISION).tolist()


@dataclass(frozen=True)
class MemberRecord:
    """One object as stored in a record"""
    id: int
    step: int
    slot: int
    orientation: str
    x: float
    y: float
    z: float
    tilt_deg: float = 0.0
    supports: Tuple[int, ...] = ()
    contact_rect: Optional[Tuple[float, float, float, float]] = None
    outcome: str = SettleKind.STACKED_ON_TOP.value
    release_x: float = 0.0
    release_y: float = 0.0
    d_min: float = 0.0
    d_max: float = 0.0
    image: Optional[Tuple[float, ...]] = None

    @classmethod
    def from_placement(cls, placement: Placement, embed_images: bool = False) -> "MemberRecord":
        # images are always taken in the initial (upright) pose
        img = cached_render(placement.spec)
        return cls(
            id=placement.spec.id,
            step=placement.step,
            slot=placement.slot,
            orientation=placement.pose.orientation.value,
            x=round(placement.pose.x, PRECISION),
            y=round(placement.pose.y, PRECISION),
            z=round(placement.pose.z, PRECISION),
            tilt_deg=placement.tilt_deg,
            supports=tuple(placement.supports),
            contact_rect=tuple(_round(placement.contact_rect)) if placement.contact_rect else None,
            outcome=placement.outcome.value,
            release_x=round(placement.release_x, PRECISION),
            release_y=round(placement.release_y, PRECISION),
            d_min=round(img.d_min, PRECISION),
            d_max=round(img.d_max, PRECISION),
            image=tuple(_round(img.flat())) if embed_images else None,
        )

    def to_placement(self, specs: Dict[int, ObjectSpec]) -> Placement:
        return Placement(
            spec=specs[self.id],
            pose=Pose(self.x, self.y, self.z, Orientation.parse(self.orientation)),
            step=self.step,
            slot=self.slot,
            release_x=self.release_x,
            release_y=self.release_y,
            tilt_deg=self.tilt_deg,
            supports=tuple(self.supports),
            contact_rect=tuple(self.contact_rect) if self.contact_rect else None,
            outcome=SettleKind(self.outcome),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'id': self.id, 'step': self.step, 'slot': self.slot, 'orientation': self.orientation,
            'pose': [self.x, self.y, self.z], 'tilt_deg': self.tilt_deg,
            'supports': list(self.supports),
            'contact_rect': list(self.contact_rect) if self.contact_rect else None,
            'outcome': self.outcome, 'release': [self.release_x, self.release_y],
            'd_min': self.d_min, 'd_max': self.d_max,
        }
        if self.image is not None:
            data['image'] = list(self.image)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MemberRecord":
        x, y, z = data['pose']
        rx, ry = data.get('release', [0.0, 0.0])
        rect = data.get('contact_rect')
        image = data.get('image')
        return cls(int(data['id']), int(data['step']), int(data['slot']), data['orientation'],
                   float(x), float(y), float(z), float(data.get('tilt_deg', 0.0)),
                   tuple(int(s) for s in data.get('supports', [])),
                   tuple(float(v) for v in rect) if rect else None,
                   data.get('outcome', SettleKind.STACKED_ON_TOP.value),
                   float(rx), float(ry), float(data['d_min']), float(data['d_max']),
                   tuple(float(v) for v in image) if image is not None else None)


def compute_label_hash(members: Sequence[MemberRecord], new: MemberRecord,
                       e1: Sequence, e2: Sequence, e3: int) -> str:
    payload = json.dumps({
        'members': [[m.id, m.step, m.x, m.y, m.z, m.orientation] for m in members],
        'new': [new.id, new.step, new.slot, new.orientation],
        'e1': e1, 'e2': e2, 'e3': e3,
    }, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


@dataclass
class InteractionRecord:
    """One placement: the compound before it, the new object and its effects.

    ``members`` carry their poses before the placement, ``new`` its settled
    pose. ``e1``/``e2`` hold one row per member in decimeters.
    """
    episode: int
    step: int
    mode: str
    catalog: str
    members: List[MemberRecord]
    new: MemberRecord
    outcome: str
    e1: List[List[float]]
    e2: List[List[float]]
    e3: int
    label_hash: str = ""

    def __post_init__(self):
        if not self.label_hash:
            self.label_hash = compute_label_hash(self.members, self.new, self.e1, self.e2, self.e3)

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def tower_size(self) -> int:
        return len(self.members) + 1

    @property
    def slot(self) -> int:
        return self.new.slot

    @property
    def orientation(self) -> Orientation:
        return Orientation.parse(self.new.orientation)

    @classmethod
    def from_settle(cls, episode: int, compound_before: CompoundState, new: Placement,
                    outcome: SettleOutcome, effects: EffectTriple, mode: SimulationMode,
                    catalog: str, embed_images: bool = False) -> "InteractionRecord":
        return cls(
            episode=episode,
            step=new.step,
            mode=SimulationMode.parse(mode).value,
            catalog=catalog,
            members=[MemberRecord.from_placement(p, embed_images) for p in compound_before.placements],
            new=MemberRecord.from_placement(new, embed_images),
            outcome=outcome.kind.value,
            e1=_round(effects.e1),
            e2=_round(effects.e2),
            e3=int(effects.e3),
        )

    def targets(self) -> Tuple[np.ndarray, np.ndarray, int]:
        return (np.asarray(self.e1, dtype=float).reshape(-1, 2),
                np.asarray(self.e2, dtype=float).reshape(-1, 4), self.e3)

    def compound_before(self, specs: Optional[Dict[int, ObjectSpec]] = None) -> CompoundState:
        specs = specs or {s.id: s for s in catalog_by_name(self.catalog)}
        return CompoundState(tuple(m.to_placement(specs) for m in self.members))

    def verify(self):
        """Check the stored labels against the stored hash"""
        expected = compute_label_hash(self.members, self.new, self.e1, self.e2, self.e3)
        if expected != self.label_hash:
            raise LabelDrift(f"Episode {self.episode} step {self.step}: label hash mismatch")

    def replay(self, specs: Optional[Dict[int, ObjectSpec]] = None) -> EffectTriple:
        """Re-run the placement through the simulator and the effects oracle"""
        specs = specs or {s.id: s for s in catalog_by_name(self.catalog)}
        before = self.compound_before(specs)
        after, _ = place(before, specs[self.new.id], self.new.slot, self.orientation)
        return effect_row(before, after.placements[-1], after)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'episode': self.episode, 'step': self.step, 'mode': self.mode, 'catalog': self.catalog,
            'members': [m.to_dict() for m in self.members], 'new': self.new.to_dict(),
            'outcome': self.outcome, 'e1': self.e1, 'e2': self.e2, 'e3': self.e3,
            'label_hash': self.label_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(',', ':'))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InteractionRecord":
        record = cls(
            episode=int(data['episode']), step=int(data['step']), mode=data['mode'],
            catalog=data['catalog'],
            members=[MemberRecord.from_dict(m) for m in data['members']],
            new=MemberRecord.from_dict(data['new']),
            outcome=data['outcome'], e1=data['e1'], e2=data['e2'], e3=int(data['e3']),
            label_hash=data.get('label_hash', ''),
        )
        record.verify()
        return record

    @classmethod
    def from_json(cls, line: str) -> "InteractionRecord":
        return cls.from_dict(json.loads(line))


# ---------------------------------------------------------------------------
# Data sources
# ---------------------------------------------------------------------------

class DataSource(ABC):
    """Abstract base class for data sources"""

    def __init__(self, name: str = "data"):
        self.name = name
        self.data: List[Dict[str, Any]] = []
        self.loaded = False

    @abstractmethod
    def load_data(self) -> List[Dict[str, Any]]:
        """Load data from source"""
        pass

    @abstractmethod
    def validate_data(self) -> bool:
        """Validate data integrity"""
        pass

    def get_row_count(self) -> int:
        return len(self.data)

    def get_columns(self) -> List[str]:
        if not self.data:
            return []
        return list(self.data[0].keys())


class JSONLinesDataSource(DataSource):
    """Interaction records stored one JSON object per line"""

    def __init__(self, file_path: Union[str, Path], name: str = "records"):
        super().__init__(name)
        self.file_path = Path(file_path)

    def load_data(self) -> List[Dict[str, Any]]:
        try:
            with open(self.file_path, 'r', encoding='utf-8') as f:
                self.data = []
                for line_num, line in enumerate(f, 1):
                    if not line.strip():
                        continue
                    try:
                        self.data.append(json.loads(line))
                    except json.JSONDecodeError as e:
                        raise ValueError(f"JSON parsing error in {self.file_path} line {line_num}: {e}")
        except FileNotFoundError:
            raise FileNotFoundError(f"Dataset file not found: {self.file_path}")
        self.loaded = True
        return self.data

    def validate_data(self) -> bool:
        """Parse every row as a record; hash mismatches raise LabelDrift"""
        self.records()
        return True

    def records(self) -> List[InteractionRecord]:
        if not self.loaded:
            self.load_data()
        return [InteractionRecord.from_dict(row) for row in self.data]


class CSVDataSource(DataSource):
    """CSV table with numeric columns converted on load"""

    def __init__(self, file_path: Union[str, Path], name: str = "table",
                 encoding: str = "utf-8", delimiter: str = ","):
        super().__init__(name)
        self.file_path = Path(file_path)
        self.encoding = encoding
        self.delimiter = delimiter

    def load_data(self) -> List[Dict[str, Any]]:
        try:
            with open(self.file_path, 'r', encoding=self.encoding, newline='') as csvfile:
                reader = csv.DictReader(csvfile, delimiter=self.delimiter)
                self.data = [self._process_row(row) for row in reader if any(row.values())]
        except FileNotFoundError:
            raise FileNotFoundError(f"CSV file not found: {self.file_path}")
        except csv.Error as e:
            raise ValueError(f"CSV parsing error in {self.file_path}: {e}")
        self.loaded = True
        return self.data

    def _process_row(self, row: Dict[str, str]) -> Dict[str, Any]:
        processed: Dict[str, Any] = {}
        for key, value in row.items():
            key = key.strip()
            if value is None or value == "":
                processed[key] = None
            elif value.lower() in ("true", "false"):
                processed[key] = value.lower() == "true"
            else:
                try:
                    processed[key] = int(value)
                except ValueError:
                    try:
                        processed[key] = float(value)
                    except ValueError:
                        processed[key] = value
        return processed

    def validate_data(self) -> bool:
        if not self.loaded:
            self.load_data()
        if not self.data:
            raise ValueError(f"No rows loaded from {self.file_path}")
        first_keys = set(self.data[0].keys())
        for i, row in enumerate(self.data[1:], 2):
            if set(row.keys()) != first_keys:
                raise ValueError(f"Inconsistent columns in row {i} of {self.file_path}")
        return True


def write_records(path: Union[str, Path], records: Iterable[InteractionRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(record.to_json())
            f.write('\n')
    return path


def read_records(path: Union[str, Path]) -> List[InteractionRecord]:
    return JSONLinesDataSource(path).records()


def write_image_sidecar(path: Union[str, Path], catalog: str) -> Path:
    """Store every distinct render of the catalog, keyed catalog/id/orientation"""
    images = {}
    for spec in catalog_by_name(catalog):
        for orientation in Orientation:
            img = normalize(render_object(spec, orientation))
            images[f"{catalog}/{spec.id}/{orientation.value}"] = {
                'd_min': round(img.d_min, PRECISION),
                'd_max': round(img.d_max, PRECISION),
                'values': np.round(img.flat(), 6).tolist(),
            }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(images, f, separators=(',', ':'), sort_keys=True)
    return path


# ---------------------------------------------------------------------------
# Generation and splitting
# ---------------------------------------------------------------------------

def default_catalog(mode: Union[SimulationMode, str]) -> str:
    return 'standard' if SimulationMode.parse(mode) is SimulationMode.LINEAR else 'nonlinear'


def generate_dataset(seed: int = 42, mode: Union[SimulationMode, str] = SimulationMode.LINEAR,
                     target_records: int = DEFAULT_RECORDS, max_episodes: int = DEFAULT_MAX_EPISODES,
                     catalog: Optional[str] = None, workers: int = 1,
                     embed_images: bool = False) -> List[InteractionRecord]:
    """Run episodes ``seed + i`` until ``target_records`` records exist.

    The result does not depend on ``workers``: episodes are computed in
    batches but consumed strictly in index order.
    """
    mode = SimulationMode.parse(mode)
    catalog = catalog or default_catalog(mode)
    inventory = catalog_by_name(catalog)
    if max_episodes <= 0 or target_records <= 0:
        logger.warning("No episodes requested; the dataset will be empty")
        return []

    def episode(i: int) -> List[InteractionRecord]:
        return run_episode(seed + i, inventory, mode, episode_id=i, catalog=catalog,
                           embed_images=embed_images)

    records: List[InteractionRecord] = []
    batch = max(1, workers)
    with ThreadPoolExecutor(max_workers=batch) as pool:
        for start in range(0, max_episodes, batch):
            indices = range(start, min(start + batch, max_episodes))
            for produced in pool.map(episode, indices):
                if len(records) >= target_records:
                    break
                records.extend(produced)
            if len(records) >= target_records:
                break
    logger.info("Generated %d records from episodes seeded at %d", len(records), seed)
    return records


def split_by_episode(records: Sequence[InteractionRecord], val_fraction: float = 0.1,
                     seed: int = 42) -> Tuple[List[InteractionRecord], List[InteractionRecord]]:
    """Hold out whole episodes so steps of one episode never straddle splits"""
    episodes = sorted({r.episode for r in records})
    if len(episodes) < 2 or val_fraction <= 0:
        return list(records), []
    n_val = min(len(episodes) - 1, max(1, int(round(val_fraction * len(episodes)))))
    rng = np.random.default_rng(seed)
    held_out = set(rng.choice(episodes, size=n_val, replace=False).tolist())
    train = [r for r in records if r.episode not in held_out]
    val = [r for r in records if r.episode in held_out]
    return train, val


def summarize_sizes(records: Iterable[InteractionRecord]) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    for r in records:
        counts[r.tower_size] = counts.get(r.tower_size, 0) + 1
    return dict(sorted(counts.items()))
