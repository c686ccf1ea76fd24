"""
Single-object autoencoder and the node features derived from it

The encoder compresses a normalized 32x32 depth render to a 4-dimensional
code. Node features are that code followed by the render's d_min and d_max,
plus an orientation flag in nonlinear mode. The decoder only exists to train
the encoder.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import EmptyDataset
from .errors import AffordLabError
from .geometry import ObjectSpec, Orientation, catalog_by_name
from .neuralnet import (
    Adam, Linear, Module, Tensor, count_parameters, leaky_relu, load_snapshot,
    mse_loss, save_snapshot, sigmoid,
)
from .renderer import IMAGE_SIZE, WINDOW_SCALE, NormalizedImage, cached_render, normalize, render_object
from .simulator import SimulationMode

logger = logging.getLogger(__name__)

ENCODER_WIDTHS = (IMAGE_SIZE * IMAGE_SIZE, 256, 256, 64, 4)
LATENT_SIZE = ENCODER_WIDTHS[-1]

JITTERS_PER_VIEW = 8
DEFAULT_EPOCH_CAP = 5000
PLATEAU_EPOCHS = 50
PLATEAU_DELTA = 1e-6


class ModelNotLoaded(AffordLabError):
    pass


@dataclass(frozen=True)
class LatentFeature:
    """Node feature: ``[z0..z3, d_min, d_max]`` plus the flag when present"""
    z: Tuple[float, ...]
    d_min: float
    d_max: float
    orientation_flag: Optional[int] = None

    def __post_init__(self):
        if self.d_min > self.d_max:
            raise ValueError("d_min must not exceed d_max")

    def vector(self) -> np.ndarray:
        values = list(self.z) + [self.d_min, self.d_max]
        if self.orientation_flag is not None:
            values.append(float(self.orientation_flag))
        return np.array(values, dtype=np.float64)

    @property
    def size(self) -> int:
        return len(self.z) + 2 + (0 if self.orientation_flag is None else 1)


class Autoencoder(Module):
    def __init__(self, seed: int = 42):
        enc_rng, dec_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]
        widths = ENCODER_WIDTHS
        self.encoder = [Linear(a, b, enc_rng) for a, b in zip(widths[:-1], widths[1:])]
        back = widths[::-1]
        self.decoder = [Linear(a, b, dec_rng) for a, b in zip(back[:-1], back[1:])]

    def encode(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.encoder):
            x = layer(x)
            if i < len(self.encoder) - 1:
                x = leaky_relu(x)
        return x

    def reconstruct(self, x: Tensor) -> Tensor:
        h = self.encode(x)
        for i, layer in enumerate(self.decoder):
            h = layer(h)
            h = leaky_relu(h) if i < len(self.decoder) - 1 else sigmoid(h)
        return h

    def encoder_state(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.state_dict().items() if k.startswith('encoder.')}


@dataclass
class AutoencoderTrainingResult:
    model: Autoencoder
    history: List[Tuple[int, float, float]] = field(default_factory=list)
    stopped_epoch: int = 0

    @property
    def final_val_mse(self) -> float:
        return self.history[-1][2] if self.history else float('nan')


def training_images(catalogs: Sequence[str] = ('standard', 'nonlinear'), jitters: int = JITTERS_PER_VIEW,
                    seed: int = 42) -> Tuple[List[NormalizedImage], List[NormalizedImage]]:
    """Renders of every catalog object in both orientations.

    Training gets the centered view plus ``jitters`` sub-pixel shifts;
    validation gets one independent shift per view.
    """
    rng = np.random.default_rng(seed)
    train: List[NormalizedImage] = []
    val: List[NormalizedImage] = []
    for name in catalogs:
        for spec in catalog_by_name(name):
            pixel = WINDOW_SCALE * max(spec.outer_width, spec.outer_depth) / IMAGE_SIZE
            for orientation in Orientation:
                train.append(cached_render(spec, orientation))
                for _ in range(jitters):
                    offset = tuple(rng.uniform(-0.5, 0.5, size=2) * pixel)
                    train.append(normalize(render_object(spec, orientation, offset)))
                offset = tuple(rng.uniform(-0.5, 0.5, size=2) * pixel)
                val.append(normalize(render_object(spec, orientation, offset)))
    return train, val


def _stack(images: Sequence[NormalizedImage]) -> np.ndarray:
    return np.stack([img.flat() for img in images])


def train_autoencoder(images: Sequence[NormalizedImage], validation: Optional[Sequence[NormalizedImage]] = None,
                      epochs: int = DEFAULT_EPOCH_CAP, lr: float = 1e-3, seed: int = 42,
                      patience: int = PLATEAU_EPOCHS, min_delta: float = PLATEAU_DELTA,
                      progress=None) -> AutoencoderTrainingResult:
    """Full-batch Adam on reconstruction MSE with a plateau stop.

    Training stops once the validation MSE has not improved by ``min_delta``
    for ``patience`` epochs, or at ``epochs``. ``progress(epoch, train, val)``
    is called every 50 epochs when given.
    """
    if not images:
        raise EmptyDataset("No images to train the autoencoder on")
    x_train = _stack(images)
    x_val = _stack(validation) if validation else x_train
    model = Autoencoder(seed)
    optimizer = Adam(model.parameters().values(), lr=lr, gamma=1.0)
    result = AutoencoderTrainingResult(model)
    best = float('inf')
    best_epoch = 0
    for epoch in range(1, epochs + 1):
        optimizer.zero_grad()
        loss = mse_loss(model.reconstruct(Tensor(x_train)), x_train)
        loss.backward()
        optimizer.step()
        val_loss = mse_loss(model.reconstruct(Tensor(x_val)), x_val).item()
        result.history.append((epoch, loss.item(), val_loss))
        if progress is not None and epoch % 50 == 0:
            progress(epoch, loss.item(), val_loss)
        if val_loss < best - min_delta:
            best, best_epoch = val_loss, epoch
        elif epoch - best_epoch >= patience:
            logger.info("Autoencoder plateaued at epoch %d (val MSE %.3g)", epoch, val_loss)
            break
    result.stopped_epoch = epoch
    return result


class ObjectEncoder:
    """Encoder half of a trained autoencoder"""

    def __init__(self, model: Optional[Autoencoder] = None):
        self.model = model

    @property
    def loaded(self) -> bool:
        return self.model is not None

    def encode(self, img: NormalizedImage, orientation: Optional[Union[Orientation, int]] = None) -> LatentFeature:
        if self.model is None:
            raise ModelNotLoaded("No encoder snapshot loaded")
        z = self.model.encode(Tensor(img.flat()[None, :])).values[0]
        flag = None if orientation is None else Orientation.parse(orientation).flag
        return LatentFeature(tuple(float(v) for v in z), img.d_min, img.d_max, flag)

    def save(self, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
        if self.model is None:
            raise ModelNotLoaded("No encoder to save")
        meta = {'architecture': 'autoencoder', 'widths': list(ENCODER_WIDTHS),
                'parameters': count_parameters(self.model)}
        meta.update(metadata or {})
        return save_snapshot(path, self.model.encoder_state(), meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ObjectEncoder":
        state, _ = load_snapshot(path)
        model = Autoencoder()
        for name, p in model.parameters().items():
            if name in state:
                p.assign(state[name])
        return cls(model)


class FeatureBank:
    """LatentFeature cache keyed by (catalog, object id, orientation).

    Renders are always taken upright; in nonlinear mode the release
    orientation is carried by the appended flag.
    """

    def __init__(self, encoder: ObjectEncoder, mode: Union[SimulationMode, str] = SimulationMode.LINEAR):
        self.encoder = encoder
        self.mode = SimulationMode.parse(mode)
        self._cache: Dict[Tuple[str, int, str], LatentFeature] = {}
        self._specs: Dict[str, Dict[int, ObjectSpec]] = {}

    @property
    def feature_size(self) -> int:
        return LATENT_SIZE + 2 + (1 if self.mode is SimulationMode.NONLINEAR else 0)

    def spec(self, catalog: str, obj_id: int) -> ObjectSpec:
        if catalog not in self._specs:
            self._specs[catalog] = {s.id: s for s in catalog_by_name(catalog)}
        return self._specs[catalog][obj_id]

    def feature(self, catalog: str, obj_id: int,
                orientation: Union[Orientation, str] = Orientation.UPRIGHT) -> LatentFeature:
        orientation = Orientation.parse(orientation)
        key = (catalog, obj_id, orientation.value)
        if key not in self._cache:
            img = cached_render(self.spec(catalog, obj_id))
            flag = orientation if self.mode is SimulationMode.NONLINEAR else None
            self._cache[key] = self.encoder.encode(img, flag)
        return self._cache[key]

    def vector(self, catalog: str, obj_id: int,
               orientation: Union[Orientation, str] = Orientation.UPRIGHT) -> np.ndarray:
        return self.feature(catalog, obj_id, orientation).vector()
