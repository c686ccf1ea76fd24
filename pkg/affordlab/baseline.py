"""
Feed-forward baseline over concatenated, zero-padded object features
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import EmptyDataset
from .errors import AffordLabError
from .mogan import InputStats, Sample, TrainingConfig, TrainingLog, log_validation
from .neuralnet import (
    Adam, Linear, Module, NonFiniteValue, Tensor, count_parameters, leaky_relu, load_snapshot,
    logistic, mlp_backward, mlp_forward, mse_sign_grad, reshape, save_snapshot, sigmoid, take_rows,
)
from .simulator import SLOT_X, SimulationMode

logger = logging.getLogger(__name__)

#: Largest compound the padded input can describe.
MAX_MEMBERS = 14

#: Per-member output block: e1 (2) then e2 (4).
ROW_OUTPUTS = 6

HIDDEN_WIDTHS = (160, 64, 160)


class CompoundTooLarge(AffordLabError):
    pass


class BaselineModel(Module):
    """Encoder-decoder MLP emitting every slot's effects at once.

    Output layout: 14 blocks of [e1 top, e1 bottom, x+, x-, y+, y-] in
    placement order, then one collapse logit.
    """

    def __init__(self, feature_size: int, mode: Union[SimulationMode, str] = SimulationMode.LINEAR,
                 seed: int = 42):
        self.mode = SimulationMode.parse(mode)
        self.feature_size = feature_size
        self.seed = seed
        self.slots = len(SLOT_X) if self.mode is SimulationMode.NONLINEAR else 0
        self.input_size = feature_size * (MAX_MEMBERS + 1) + self.slots
        self.output_size = MAX_MEMBERS * ROW_OUTPUTS + 1
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        widths = (self.input_size,) + HIDDEN_WIDTHS + (self.output_size,)
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.inputs = InputStats.identity(feature_size)

    def input_vector(self, sample: Sample) -> np.ndarray:
        k = len(sample.member_features)
        if k > MAX_MEMBERS:
            raise CompoundTooLarge(f"Compound of {k} objects exceeds {MAX_MEMBERS} slots")
        x = np.zeros(self.input_size)
        f = self.feature_size
        if k:
            x[:k * f] = self.inputs.apply(sample.member_features).reshape(-1)
        x[MAX_MEMBERS * f:(MAX_MEMBERS + 1) * f] = self.inputs.apply(sample.new_feature)
        if self.slots:
            x[(MAX_MEMBERS + 1) * f:] = sample.slot
        return x

    def forward_tensor(self, sample: Sample) -> Tuple[Tensor, Tensor]:
        """(14, 6) effect block and (1, 1) collapse probability, differentiable"""
        h = Tensor(self.input_vector(sample)[None, :])
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = leaky_relu(h)
        effects = reshape(h, (self.output_size,))
        block = take_rows(effects, list(range(MAX_MEMBERS * ROW_OUTPUTS)))
        logit = take_rows(effects, [MAX_MEMBERS * ROW_OUTPUTS])
        return reshape(block, (MAX_MEMBERS, ROW_OUTPUTS)), sigmoid(reshape(logit, (1, 1)))

    def _run(self, sample: Sample):
        out, cache = mlp_forward(self.layers, self.input_vector(sample)[None, :])
        block = out[0, :MAX_MEMBERS * ROW_OUTPUTS].reshape(MAX_MEMBERS, ROW_OUTPUTS)
        prob = float(logistic(out[0, -1]))
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue("Non-finite baseline prediction")
        return block, prob, cache

    def predict_sample(self, sample: Sample) -> Tuple[np.ndarray, np.ndarray, float]:
        block, prob, _ = self._run(sample)
        k = sample.k
        return block[:k, :2], block[:k, 2:], prob

    def fit_step(self, sample: Sample, sign_weight: float = 0.0) -> float:
        """Effect loss on all slots plus collapse mse; fills every layer's ``grad``"""
        block, prob, cache = self._run(sample)
        effect, d_block = mse_sign_grad(block, padded_targets(sample), sign_weight)
        collapse, d_prob = mse_sign_grad(np.array([[prob]]), np.array([[float(sample.e3)]]))
        grad = np.zeros((1, self.output_size))
        grad[0, :MAX_MEMBERS * ROW_OUTPUTS] = d_block.reshape(-1)
        grad[0, -1] = d_prob[0, 0] * prob * (1.0 - prob)
        mlp_backward(self.layers, cache, grad)
        return effect + collapse

    def save(self, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
        meta = {'architecture': 'baseline', 'mode': self.mode.value, 'feature_size': self.feature_size,
                'seed': self.seed, 'parameters': count_parameters(self)}
        meta.update(metadata or {})
        return save_snapshot(path, {**self.state_dict(), **self.inputs.state()}, meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BaselineModel":
        state, meta = load_snapshot(path)
        model = cls(int(meta['feature_size']), meta['mode'], int(meta.get('seed', 42)))
        model.load_state_dict(state)
        model.inputs = InputStats.from_state(state, model.feature_size)
        return model


def padded_targets(sample: Sample) -> np.ndarray:
    """(14, 6) target block; slots past k stay exactly zero"""
    target = np.zeros((MAX_MEMBERS, ROW_OUTPUTS))
    if sample.k:
        target[:sample.k, :2] = sample.e1
        target[:sample.k, 2:] = sample.e2
    return target


def train_baseline(model: BaselineModel, train: Sequence[Sample], val: Sequence[Sample] = (),
                   config: Optional[TrainingConfig] = None, progress=None) -> TrainingLog:
    """Same recipe as the graph model, on all slots at once"""
    config = config or TrainingConfig()
    if not train:
        raise EmptyDataset("No training samples")
    model.inputs = InputStats.fit(train)
    optimizer = Adam(model.parameters().values(), config.lr, config.gamma, config.step_size)
    rng = np.random.default_rng(config.seed)
    log = TrainingLog()
    for epoch in range(1, config.epochs + 1):
        losses = []
        for idx in rng.permutation(len(train)):
            losses.append(model.fit_step(train[int(idx)], config.sign_weight))
            optimizer.step()
            if config.schedule_per == 'step':
                optimizer.schedule_step()
        if config.schedule_per == 'epoch':
            optimizer.schedule_step()
        log.add(epoch, 'baseline', 'train', 0, float(np.mean(losses)))
        if val and (epoch % config.eval_every == 0 or epoch == config.epochs):
            log_validation(log, epoch, model.predict_sample, val)
        if progress is not None:
            progress(epoch, {'baseline': float(np.mean(losses))})
    return log
