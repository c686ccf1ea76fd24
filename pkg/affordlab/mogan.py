"""
Graph networks predicting the effects of a placement on a compound

Each effect has its own network: two graph convolutions embed the compound,
the embeddings are summarized by mean and max, and a three-layer decoder reads
the new object's feature, that summary, the queried member's embedding and
(in nonlinear mode) the slot.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import EmptyDataset, InteractionRecord
from .encoder import FeatureBank
from .errors import AffordLabError
from .geometry import ObjectSpec, Orientation
from .neuralnet import (
    Adam, AdjacencyNorm, GraphConv, Linear, Module, NonFiniteValue, Tensor, aggregate_mean_max,
    broadcast_rows, concat, count_parameters, leaky, leaky_grad, leaky_relu, load_snapshot, logistic,
    mlp_backward, mlp_forward, mse_sign_grad, save_snapshot, sigmoid, take_rows,
)
from .simulator import SLOT_X, CompoundState, SimulationMode

logger = logging.getLogger(__name__)

#: Bounding boxes closer than this count as intersecting when linking nodes.
EDGE_INFLATION = 0.001

GRAPH_WIDTH = 32
DECODER_WIDTHS = (96, 48)
HEAD_OUTPUTS = {'e1': 2, 'e2': 4, 'e3': 1}


class EmptyCompound(AffordLabError):
    pass


class BadQueryIndex(AffordLabError):
    pass


@dataclass(frozen=True, eq=False)
class CompoundGraph:
    node_features: np.ndarray
    edges: Tuple[Tuple[int, int], ...]
    adjacency: AdjacencyNorm

    @property
    def k(self) -> int:
        return len(self.node_features)


def edge_creation(compound: CompoundState) -> List[Tuple[int, int]]:
    """Link consecutive placements whose boxes touch or that support each other.

    Edges are 0-based and point from the later placement to the earlier one.
    """
    edges = []
    placements = compound.placements
    for i in range(1, len(placements)):
        earlier, later = placements[i - 1], placements[i]
        touching = earlier.aabb.intersects(later.aabb, inflate=EDGE_INFLATION)
        linked = earlier.step in later.supports or later.step in earlier.supports
        if touching or linked:
            edges.append((i, i - 1))
    return edges


def build_graph(compound: CompoundState, features: Sequence[np.ndarray],
                mode: Union[SimulationMode, str] = SimulationMode.LINEAR) -> CompoundGraph:
    k = len(compound.placements)
    if k == 0:
        raise EmptyCompound("An empty compound has no graph")
    if len(features) != k:
        raise ValueError(f"Got {len(features)} features for {k} placements")
    if SimulationMode.parse(mode) is SimulationMode.LINEAR:
        edges = [(i, i - 1) for i in range(1, k)]
    else:
        edges = edge_creation(compound)
    node_features = np.stack([np.asarray(f, dtype=np.float64) for f in features])
    return CompoundGraph(node_features, tuple(edges), AdjacencyNorm.from_edges(k, edges))


def slot_one_hot(slot: int) -> np.ndarray:
    v = np.zeros(len(SLOT_X))
    v[slot] = 1.0
    return v


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Sample:
    """A record turned into model inputs and targets"""
    graph: Optional[CompoundGraph]
    member_features: np.ndarray
    new_feature: np.ndarray
    slot: Optional[np.ndarray]
    top_index: Optional[int]
    e1: np.ndarray
    e2: np.ndarray
    e3: int
    tower_size: int
    episode: int = 0

    @property
    def k(self) -> int:
        return len(self.e1)


def make_sample(compound: CompoundState, bank: FeatureBank, catalog: str, new_id: int, slot: int,
                orientation: Union[Orientation, str], e1: Optional[np.ndarray] = None,
                e2: Optional[np.ndarray] = None, e3: int = 0, episode: int = 0) -> Sample:
    mode = bank.mode
    feats = [bank.vector(catalog, p.spec.id, p.pose.orientation) for p in compound.placements]
    graph = build_graph(compound, feats, mode) if feats else None
    top = compound.top_member()
    k = len(compound.placements)
    return Sample(
        graph=graph,
        member_features=np.stack(feats) if feats else np.zeros((0, bank.feature_size)),
        new_feature=bank.vector(catalog, new_id, orientation),
        slot=slot_one_hot(slot) if mode is SimulationMode.NONLINEAR else None,
        top_index=compound.placements.index(top) if top is not None else None,
        e1=np.zeros((k, 2)) if e1 is None else np.asarray(e1, dtype=float).reshape(k, 2),
        e2=np.zeros((k, 4)) if e2 is None else np.asarray(e2, dtype=float).reshape(k, 4),
        e3=int(e3),
        tower_size=k + 1,
        episode=episode,
    )


def prepare_samples(records: Sequence[InteractionRecord], bank: FeatureBank) -> List[Sample]:
    samples = []
    for r in records:
        e1, e2, e3 = r.targets()
        samples.append(make_sample(r.compound_before(), bank, r.catalog, r.new.id, r.slot,
                                   r.orientation, e1, e2, e3, r.episode))
    return samples


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class InputStats:
    """Column-wise standardization applied to object features before a model sees them"""
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, size: int) -> "InputStats":
        return cls(np.zeros(size), np.ones(size))

    @classmethod
    def fit(cls, samples: Sequence[Sample]) -> "InputStats":
        """Mean and spread over every member and new-object feature"""
        rows = [s.new_feature[None, :] for s in samples]
        rows += [s.member_features for s in samples if len(s.member_features)]
        data = np.concatenate(rows, axis=0)
        spread = data.std(axis=0)
        return cls(data.mean(axis=0), np.where(spread > 1e-6, spread, 1.0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.shift) / self.scale

    def state(self) -> Dict[str, np.ndarray]:
        return {'inputs.shift': self.shift.copy(), 'inputs.scale': self.scale.copy()}

    @classmethod
    def from_state(cls, state: Dict[str, np.ndarray], size: int) -> "InputStats":
        if 'inputs.shift' not in state:
            return cls.identity(size)
        return cls(np.asarray(state['inputs.shift']), np.asarray(state['inputs.scale']))


class EffectHead(Module):
    def __init__(self, feature_size: int, out_size: int, slots: int, rng: np.random.Generator,
                 probability: bool = False):
        self.probability = probability
        self.feature_size = feature_size
        self.inputs = InputStats.identity(feature_size)
        self.gc1 = GraphConv(feature_size, GRAPH_WIDTH, rng)
        self.gc2 = GraphConv(GRAPH_WIDTH, GRAPH_WIDTH, rng)
        decoder_in = feature_size + 2 * GRAPH_WIDTH + GRAPH_WIDTH + slots
        self.dec1 = Linear(decoder_in, DECODER_WIDTHS[0], rng)
        self.dec2 = Linear(DECODER_WIDTHS[0], DECODER_WIDTHS[1], rng)
        self.out = Linear(DECODER_WIDTHS[1], out_size, rng)

    def decoder(self) -> List[Linear]:
        return [self.dec1, self.dec2, self.out]

    def embed(self, graph: CompoundGraph) -> Tensor:
        x = Tensor(self.inputs.apply(graph.node_features))
        h = leaky_relu(self.gc1(x, graph.adjacency))
        return leaky_relu(self.gc2(h, graph.adjacency))

    def forward(self, graph: Optional[CompoundGraph], new_feature: np.ndarray, rows: Sequence[int],
                slot: Optional[np.ndarray] = None) -> Tensor:
        """One output row per entry of ``rows`` (0-based member indices).

        Without a graph the summary and query embeddings are zero and a
        single row is produced.
        """
        if graph is None:
            n = 1
            summary = Tensor(np.zeros(2 * GRAPH_WIDTH))
            query = Tensor(np.zeros((1, GRAPH_WIDTH)))
        else:
            n = len(rows)
            h = self.embed(graph)
            summary = aggregate_mean_max(h)
            query = take_rows(h, rows)
        parts = [broadcast_rows(Tensor(self.inputs.apply(new_feature)), n), broadcast_rows(summary, n), query]
        if slot is not None:
            parts.append(broadcast_rows(Tensor(slot), n))
        x = concat(parts, axis=1)
        x = leaky_relu(self.dec1(x))
        x = leaky_relu(self.dec2(x))
        y = self.out(x)
        return sigmoid(y) if self.probability else y

    def _run(self, graph: Optional[CompoundGraph], new_feature: np.ndarray, rows: Sequence[int],
             slot: Optional[np.ndarray]):
        """Array version of ``forward`` that also returns what ``fit_step`` differentiates"""
        trace = None
        if graph is None:
            n = 1
            summary = np.zeros(2 * GRAPH_WIDTH)
            query = np.zeros((1, GRAPH_WIDTH))
        else:
            idx = np.asarray(rows, dtype=int)
            n = len(idx)
            adj = graph.adjacency.matrix
            x0 = self.inputs.apply(graph.node_features)
            z1 = adj @ (x0 @ self.gc1.weight.values + self.gc1.bias.values)
            h1 = leaky(z1)
            z2 = adj @ (h1 @ self.gc2.weight.values + self.gc2.bias.values)
            h2 = leaky(z2)
            arg = np.argmax(h2, axis=0)
            summary = np.concatenate([h2.mean(axis=0), h2[arg, np.arange(GRAPH_WIDTH)]])
            query = h2[idx]
            trace = (adj, x0, z1, h1, z2, arg, idx)
        parts = [np.broadcast_to(self.inputs.apply(new_feature), (n, self.feature_size)),
                 np.broadcast_to(summary, (n, 2 * GRAPH_WIDTH)), query]
        if slot is not None:
            parts.append(np.broadcast_to(slot, (n, len(slot))))
        y, cache = mlp_forward(self.decoder(), np.concatenate(parts, axis=1))
        out = logistic(y) if self.probability else y
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue("Non-finite effect prediction")
        return out, cache, trace

    def infer(self, graph: Optional[CompoundGraph], new_feature: np.ndarray, rows: Sequence[int],
              slot: Optional[np.ndarray] = None) -> np.ndarray:
        return self._run(graph, new_feature, rows, slot)[0]

    def fit_step(self, graph: Optional[CompoundGraph], new_feature: np.ndarray, rows: Sequence[int],
                 slot: Optional[np.ndarray], target: np.ndarray, sign_weight: float = 0.0) -> float:
        """Loss of one sample; every parameter's ``grad`` is overwritten"""
        out, cache, trace = self._run(graph, new_feature, rows, slot)
        loss, grad = mse_sign_grad(out, np.asarray(target, dtype=np.float64), sign_weight)
        if self.probability:
            grad = grad * out * (1.0 - out)
        dx = mlp_backward(self.decoder(), cache, grad)
        if trace is None:
            for layer in (self.gc1, self.gc2):
                layer.weight.grad = np.zeros_like(layer.weight.values)
                layer.bias.grad = np.zeros_like(layer.bias.values)
            return loss

        adj, x0, z1, h1, z2, arg, idx = trace
        f, g = self.feature_size, GRAPH_WIDTH
        d_summary = dx[:, f:f + 2 * g].sum(axis=0)
        dh2 = np.zeros_like(z2)
        np.add.at(dh2, idx, dx[:, f + 2 * g:f + 3 * g])
        dh2 += d_summary[:g] / len(z2)
        dh2[arg, np.arange(g)] += d_summary[g:]

        du2 = adj.T @ leaky_grad(dh2, z2)
        self.gc2.weight.grad = h1.T @ du2
        self.gc2.bias.grad = du2.sum(axis=0)
        du1 = adj.T @ leaky_grad(du2 @ self.gc2.weight.values.T, z1)
        self.gc1.weight.grad = x0.T @ du1
        self.gc1.bias.grad = du1.sum(axis=0)
        return loss


class MoganModel(Module):
    """Three independent effect networks sharing input conventions"""

    def __init__(self, feature_size: int, mode: Union[SimulationMode, str] = SimulationMode.LINEAR,
                 seed: int = 42):
        self.mode = SimulationMode.parse(mode)
        self.feature_size = feature_size
        self.seed = seed
        self.slots = len(SLOT_X) if self.mode is SimulationMode.NONLINEAR else 0
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
        self.e1 = EffectHead(feature_size, HEAD_OUTPUTS['e1'], self.slots, rngs[0])
        self.e2 = EffectHead(feature_size, HEAD_OUTPUTS['e2'], self.slots, rngs[1])
        self.e3 = EffectHead(feature_size, HEAD_OUTPUTS['e3'], self.slots, rngs[2], probability=True)
        self.inputs = InputStats.identity(feature_size)

    def heads(self) -> Dict[str, EffectHead]:
        return {'e1': self.e1, 'e2': self.e2, 'e3': self.e3}

    def set_inputs(self, inputs: InputStats):
        self.inputs = inputs
        for head in self.heads().values():
            head.inputs = inputs

    def forward(self, graph: Optional[CompoundGraph], new_feature: np.ndarray, query_index: int,
                slot: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, float]:
        """Effects for one 1-based query; the collapse head always queries the top member"""
        k = 0 if graph is None else graph.k
        if k and not 1 <= query_index <= k:
            raise BadQueryIndex(f"Query index {query_index} outside 1..{k}")
        rows = [query_index - 1] if k else [0]
        e1 = self.e1.forward(graph, new_feature, rows, slot).values[0]
        e2 = self.e2.forward(graph, new_feature, rows, slot).values[0]
        e3 = float(self.e3.forward(graph, new_feature, rows, slot).values[0, 0])
        return e1, e2, e3

    def predict_sample(self, sample: Sample) -> Tuple[np.ndarray, np.ndarray, float]:
        """All k member rows at once plus the collapse probability"""
        if sample.graph is None:
            e3 = self.e3.infer(None, sample.new_feature, [0], sample.slot)
            return np.zeros((0, 2)), np.zeros((0, 4)), float(e3[0, 0])
        rows = list(range(sample.graph.k))
        e1 = self.e1.infer(sample.graph, sample.new_feature, rows, sample.slot)
        e2 = self.e2.infer(sample.graph, sample.new_feature, rows, sample.slot)
        e3 = self.e3.infer(sample.graph, sample.new_feature, [sample.top_index], sample.slot)
        return e1, e2, float(e3[0, 0])

    def save(self, path: Union[str, Path], metadata: Optional[Dict] = None) -> Path:
        meta = {'architecture': 'mogan', 'mode': self.mode.value, 'feature_size': self.feature_size,
                'seed': self.seed, 'parameters': count_parameters(self)}
        meta.update(metadata or {})
        return save_snapshot(path, {**self.state_dict(), **self.inputs.state()}, meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MoganModel":
        state, meta = load_snapshot(path)
        model = cls(int(meta['feature_size']), meta['mode'], int(meta.get('seed', 42)))
        model.load_state_dict(state)
        model.set_inputs(InputStats.from_state(state, model.feature_size))
        return model


def predict_candidate(model, compound: CompoundState, bank: FeatureBank, catalog: str,
                      candidate: ObjectSpec, slot: int,
                      orientation: Union[Orientation, str] = Orientation.UPRIGHT
                      ) -> Tuple[np.ndarray, np.ndarray, float]:
    """Per-member (e1, e2) rows and the collapse probability of one action"""
    sample = make_sample(compound, bank, catalog, candidate.id, slot, orientation)
    return model.predict_sample(sample)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingConfig:
    epochs: int = 200
    # sized for the desk-scale dataset; lr=1e-4 with step_size=500 suits much longer runs
    lr: float = 1e-3
    gamma: float = 0.95
    step_size: int = 3000
    sign_weight: float = 1.0
    schedule_per: str = 'step'
    eval_every: int = 10
    seed: int = 42


@dataclass(frozen=True)
class MetricRow:
    epoch: int
    head: str
    split: str
    tower_size: int
    value: float

    def to_dict(self) -> Dict[str, Union[int, float, str]]:
        return {'epoch': self.epoch, 'head': self.head, 'split': self.split,
                'tower_size': self.tower_size, 'value': round(self.value, 6)}


@dataclass
class TrainingLog:
    rows: List[MetricRow] = field(default_factory=list)

    def add(self, epoch: int, head: str, split: str, tower_size: int, value: float):
        self.rows.append(MetricRow(epoch, head, split, tower_size, float(value)))

    def latest(self, head: str, split: str = 'val') -> Dict[int, float]:
        """tower_size -> value for the last logged epoch of ``head``"""
        rows = [r for r in self.rows if r.head == head and r.split == split]
        if not rows:
            return {}
        last = max(r.epoch for r in rows)
        return {r.tower_size: r.value for r in rows if r.epoch == last}


def log_validation(log: TrainingLog, epoch: int, predict: Callable[[Sample], Tuple[np.ndarray, np.ndarray, float]],
                   samples: Sequence[Sample]):
    from .evaluation import size_errors

    for head, errors in size_errors(predict, samples).items():
        for size, value in errors.items():
            log.add(epoch, head, 'val', size, value)


def train_mogan(model: MoganModel, train: Sequence[Sample], val: Sequence[Sample] = (),
                config: Optional[TrainingConfig] = None, progress=None) -> TrainingLog:
    """Batch-1 training of the three heads.

    E1/E2 minimize mse + sign_weight * sign loss over every member row of a
    sample, all rows in one decoder pass; E3 minimizes mse on the collapse
    flag of the top-member query. Inputs are standardized with statistics of
    ``train``, which the model keeps.
    """
    config = config or TrainingConfig()
    if not train:
        raise EmptyDataset("No training samples")
    model.set_inputs(InputStats.fit(train))
    heads = model.heads()
    optimizers = {name: Adam(head.parameters().values(), config.lr, config.gamma, config.step_size)
                  for name, head in heads.items()}
    rng = np.random.default_rng(config.seed)
    log = TrainingLog()
    for epoch in range(1, config.epochs + 1):
        totals = {name: [] for name in heads}
        for idx in rng.permutation(len(train)):
            sample = train[int(idx)]
            for name, head in heads.items():
                if name != 'e3' and sample.graph is None:
                    continue
                if name == 'e3':
                    rows = [sample.top_index] if sample.graph is not None else [0]
                    loss = head.fit_step(sample.graph, sample.new_feature, rows, sample.slot,
                                         np.array([[float(sample.e3)]]))
                else:
                    target = sample.e1 if name == 'e1' else sample.e2
                    loss = head.fit_step(sample.graph, sample.new_feature, list(range(sample.k)),
                                         sample.slot, target, config.sign_weight)
                opt = optimizers[name]
                opt.step()
                if config.schedule_per == 'step':
                    opt.schedule_step()
                totals[name].append(loss)
        if config.schedule_per == 'epoch':
            for opt in optimizers.values():
                opt.schedule_step()
        for name, losses in totals.items():
            if losses:
                log.add(epoch, name, 'train', 0, float(np.mean(losses)))
        if val and (epoch % config.eval_every == 0 or epoch == config.epochs):
            log_validation(log, epoch, model.predict_sample, val)
        if progress is not None:
            progress(epoch, {name: float(np.mean(v)) if v else 0.0 for name, v in totals.items()})
    return log
