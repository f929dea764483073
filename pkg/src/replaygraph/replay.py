"""The experience-replay loop: per task, train on a weighted mix of current
and buffered samples, select a few training examples into the buffer, and
score the model on every task seen so far.

The loop is model-agnostic: anything exposing activate/fit/loss/predict (and
optionally ``embed``) works, which is how the propagated-feature linear model
and the pixel MLP share one engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datasets import ImageTask, TaskSequence, TaskSpec
from .graph import Graph, induced_subgraph, normalize_adjacency, propagate
from .linear import LinearModel, LossGroup, Sample
from .metrics import AccuracyMatrix, accuracy
from .mlp import MlpModel
from .optim import TrainConfig
from .selection import (Candidate, CgSettings, ExperienceItem, group_by_class,
                        select_cm, select_im, select_mf, select_random)

STRATEGIES = ("none", "random", "mf", "mf-embed", "cm", "cm-embed", "im")
EVAL_MODES = ("task-aware", "class-incremental")
PROBE_MODES = ("holdout", "test")


@dataclass(frozen=True)
class ReplayConfig:
    """Knobs for one continual run (strategy is passed separately)."""

    e: int = 1
    k: int = 2
    epochs: int = 100
    lr: float = 0.2
    weight_decay: float = 5e-6
    batch_size: Optional[int] = None
    eval_mode: str = "task-aware"
    probe: str = "holdout"
    probe_fraction: float = 0.25
    cm_d: float | str = "auto"
    cg: CgSettings = field(default_factory=CgSettings)
    signed_im: bool = False
    propagation: str = "task"
    loss_reduction: str = "sum"
    seed: int = 0

    def __post_init__(self):
        if self.e < 1:
            raise ValueError(f"e must be >= 1, got {self.e}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"eval_mode must be one of {EVAL_MODES}, got {self.eval_mode!r}")
        if self.probe not in PROBE_MODES:
            raise ValueError(f"probe must be one of {PROBE_MODES}, got {self.probe!r}")
        if not 0.0 < self.probe_fraction < 1.0:
            raise ValueError("probe_fraction must be in (0, 1)")
        if self.propagation not in ("task", "full"):
            raise ValueError(f"propagation must be 'task' or 'full', got {self.propagation!r}")
        if self.loss_reduction not in ("sum", "mean"):
            raise ValueError(f"loss_reduction must be 'sum' or 'mean', "
                             f"got {self.loss_reduction!r}")


def weight_factor(train_count: int, buffer_count: int) -> float:
    """buffer_count / (train_count + buffer_count)."""
    if train_count < 1:
        raise ValueError("train_count must be >= 1")
    if buffer_count < 0:
        raise ValueError("buffer_count must be >= 0")
    return buffer_count / (train_count + buffer_count)


def loss_groups(train_samples, buffer_samples, train_mask, buffer_mask,
                reduction: str = "sum", beta: float | None = None) -> list[LossGroup]:
    """Loss terms realizing the weighted combination of current and buffered
    samples.

    With sum-reduced losses the balance is exact: the total weight placed on
    the current task, beta * len(train), equals the total weight on the
    buffer, (1 - beta) * len(buffer). An empty buffer contributes nothing and
    the current task keeps coefficient 1, otherwise the first task could
    never be learned (beta would zero it out).
    """
    if len(train_samples) == 0:
        raise ValueError("train_samples is empty")
    if len(buffer_samples) == 0:
        return [LossGroup(tuple(train_samples), train_mask, 1.0)]
    b = weight_factor(len(train_samples), len(buffer_samples)) if beta is None else beta
    train_coeff, buffer_coeff = b, 1.0 - b
    if reduction == "mean":
        train_coeff /= len(train_samples)
        buffer_coeff /= len(buffer_samples)
    return [LossGroup(tuple(train_samples), train_mask, train_coeff),
            LossGroup(tuple(buffer_samples), buffer_mask, buffer_coeff)]


def combined_loss(model, train_samples, buffer_samples, train_mask=None,
                  buffer_mask=None, beta: float | None = None,
                  reduction: str = "sum") -> float:
    """beta * loss(train) + (1 - beta) * loss(buffer); loss(train) alone when
    the buffer is empty. ``beta=None`` computes the weight factor from the
    sample counts; passing a value overrides it (useful for the endpoint
    identities beta=0 and beta=1)."""
    groups = loss_groups(train_samples, buffer_samples, train_mask, buffer_mask,
                         reduction, beta)
    return sum(g.coeff * model.loss(g.samples, g.mask) for g in groups)


class ExperienceBuffer:
    """Add-only store of selected examples, at most ``capacity`` per
    (origin task, class) pair.

    Keying by the pair rather than by class alone keeps capacities correct
    when tasks share a label space (permuted images); for class-disjoint
    graph sequences the two keyings coincide.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: dict[tuple[int, int], list[ExperienceItem]] = {}

    def add(self, items) -> None:
        staged: dict[tuple[int, int], list[ExperienceItem]] = {}
        for item in items:
            staged.setdefault((item.origin_task, item.label), []).append(item)
        for key, new in staged.items():
            have = len(self._items.get(key, []))
            if have + len(new) > self.capacity:
                raise ValueError(f"buffer capacity {self.capacity} exceeded for "
                                 f"(task, class) {key}: {have} stored + {len(new)} new")
        for key, new in staged.items():
            self._items.setdefault(key, []).extend(new)

    def items(self) -> list[ExperienceItem]:
        return [item for key in sorted(self._items) for item in self._items[key]]

    def samples(self) -> list[Sample]:
        return [Sample(item.input, item.label) for item in self.items()]

    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({label for _, label in self._items}))

    def counts(self) -> dict[tuple[int, int], int]:
        return {key: len(v) for key, v in sorted(self._items.items())}

    def __len__(self) -> int:
        return sum(len(v) for v in self._items.values())


@dataclass(frozen=True)
class TaskData:
    """One task's model-ready arrays: training samples, selection candidates,
    and the held-back evaluation split."""

    task_id: int
    classes: tuple[int, ...]
    train_samples: tuple[Sample, ...]
    candidates: tuple[Candidate, ...]
    test_inputs: np.ndarray
    test_labels: np.ndarray


def prepare_task_data(graph: Graph, task: TaskSpec, k: int = 2,
                      propagation: str = "task",
                      full_propagated: np.ndarray | None = None) -> TaskData:
    """Propagate features for one task and package its splits.

    ``propagation="task"`` propagates over the subgraph induced by the task's
    own nodes (nodes from other tasks are invisible while it is current);
    ``"full"`` slices rows from a whole-graph propagation, which the caller
    supplies so it is computed once per run.
    """
    nodes = np.concatenate([task.train_nodes, task.test_nodes])
    if propagation == "task":
        sub, mapping = induced_subgraph(graph, nodes)
        values = propagate(normalize_adjacency(sub), sub.features, k).values
        row_of = {node: mapping[node] for node in nodes.tolist()}
    else:
        if full_propagated is None:
            full_propagated = propagate(normalize_adjacency(graph), graph.features, k).values
        values = full_propagated
        row_of = {node: node for node in nodes.tolist()}

    def rows(node_list):
        return values[[row_of[n] for n in node_list.tolist()]]

    train_inputs = rows(task.train_nodes)
    train_labels = graph.labels[task.train_nodes]
    candidates = tuple(
        Candidate(node=int(n), label=int(y), inputs=x, attributes=graph.features[n],
                  task=task.task_id)
        for n, y, x in zip(task.train_nodes.tolist(), train_labels.tolist(), train_inputs))
    samples = tuple(Sample(x, int(y)) for x, y in zip(train_inputs, train_labels.tolist()))
    return TaskData(task.task_id, tuple(task.classes), samples, candidates,
                    rows(task.test_nodes), graph.labels[task.test_nodes])


def prepare_sequence(seq: TaskSequence, config: ReplayConfig) -> list[TaskData]:
    full = None
    if config.propagation == "full":
        full = propagate(normalize_adjacency(seq.graph), seq.graph.features, config.k).values
    return [prepare_task_data(seq.graph, task, config.k, config.propagation, full)
            for task in seq.tasks]


def prepare_image_task(task: ImageTask) -> TaskData:
    """Package a permuted-image task; pixels serve as both input and attribute."""
    classes = tuple(sorted(set(task.train_labels.tolist()) | set(task.test_labels.tolist())))
    candidates = tuple(
        Candidate(node=i, label=int(y), inputs=x, task=task.task_id)
        for i, (x, y) in enumerate(zip(task.train_images, task.train_labels.tolist())))
    samples = tuple(Sample(x, int(y))
                    for x, y in zip(task.train_images, task.train_labels.tolist()))
    return TaskData(task.task_id, classes, samples, candidates,
                    task.test_images, task.test_labels)


@dataclass
class RunState:
    """Everything a run accumulates: model, buffer, scores, snapshots, events."""

    model: object
    buffer: ExperienceBuffer
    config: ReplayConfig
    strategy: str
    rows: list[list[float]] = field(default_factory=list)
    history: list[TaskData] = field(default_factory=list)
    snapshots: list[dict[str, np.ndarray]] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)

    def matrix(self) -> AccuracyMatrix:
        return AccuracyMatrix.from_rows(self.rows)

    def seen_classes(self) -> tuple[int, ...]:
        seen: set[int] = set()
        for data in self.history:
            seen.update(data.classes)
        return tuple(sorted(seen))


def _derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def _train_config(config: ReplayConfig, task_id: int) -> TrainConfig:
    """Per-task trainer settings; the shuffle seed varies by task so mini-batch
    orders differ across tasks but stay reproducible."""
    return TrainConfig(epochs=config.epochs, lr=config.lr,
                       batch_size=config.batch_size,
                       seed=_derived_seed(config.seed, task_id, 3))


def _carve_probes(candidates, fraction: float, rng) -> tuple[list[Candidate], list[Sample]]:
    """Hold out roughly ``fraction`` of each class as influence probes.

    Classes too small to split contribute no probes; if every class is like
    that, nothing is carved and the candidates double as their own probes.
    """
    grouped = group_by_class(candidates)
    keep: list[Candidate] = []
    probes: list[Sample] = []
    for label in sorted(grouped):
        group = grouped[label]
        n_probe = min(len(group) - 1, max(1, round(fraction * len(group))))
        if n_probe < 1:
            keep.extend(group)
            continue
        probe_idx = set(rng.choice(len(group), size=n_probe, replace=False).tolist())
        for i, c in enumerate(group):
            if i in probe_idx:
                probes.append(Sample(np.asarray(c.inputs, dtype=np.float64), c.label))
            else:
                keep.append(c)
    if not probes:
        probes = [Sample(np.asarray(c.inputs, dtype=np.float64), c.label)
                  for c in candidates]
        keep = list(candidates)
    return keep, probes


def _with_embeddings(model, candidates) -> list[Candidate]:
    if not hasattr(model, "embed") or not candidates:
        return list(candidates)
    inputs = np.vstack([np.asarray(c.inputs, dtype=np.float64) for c in candidates])
    emb = model.embed(inputs)
    return [Candidate(c.node, c.label, c.inputs, c.attributes, emb[i], c.task)
            for i, c in enumerate(candidates)]


def _select(model, strategy, candidates, e, probe_samples, population, config,
            task_id) -> list[ExperienceItem]:
    if strategy == "none":
        return []
    if strategy in ("mf-embed", "cm-embed"):
        candidates = _with_embeddings(model, candidates)
    grouped = group_by_class(candidates)
    if strategy == "random":
        return select_random(grouped, e, _derived_seed(config.seed, task_id, 1))
    if strategy == "mf":
        return select_mf(grouped, e, "attribute")
    if strategy == "mf-embed":
        return select_mf(grouped, e, "embedding")
    if strategy == "cm":
        return select_cm(grouped, e, config.cm_d, "attribute")
    if strategy == "cm-embed":
        return select_cm(grouped, e, config.cm_d, "embedding")
    if strategy == "im":
        return select_im(model, grouped, e, probe_samples, settings=config.cg,
                         signed=config.signed_im, population=population)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def learn_task(state: RunState, data: TaskData, strategy: str,
               config: ReplayConfig) -> RunState:
    """One pass of the per-task loop; mutates and returns ``state``.

    Steps: activate the task's classes, train on the weighted current-plus-
    buffer objective, select experiences from the trained samples, grow the
    buffer, then score every task seen so far and snapshot the parameters.
    """
    state.model = state.model.activate(data.classes)
    buffer_samples = state.buffer.samples()
    buffer_classes = state.buffer.classes()
    buffer_before = len(state.buffer)

    candidates = list(data.candidates)
    probe_samples: list[Sample] = []
    if strategy == "im":
        if config.probe == "holdout":
            rng = np.random.default_rng(_derived_seed(config.seed, data.task_id, 2))
            candidates, probe_samples = _carve_probes(candidates, config.probe_fraction, rng)
        else:
            probe_samples = [Sample(x, int(y)) for x, y in
                             zip(data.test_inputs, data.test_labels.tolist())]
    train_samples = [Sample(np.asarray(c.inputs, dtype=np.float64), c.label)
                     for c in candidates]

    beta = weight_factor(len(train_samples), len(buffer_samples))
    groups = loss_groups(train_samples, buffer_samples, data.classes, buffer_classes,
                         config.loss_reduction)
    state.model = state.model.fit(groups, _train_config(config, data.task_id))

    population = train_samples + buffer_samples
    selected = _select(state.model, strategy, candidates, config.e, probe_samples,
                       population, config, data.task_id)
    if selected:
        state.buffer.add(selected)

    state.history.append(data)
    seen = state.seen_classes()
    row = []
    for past in state.history:
        mask = past.classes if config.eval_mode == "task-aware" else seen
        preds = state.model.predict(past.test_inputs, mask)
        row.append(accuracy(preds, past.test_labels))
    state.rows.append(row)
    state.snapshots.append({name: arr.copy()
                            for name, arr in state.model.to_arrays().items()})

    loss_train = float(state.model.loss(train_samples, data.classes))
    loss_buffer = (float(state.model.loss(buffer_samples, buffer_classes))
                   if buffer_samples else None)
    state.events.append({
        "task": data.task_id,
        "strategy": strategy,
        "beta": beta,
        "train_count": len(train_samples),
        "probe_count": len(probe_samples),
        "buffer_before": buffer_before,
        "buffer_after": len(state.buffer),
        "loss_train": loss_train,
        "loss_buffer": loss_buffer,
        "loss_combined": (beta * loss_train + (1.0 - beta) * loss_buffer
                          if loss_buffer is not None else loss_train),
        "selected_nodes": [item.source_node for item in selected],
        "seen_classes": list(seen),
        "accuracies": list(row),
    })
    return state


def run_sequence(seq: TaskSequence, strategy: str, config: ReplayConfig) -> RunState:
    """Run the full loop over a graph task sequence with the linear model."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    datas = prepare_sequence(seq, config)
    model = LinearModel.zeros(seq.graph.class_count, seq.graph.feature_dim,
                              weight_decay=config.weight_decay)
    state = RunState(model=model, buffer=ExperienceBuffer(config.e),
                     config=config, strategy=strategy)
    for data in datas:
        learn_task(state, data, strategy, config)
    return state


def run_image_tasks(tasks, strategy: str, config: ReplayConfig,
                    hidden_dim: int = 256, class_count: int = 10) -> RunState:
    """Run the loop over permuted-image tasks with the MLP.

    All tasks share the label space, so every class is active from the start
    and the buffer's per-(task, class) keying is what keeps capacities right.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if not tasks:
        raise ValueError("no image tasks given")
    input_dim = tasks[0].train_images.shape[1]
    model = MlpModel.init(input_dim=input_dim, hidden_dim=hidden_dim,
                          class_count=class_count, weight_decay=config.weight_decay,
                          seed=config.seed).activate(range(class_count))
    state = RunState(model=model, buffer=ExperienceBuffer(config.e),
                     config=config, strategy=strategy)
    for task in tasks:
        learn_task(state, prepare_image_task(task), strategy, config)
    return state
