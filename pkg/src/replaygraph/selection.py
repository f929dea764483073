"""Experience selection: random, mean-of-feature, coverage maximization, and
influence maximization, plus the conjugate-gradient solver and the
leave-one-out retraining oracle that keeps the influence approximation honest.

All strategies return exactly ``min(e, class size)`` items per class, iterate
classes in ascending id order, and break score ties by lowest node index, so a
fixed input yields a fixed selection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.optimize
from scipy.spatial.distance import cdist

from .linear import LinearModel, Sample


@dataclass(frozen=True)
class Candidate:
    """A selectable training node.

    ``inputs`` is the representation the model consumes (and the one stored in
    the buffer on selection). ``attributes`` is the raw attribute vector for
    attribute-space geometry; it defaults to ``inputs``. ``embedding`` holds a
    model-derived vector when the caller has one (MLP hidden activations); for
    the linear model the propagated input already is the embedding.
    """

    node: int
    label: int
    inputs: np.ndarray
    attributes: np.ndarray | None = None
    embedding: np.ndarray | None = None
    task: int = 0


@dataclass(frozen=True)
class ExperienceItem:
    """A frozen training example kept for replay."""

    input: np.ndarray
    label: int
    origin_task: int
    source_node: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.input)):
            raise ValueError(f"node {self.source_node}: non-finite input representation")


def group_by_class(candidates) -> dict[int, list[Candidate]]:
    """Candidates keyed by label, each class sorted by node index."""
    grouped: dict[int, list[Candidate]] = {}
    for c in candidates:
        grouped.setdefault(c.label, []).append(c)
    return {label: sorted(group, key=lambda c: c.node)
            for label, group in sorted(grouped.items())}


def _check_classes(samples_by_class, e: int) -> None:
    if e < 1:
        raise ValueError(f"e must be >= 1, got {e}")
    if not samples_by_class:
        raise ValueError("no candidate classes")
    for label, group in samples_by_class.items():
        if len(group) == 0:
            raise ValueError(f"class {label} has no candidates")


def _item(c: Candidate) -> ExperienceItem:
    return ExperienceItem(np.asarray(c.inputs, dtype=np.float64), c.label, c.task, c.node)


def _geometry_vector(c: Candidate, representation: str) -> np.ndarray:
    if representation == "attribute":
        base = c.attributes if c.attributes is not None else c.inputs
    elif representation == "embedding":
        base = c.embedding if c.embedding is not None else c.inputs
    else:
        raise ValueError(f"representation must be 'attribute' or 'embedding', "
                         f"got {representation!r}")
    return np.asarray(base, dtype=np.float64)


def _take_lowest(group, keys, e: int) -> list[Candidate]:
    """The e candidates with the smallest keys, ties by node index."""
    order = sorted(range(len(group)), key=lambda i: (keys[i], group[i].node))
    return [group[i] for i in order[:min(e, len(group))]]


def select_random(samples_by_class, e: int, seed: int) -> list[ExperienceItem]:
    """Uniform per-class sample without replacement."""
    _check_classes(samples_by_class, e)
    rng = np.random.default_rng(seed)
    chosen = []
    for label in sorted(samples_by_class):
        group = sorted(samples_by_class[label], key=lambda c: c.node)
        idx = rng.choice(len(group), size=min(e, len(group)), replace=False)
        chosen.extend(_item(group[i]) for i in sorted(idx))
    return chosen


def select_mf(samples_by_class, e: int,
              representation: str = "attribute") -> list[ExperienceItem]:
    """Per class, the e candidates closest to the class mean vector."""
    _check_classes(samples_by_class, e)
    chosen = []
    for label in sorted(samples_by_class):
        group = sorted(samples_by_class[label], key=lambda c: c.node)
        vectors = np.vstack([_geometry_vector(c, representation) for c in group])
        prototype = vectors.mean(axis=0)
        dists = np.linalg.norm(vectors - prototype, axis=1)
        chosen.extend(_item(c) for c in _take_lowest(group, dists, e))
    return chosen


def coverage_counts(samples_by_class, d: float | str = "auto",
                    representation: str = "attribute") -> tuple[dict[int, np.ndarray], float]:
    """|N(v)| per candidate: other-class candidates strictly within distance d.

    ``d="auto"`` uses the median cross-class pairwise distance; with a single
    class every count is zero and d is irrelevant.
    """
    labels = sorted(samples_by_class)
    groups = {label: sorted(samples_by_class[label], key=lambda c: c.node)
              for label in labels}
    vecs = {label: np.vstack([_geometry_vector(c, representation) for c in groups[label]])
            for label in labels}

    cross = [cdist(vecs[a], vecs[b]) for i, a in enumerate(labels)
             for b in labels[i + 1:]]
    if d == "auto":
        d_val = float(np.median(np.concatenate([m.ravel() for m in cross]))) if cross else 0.0
    else:
        d_val = float(d)
        if d_val <= 0:
            raise ValueError(f"d must be positive, got {d_val}")

    counts = {label: np.zeros(len(groups[label]), dtype=np.int64) for label in labels}
    k = 0
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            both = cross[k] < d_val
            counts[a] += both.sum(axis=1)
            counts[b] += both.sum(axis=0)
            k += 1
    return counts, d_val


def select_cm(samples_by_class, e: int, d: float | str = "auto",
              representation: str = "attribute") -> list[ExperienceItem]:
    """Per class, the e candidates with the fewest other-class neighbors
    within distance d (they sit in sparsely contested regions)."""
    _check_classes(samples_by_class, e)
    counts, _ = coverage_counts(samples_by_class, d, representation)
    chosen = []
    for label in sorted(samples_by_class):
        group = sorted(samples_by_class[label], key=lambda c: c.node)
        chosen.extend(_item(c) for c in _take_lowest(group, counts[label], e))
    return chosen


# -- influence machinery --


@dataclass(frozen=True)
class CgSettings:
    """``max_iters=None`` means min(dimension, 200)."""

    max_iters: int | None = None
    residual_tol: float = 1e-6
    damping: float = 0.01

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be > 0")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


LINEAR_CG = CgSettings(residual_tol=1e-6)
# The MLP operator is a finite difference of the gradient; residuals below its
# noise floor are unreachable, so the tolerance is loosened.
MLP_CG = CgSettings(residual_tol=1e-3)


@dataclass(frozen=True)
class CgResult:
    solution: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def cg_solve(hvp_fn, rhs: np.ndarray, settings: CgSettings = CgSettings()) -> CgResult:
    """Conjugate gradients on the symmetric positive-definite operator hvp_fn.

    Only operator applications are used; the matrix is never formed. Stops at
    ``||residual|| <= residual_tol * ||rhs||`` or the iteration cap, whichever
    comes first (the cap is reported, not an error).
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    limit = settings.max_iters if settings.max_iters is not None else min(rhs.size, 200)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return CgResult(np.zeros_like(rhs), 0.0, 0, True)

    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = float(r @ r)
    for iteration in range(1, limit + 1):
        ap = hvp_fn(p)
        if not np.all(np.isfinite(ap)):
            raise RuntimeError(f"CG operator returned non-finite values at iteration "
                               f"{iteration}")
        alpha = rr / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise RuntimeError(f"CG residual became non-finite at iteration {iteration}")
        if np.sqrt(rr_new) <= settings.residual_tol * rhs_norm:
            return CgResult(x, float(np.sqrt(rr_new)), iteration, True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CgResult(x, float(np.sqrt(rr)), limit, False)


def influence_scores(model, train_samples, probe_samples,
                     settings: CgSettings = CgSettings(), mask=None,
                     population=None) -> np.ndarray:
    """Signed influence of upweighting each training sample on the probe loss.

    One CG solve of ``(H + damping I) w = grad(probe CE)`` against the mean
    Hessian over ``population`` (the training samples themselves by default,
    or train-plus-buffer inside a replay run); then ``score_i = -<w, grad
    CE_i>``. More positive means upweighting the sample would increase the
    probe loss; the predicted probe-loss change from REMOVING it is
    ``-score / len(population)``.

    The probe functional is the bare cross-entropy: the decay term belongs to
    the training objective (it stays in the Hessian), not to the quantity
    being measured on the probes.
    """
    if len(probe_samples) == 0:
        raise ValueError("probe set is empty")
    pop = population if population is not None else train_samples
    g_probe = replace(model, weight_decay=0.0).gradient(probe_samples, mask)
    if float(np.linalg.norm(g_probe)) == 0.0:
        return np.zeros(len(train_samples))
    result = cg_solve(lambda v: model.hvp(pop, mask, v, damping=settings.damping),
                      g_probe, settings)
    return -model.gradient_dots(train_samples, mask, result.solution)


def predicted_loss_change(scores: np.ndarray, population_size: int) -> np.ndarray:
    """Probe-loss change predicted for removing each scored sample."""
    if population_size < 1:
        raise ValueError("population_size must be >= 1")
    return -np.asarray(scores, dtype=np.float64) / population_size


def select_im(model, samples_by_class, e: int, probe_samples,
              settings: CgSettings = CgSettings(), signed: bool = False,
              mask=None, population=None, trace_path=None) -> list[ExperienceItem]:
    """Per class, the e candidates with the largest influence on the probes.

    Default ranking is by |score|: influence is signed and a strongly negative
    sample shapes the decision boundary as much as a strongly positive one.
    ``signed=True`` ranks by raw score descending instead.
    """
    _check_classes(samples_by_class, e)
    labels = sorted(samples_by_class)
    groups = {label: sorted(samples_by_class[label], key=lambda c: c.node)
              for label in labels}
    flat = [c for label in labels for c in groups[label]]
    samples = [Sample(np.asarray(c.inputs, dtype=np.float64), c.label) for c in flat]
    scores = influence_scores(model, samples, probe_samples, settings, mask, population)

    chosen = []
    offset = 0
    rows = []
    for label in labels:
        group = groups[label]
        s = scores[offset:offset + len(group)]
        offset += len(group)
        keys = -s if signed else -np.abs(s)
        picked = _take_lowest(group, keys, e)
        picked_nodes = {c.node for c in picked}
        rows.extend((label, c.node, s[i], c.node in picked_nodes)
                    for i, c in enumerate(group))
        chosen.extend(_item(c) for c in picked)

    if trace_path is not None:
        lines = ["class,node,score,selected"]
        lines.extend(f"{label},{node},{score:.10g},{int(sel)}"
                     for label, node, score, sel in rows)
        Path(trace_path).write_text("\n".join(lines) + "\n")
    return chosen


# -- retraining oracle --


def fit_to_stationarity(template: LinearModel, samples, mask=None) -> LinearModel:
    """Minimize the convex objective to optimizer-grade stationarity.

    The oracle compares optima, not training trajectories, so it uses a
    quasi-Newton solve from zero parameters instead of the production Adam
    loop; the gradient fed to it is the same closed form the trainer uses.
    """
    work = template.copy()
    mask_arr = work.resolve_mask(mask)

    def objective(theta):
        work.set_flat(theta)
        return (work.loss(samples, mask_arr), work.gradient(samples, mask_arr))

    res = scipy.optimize.minimize(objective, np.zeros(work.num_params), jac=True,
                                  method="L-BFGS-B",
                                  options={"maxiter": 2000, "ftol": 1e-14, "gtol": 1e-10})
    if not np.all(np.isfinite(res.x)):
        raise RuntimeError(f"stationarity solve diverged: {res.message}")
    fitted = template.copy()
    fitted.set_flat(res.x)
    return fitted


def loo_retrain_oracle(template: LinearModel, train_samples, probe_samples,
                       index: int, mask=None) -> float:
    """Ground-truth probe-loss change from dropping one training sample.

    Retrains from the same (zero) initialization with ``train_samples[index]``
    removed and returns ``probe_CE(without) - probe_CE(with)``, the quantity
    the influence prediction approximates; the probe evaluation excludes the
    decay term, mirroring influence_scores. Intended for small instances; it
    runs one full solve per call.
    """
    if not 0 <= index < len(train_samples):
        raise IndexError(f"index {index} outside [0, {len(train_samples)})")
    full = fit_to_stationarity(template, train_samples, mask)
    reduced = [s for i, s in enumerate(train_samples) if i != index]
    if not reduced:
        raise ValueError("cannot remove the only training sample")
    loo = fit_to_stationarity(template, reduced, mask)
    return (replace(loo, weight_decay=0.0).loss(probe_samples, mask)
            - replace(full, weight_decay=0.0).loss(probe_samples, mask))


def loo_parameter_change(template: LinearModel, train_samples, index: int,
                         mask=None) -> np.ndarray:
    """Actual parameter displacement from dropping one training sample."""
    if not 0 <= index < len(train_samples):
        raise IndexError(f"index {index} outside [0, {len(train_samples)})")
    full = fit_to_stationarity(template, train_samples, mask)
    reduced = [s for i, s in enumerate(train_samples) if i != index]
    if not reduced:
        raise ValueError("cannot remove the only training sample")
    loo = fit_to_stationarity(template, reduced, mask)
    return loo.get_flat() - full.get_flat()
