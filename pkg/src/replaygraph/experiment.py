"""Multi-seed experiment orchestration: config validation, per-seed runs,
artifact files, and aggregate reports.

Artifacts per output directory: ``matrix_seed<k>.csv`` and
``runlog_seed<k>.jsonl`` for each seed, plus ``report.json`` with the resolved
config and mean/std metrics. Reports contain no timestamps or host details,
so identical configs produce byte-identical outputs.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datasets
from .metrics import AccuracyMatrix, forgetting_mean, performance_mean
from .replay import (EVAL_MODES, PROBE_MODES, STRATEGIES, ReplayConfig,
                     run_image_tasks, run_sequence)
from .selection import LINEAR_CG, MLP_CG, CgSettings

SCHEMA_VERSION = 1
DATA_DIR_ENV = "REPLAYGRAPH_DATA_DIR"
DATASETS = ("cora", "citeseer", "citation", "permuted-mnist", "synthetic-sbm",
            "synthetic-images")
MODELS = ("sgc", "mlp")
FM_DENOMINATORS = ("m-1", "m")


class ExperimentError(RuntimeError):
    """Configuration or orchestration failure; message is user-facing."""


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic-sbm"
    content: str | None = None
    cites: str | None = None
    mnist_dir: str | None = None
    data_dir: str | None = None
    model: str = "sgc"
    strategy: str = "im"
    e: int = 1
    k: int = 2
    epochs: int = 100
    lr: float = 0.2
    decay: float = 5e-6
    tasks: int = 3
    classes_per_task: int = 2
    train_per_class: int = 20
    eval_mode: str = "task-aware"
    fm_denominator: str = "m-1"
    probe: str = "holdout"
    probe_fraction: float = 0.25
    seeds: list[int] = field(default_factory=lambda: [0])
    jobs: int = 1
    out: str = "out"
    # model/strategy details
    batch_size: int = 64
    hidden_dim: int = 256
    cm_d: float | str = "auto"
    signed_im: bool = False
    propagation: str = "task"
    loss_reduction: str = "sum"
    cg_max_iters: int | None = None
    cg_tol: float | None = None
    cg_damping: float | None = None
    # image-task construction
    mnist_train_per_task: int = 1000
    mnist_test_per_task: int = 500
    # synthetic fixtures
    sbm_test_per_class: int = 40
    sbm_intra_p: float = 0.2
    sbm_inter_p: float = 0.02
    sbm_noise: float = 0.6
    syn_images_per_class: int = 200
    syn_noise: float = 0.25

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ExperimentError("unknown config key(s): " + ", ".join(unknown))
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- path resolution --

    def resolved_data_dir(self) -> Path:
        if self.data_dir is not None:
            return Path(self.data_dir)
        return Path(os.environ.get(DATA_DIR_ENV, "."))

    def _resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.resolved_data_dir() / p

    def citation_paths(self) -> tuple[Path | None, Path | None]:
        """Explicit paths win; for the named datasets the conventional
        layouts <root>/<name>/<name>.content and <root>/<name>.content are
        both tried."""
        content, cites = self._resolve(self.content), self._resolve(self.cites)
        if self.dataset in ("cora", "citeseer"):
            root = self.resolved_data_dir()
            if content is None:
                for candidate in (root / self.dataset / f"{self.dataset}.content",
                                  root / f"{self.dataset}.content"):
                    if candidate.exists():
                        content = candidate
                        break
            if cites is None:
                for candidate in (root / self.dataset / f"{self.dataset}.cites",
                                  root / f"{self.dataset}.cites"):
                    if candidate.exists():
                        cites = candidate
                        break
        return content, cites

    def mnist_path(self) -> Path | None:
        if self.mnist_dir is not None:
            return self._resolve(self.mnist_dir)
        candidate = self.resolved_data_dir() / "mnist"
        return candidate if candidate.exists() else None

    # -- validation --

    def validate(self, check_paths: bool = True) -> list[str]:
        """All violations, each prefixed with the offending key."""
        errors = []
        if self.dataset not in DATASETS:
            errors.append(f"dataset: must be one of {', '.join(DATASETS)}; "
                          f"got {self.dataset!r}")
        if self.model not in MODELS:
            errors.append(f"model: must be one of {', '.join(MODELS)}; got {self.model!r}")
        if self.strategy not in STRATEGIES:
            errors.append(f"strategy: must be one of {', '.join(STRATEGIES)}; "
                          f"got {self.strategy!r}")
        if self.e < 1:
            errors.append("e: must be >= 1")
        if self.k < 0:
            errors.append("k: must be >= 0")
        if self.epochs < 0:
            errors.append("epochs: must be >= 0")
        if self.lr <= 0:
            errors.append("lr: must be > 0")
        if self.decay < 0:
            errors.append("decay: must be >= 0")
        if self.tasks < 1:
            errors.append("tasks: must be >= 1")
        if self.classes_per_task < 1:
            errors.append("classes_per_task: must be >= 1")
        if self.train_per_class < 1:
            errors.append("train_per_class: must be >= 1")
        if self.eval_mode not in EVAL_MODES:
            errors.append(f"eval_mode: must be one of {', '.join(EVAL_MODES)}")
        if self.fm_denominator not in FM_DENOMINATORS:
            errors.append(f"fm_denominator: must be one of {', '.join(FM_DENOMINATORS)}")
        if self.probe not in PROBE_MODES:
            errors.append(f"probe: must be one of {', '.join(PROBE_MODES)}")
        if not 0.0 < self.probe_fraction < 1.0:
            errors.append("probe_fraction: must be in (0, 1)")
        if not self.seeds:
            errors.append("seeds: must list at least one seed")
        elif len(set(self.seeds)) != len(self.seeds):
            errors.append("seeds: duplicate values")
        if self.jobs < 1:
            errors.append("jobs: must be >= 1")
        if self.batch_size < 1:
            errors.append("batch_size: must be >= 1")
        if self.hidden_dim < 1:
            errors.append("hidden_dim: must be >= 1")
        if self.cm_d != "auto":
            try:
                if float(self.cm_d) <= 0:
                    errors.append("cm_d: must be positive or 'auto'")
            except (TypeError, ValueError):
                errors.append("cm_d: must be a number or 'auto'")
        if self.mnist_train_per_task < 1:
            errors.append("mnist_train_per_task: must be >= 1")
        if self.mnist_test_per_task < 1:
            errors.append("mnist_test_per_task: must be >= 1")
        if self.cg_tol is not None and self.cg_tol <= 0:
            errors.append("cg_tol: must be > 0")
        if self.cg_damping is not None and self.cg_damping < 0:
            errors.append("cg_damping: must be >= 0")
        if self.cg_max_iters is not None and self.cg_max_iters < 1:
            errors.append("cg_max_iters: must be >= 1")

        if self.dataset in ("permuted-mnist", "synthetic-images") and self.model != "mlp":
            errors.append(f"model: dataset {self.dataset!r} requires model 'mlp'")
        if self.dataset in ("cora", "citeseer", "citation", "synthetic-sbm") \
                and self.model != "sgc":
            errors.append(f"model: dataset {self.dataset!r} requires model 'sgc'")

        if check_paths:
            if self.dataset in ("cora", "citeseer", "citation"):
                content, cites = self.citation_paths()
                if content is None or (self.content is None
                                       and self.dataset == "citation"):
                    errors.append("content: required for citation datasets "
                                  f"(set the flag or {DATA_DIR_ENV})")
                elif not content.exists():
                    errors.append(f"content: {content} does not exist")
                if cites is None or (self.cites is None and self.dataset == "citation"):
                    errors.append("cites: required for citation datasets "
                                  f"(set the flag or {DATA_DIR_ENV})")
                elif not cites.exists():
                    errors.append(f"cites: {cites} does not exist")
            if self.dataset == "permuted-mnist":
                root = self.mnist_path()
                if root is None:
                    errors.append(f"mnist_dir: required for permuted-mnist "
                                  f"(set the flag or {DATA_DIR_ENV})")
                elif not root.exists():
                    errors.append(f"mnist_dir: {root} does not exist")
        return errors

    def cg_settings(self) -> CgSettings:
        base = MLP_CG if self.model == "mlp" else LINEAR_CG
        return CgSettings(
            max_iters=self.cg_max_iters if self.cg_max_iters is not None else base.max_iters,
            residual_tol=self.cg_tol if self.cg_tol is not None else base.residual_tol,
            damping=self.cg_damping if self.cg_damping is not None else base.damping)

    def replay_config(self, seed: int) -> ReplayConfig:
        return ReplayConfig(
            e=self.e, k=self.k, epochs=self.epochs, lr=self.lr,
            weight_decay=self.decay,
            batch_size=self.batch_size if self.model == "mlp" else None,
            eval_mode=self.eval_mode, probe=self.probe,
            probe_fraction=self.probe_fraction, cm_d=self.cm_d,
            cg=self.cg_settings(), signed_im=self.signed_im,
            propagation=self.propagation, loss_reduction=self.loss_reduction,
            seed=seed)


def _load_graph(config: ExperimentConfig, seed: int):
    if config.dataset in ("cora", "citeseer", "citation"):
        content, cites = config.citation_paths()
        return datasets.load_citation_dataset(content, cites)
    if config.dataset == "synthetic-sbm":
        classes = config.tasks * config.classes_per_task
        per_class = config.train_per_class + config.sbm_test_per_class
        return datasets.synthetic_sbm_graph([per_class] * classes, config.sbm_intra_p,
                                            config.sbm_inter_p, config.sbm_noise,
                                            seed=seed)
    raise ExperimentError(f"dataset {config.dataset!r} is not graph-valued")


def run_single_seed(config: ExperimentConfig, seed: int) -> dict:
    """One deterministic run; returns matrix rows, metrics, and log events."""
    rc = config.replay_config(seed)
    if config.dataset == "permuted-mnist":
        images, labels = datasets.load_mnist(config.mnist_path(), split="train")
        image_tasks = datasets.make_permuted_tasks(
            images, labels, config.tasks, config.mnist_train_per_task,
            config.mnist_test_per_task, seed=seed)
        state = run_image_tasks(image_tasks, config.strategy, rc,
                                hidden_dim=config.hidden_dim)
    elif config.dataset == "synthetic-images":
        images, labels = datasets.synthetic_image_dataset(
            10, config.syn_images_per_class, config.syn_noise, seed=seed)
        image_tasks = datasets.make_permuted_tasks(
            images, labels, config.tasks,
            min(config.mnist_train_per_task, len(images) - config.mnist_test_per_task),
            config.mnist_test_per_task, seed=seed)
        state = run_image_tasks(image_tasks, config.strategy, rc,
                                hidden_dim=config.hidden_dim)
    else:
        graph = _load_graph(config, seed)
        seq = datasets.build_task_sequence(graph, config.classes_per_task,
                                           config.tasks, config.train_per_class,
                                           seed=seed)
        state = run_sequence(seq, config.strategy, rc)

    matrix = state.matrix()
    pm = performance_mean(matrix)
    if matrix.num_tasks >= 2:
        fm, per_task = forgetting_mean(matrix, config.fm_denominator)
        per_task = per_task.tolist()
    else:
        fm, per_task = None, []
    return {"seed": seed, "rows": state.rows, "pm": pm, "fm": fm,
            "per_task_forgetting": per_task, "events": state.events}


def _seed_worker(config_dict: dict, seed: int) -> dict:
    return run_single_seed(ExperimentConfig.from_dict(config_dict), seed)


def _aggregate(values) -> tuple[float, float]:
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def _write_artifacts(out: Path, result: dict) -> None:
    seed = result["seed"]
    AccuracyMatrix.from_rows(result["rows"]).to_csv(out / f"matrix_seed{seed}.csv")
    with (out / f"runlog_seed{seed}.jsonl").open("w") as fh:
        for event in result["events"]:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, write_report: bool = True) -> dict:
    """Run every seed, write per-seed artifacts plus ``report.json``, and
    return the aggregate report."""
    errors = config.validate()
    if errors:
        raise ExperimentError("invalid config:\n  " + "\n  ".join(errors))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    seeds = list(config.seeds)
    if config.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_seed_worker, [config.to_dict()] * len(seeds), seeds))
    else:
        results = [run_single_seed(config, seed) for seed in seeds]

    for result in results:
        _write_artifacts(out, result)

    pm_mean, pm_std = _aggregate([r["pm"] for r in results])
    fm_mean, fm_std = _aggregate([r["fm"] for r in results])
    report = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "pm_mean": pm_mean, "pm_std": pm_std,
        "fm_mean": fm_mean, "fm_std": fm_std,
        "per_seed": [{"seed": r["seed"], "pm": r["pm"], "fm": r["fm"],
                      "per_task_forgetting": r["per_task_forgetting"]}
                     for r in results],
    }
    if write_report:
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def sweep_e(config: ExperimentConfig, e_values) -> list[dict]:
    """One aggregate per e value; e<val>/ subdirectories hold the per-run
    artifacts and ``sweep_e.csv`` collects (e, pm, fm) rows for plotting."""
    values = list(e_values)
    if not values:
        raise ExperimentError("e_values is empty")
    if len(set(values)) != len(values):
        raise ExperimentError(f"duplicate e values: {values}")
    if any(v < 1 for v in values):
        raise ExperimentError("e values must be >= 1")

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for e in values:
        sub = dataclasses.replace(config, e=e, out=str(out / f"e{e}"))
        reports.append(run_experiment(sub))
    lines = ["e,pm,fm"]
    lines.extend(f"{e},{r['pm_mean']:.10g},{r['fm_mean']:.10g}"
                 for e, r in zip(values, reports))
    (out / "sweep_e.csv").write_text("\n".join(lines) + "\n")
    return reports


def validate_config_file(path) -> list[str]:
    """Full validation without compute; one message per violation."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        return [f"cannot read {path}: {exc}"]
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        return [f"{path}: not valid JSON: {exc}"]
    if not isinstance(data, dict):
        return [f"{path}: top level must be a JSON object"]
    try:
        config = ExperimentConfig.from_dict(data)
    except ExperimentError as exc:
        return [str(exc)]
    except (TypeError, ValueError) as exc:
        return [f"{path}: {exc}"]
    return config.validate()
