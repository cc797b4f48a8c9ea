"""Training loop, model selection, leave-one-domain-out and ablation."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import ot
from ..data import DomainDataset, split_train_val
from .config import TrainConfig
from .model import Model
from .optim import make_optimizer
from .steps import STEPS, StepRecord


class TrainError(ValueError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    L_c: float
    L_wb: float
    L_aux: float
    val_acc: float


@dataclass
class RunReport:
    method: str
    config: dict
    epochs: list = field(default_factory=list)
    selected_epoch: int = 0
    test_accuracy: dict = field(default_factory=dict)
    seen: list = field(default_factory=list)
    seed: int = 0
    aux_name: str = "L_r"
    divergence_init: float = float("nan")
    divergence_final: float = float("nan")
    notes: list = field(default_factory=list)

    @property
    def val_acc(self) -> list[float]:
        return [e.val_acc for e in self.epochs]

    @property
    def best_val_acc(self) -> float:
        return self.epochs[self.selected_epoch - 1].val_acc if self.epochs else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["val_acc"] = self.val_acc
        return d


def select_epoch(val_acc: Sequence[float]) -> int:
    """1-based epoch with the highest validation accuracy; earliest on ties."""
    if not val_acc:
        raise TrainError("no epochs to select from")
    return int(np.argmax(np.asarray(val_acc))) + 1


def accuracy(model: Model, dataset: DomainDataset) -> float:
    """Accuracy over all samples of all domains, pooled."""
    hits = sum(int(np.sum(model.predict(d.features) == d.labels)) for d in dataset.domains)
    return hits / sum(d.n for d in dataset.domains)


def encoded_divergence(model: Model, dataset: DomainDataset, eps: float) -> float:
    """Mean pairwise Sinkhorn divergence between encoded domains."""
    feats = [model.features(d.features) for d in dataset.domains]
    if len(feats) < 2:
        return 0.0
    vals = [ot.sinkhorn_divergence(a, b, eps) for a, b in itertools.combinations(feats, 2)]
    return float(np.mean(vals))


def _batches(train: DomainDataset, m: int, rng) -> list[list[np.ndarray]]:
    """Index batches for one epoch: ``m`` per domain, shuffled without replacement."""
    sizes = [d.n for d in train.domains]
    m = min(m, min(sizes))
    steps = min(sizes) // m
    perms = [rng.permutation(n) for n in sizes]
    return [[p[i * m:(i + 1) * m] for p in perms] for i in range(steps)]


def train(config: TrainConfig, dataset: DomainDataset, unseen: str | Sequence[str] | None = None,
          return_model: bool = False):
    """Train on every domain except ``unseen`` and evaluate the selected checkpoint there.

    Returns a :class:`RunReport` (and the selected model when
    ``return_model``).
    """
    unseen = [] if unseen is None else ([unseen] if isinstance(unseen, str) else list(unseen))
    for name in unseen:
        dataset[name]  # KeyError for unknown names
    seen = dataset.subset([n for n in dataset.names if n not in unseen])
    if len(seen) < 1:
        raise TrainError("need at least one seen domain")
    for d in dataset.domains:
        if d.n < 1:
            raise TrainError(f"domain {d.name!r} is empty")
    cfg = config.resolved()
    base = cfg.base_method
    ss_split, ss_init, ss_shuffle, ss_step = np.random.SeedSequence(cfg.seed).spawn(4)

    train_set, val_set = split_train_val(seen, cfg.val_fraction, int(ss_split.generate_state(1)[0]))
    model = Model(
        dataset.feature_dim, cfg.feature_dim, max(dataset.class_count, 2), cfg.hidden,
        decoder=(base == "wbae"), seed=ss_init,
    )
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    step_fn = STEPS[base]
    rng = np.random.default_rng(ss_shuffle)
    step_seeds = np.random.default_rng(ss_step)

    report = RunReport(
        method=config.method, config=config.to_dict(), seen=seen.names, seed=cfg.seed,
        aux_name="L_i" if base == "wbmi" else "L_r",
    )
    report.notes.extend(config.grid_warnings())
    if base == "wbmi" and cfg.encoder_update == "algorithm1":
        report.notes.append("encoder update omits the classification gradient (algorithm1 mode)")
    if cfg.monitor_divergence and len(train_set) > 1:
        report.divergence_init = encoded_divergence(model, train_set, cfg.epsilon)

    best_state, best_acc = None, -math.inf
    for epoch in range(1, cfg.epochs + 1):
        records: list[StepRecord] = []
        for idx in _batches(train_set, cfg.batch_size, rng):
            xb = [d.features[i] for d, i in zip(train_set.domains, idx)]
            yb = [d.labels[i] for d, i in zip(train_set.domains, idx)]
            seed = int(step_seeds.integers(0, 2**63 - 1))
            records.append(step_fn(model, optimizer, xb, yb, cfg, seed))
        acc = accuracy(model, val_set)
        report.epochs.append(EpochRecord(
            epoch,
            _mean(r.L_c for r in records),
            _mean(r.L_wb for r in records),
            _mean(r.L_aux for r in records),
            acc,
        ))
        if acc > best_acc:
            best_acc, best_state = acc, model.state()

    if cfg.monitor_divergence and len(train_set) > 1:
        report.divergence_final = encoded_divergence(model, train_set, cfg.epsilon)
    report.selected_epoch = select_epoch(report.val_acc)
    model.load_state(best_state)
    for name in unseen:
        report.test_accuracy[name] = accuracy(model, dataset.subset([name]))
    return (report, model) if return_model else report


def _mean(values) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


# ---------------------------------------------------------------------------
# protocols


@dataclass
class Cell:
    values: list

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))

    def __str__(self) -> str:
        return f"{100 * self.mean:.1f} ± {100 * self.std:.1f}"


@dataclass
class LOOTable:
    """Per-unseen-domain accuracy cells plus an Avg cell, over seeds."""

    method: str
    domains: list
    seeds: list
    cells: dict  # domain name or "Avg" -> Cell

    def header(self) -> list[str]:
        return [*self.domains, "Avg"]

    def row(self) -> list[str]:
        return [*(str(self.cells[d]) for d in self.domains), str(self.cells["Avg"])]


def leave_one_out(config: TrainConfig, dataset: DomainDataset, seeds: Sequence[int] | None = None,
                  ) -> LOOTable:
    """Hold out each domain in turn; cells are mean ± std over ``seeds``."""
    if len(dataset) < 2:
        raise TrainError("leave-one-out needs at least two domains")
    seeds = [config.seed] if seeds is None else list(seeds)
    acc = {d: [] for d in dataset.names}
    for s in seeds:
        for d in dataset.names:
            rep = train(replace(config, seed=s), dataset, unseen=d)
            acc[d].append(rep.test_accuracy[d])
    cells = {d: Cell(v) for d, v in acc.items()}
    cells["Avg"] = Cell([float(np.mean([acc[d][i] for d in dataset.names])) for i in range(len(seeds))])
    return LOOTable(config.method, list(dataset.names), seeds, cells)


ABLATION_VARIANTS = (
    ("WBAE-L_wb", "wbae_no_wb"),
    ("WBAE-L_r / WBMI-L_i", "wbae_no_r"),
    ("WBMI-L_wb", "wbmi_no_wb"),
    ("WBAE", "wbae"),
    ("WBMI", "wbmi"),
)


@dataclass
class AblationTable:
    variants: list  # column labels
    tables: dict  # label -> LOOTable

    def header(self) -> list[str]:
        return ["unseen", *self.variants]

    def rows(self) -> list[list[str]]:
        first = self.tables[self.variants[0]]
        keys = [*first.domains, "Avg"]
        return [[k, *(str(self.tables[v].cells[k]) for v in self.variants)] for k in keys]


def ablate(config: TrainConfig, dataset: DomainDataset, seeds: Sequence[int] | None = None) -> AblationTable:
    """The five ablation variants under identical seeds and splits.

    Dropping L_r from WBAE and dropping L_i from WBMI leave the same
    objective, so that column is a single run set.
    """
    tables = {}
    for label, method in ABLATION_VARIANTS:
        tables[label] = leave_one_out(replace(config, method=method), dataset, seeds)
    return AblationTable([label for label, _ in ABLATION_VARIANTS], tables)
