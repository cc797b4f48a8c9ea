"""Multi-domain datasets: rotated synthetic generators and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.datasets import make_moons
from sklearn.model_selection import train_test_split

BASES = ("two_moons", "gauss_mixture")
MIXTURE_MEANS = np.array([[-1.5, 0.0], [1.5, 0.0]])
MIXTURE_SD = 0.4


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True, eq=False)
class Domain:
    name: str
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64).ravel()
        if x.ndim != 2 or x.shape[0] < 1:
            raise DataError(f"domain {self.name!r} needs a non-empty n x d feature matrix")
        if y.shape[0] != x.shape[0]:
            raise DataError(f"domain {self.name!r}: {x.shape[0]} rows but {y.shape[0]} labels")
        if np.any(y < 0):
            raise DataError("labels must be nonnegative")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True, eq=False)
class DomainDataset:
    domains: tuple
    class_count: int
    label_map: dict = field(default_factory=dict)  # original label -> dense index

    def __post_init__(self):
        doms = tuple(self.domains)
        if not doms:
            raise DataError("dataset needs at least one domain")
        dims = {d.features.shape[1] for d in doms}
        if len(dims) != 1:
            raise DataError(f"domains disagree on feature dimension: {sorted(dims)}")
        names = [d.name for d in doms]
        if len(set(names)) != len(names):
            raise DataError("domain names must be unique")
        top = max(int(d.labels.max()) for d in doms)
        if top >= self.class_count:
            raise DataError(f"label {top} out of range for {self.class_count} classes")
        object.__setattr__(self, "domains", doms)

    @property
    def feature_dim(self) -> int:
        return self.domains[0].features.shape[1]

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.domains]

    def __len__(self) -> int:
        return len(self.domains)

    def __getitem__(self, key) -> Domain:
        if isinstance(key, str):
            for d in self.domains:
                if d.name == key:
                    return d
            raise KeyError(key)
        return self.domains[key]

    def subset(self, names) -> "DomainDataset":
        return DomainDataset(tuple(self[n] for n in names), self.class_count, self.label_map)

    def without(self, name: str) -> "DomainDataset":
        return self.subset([n for n in self.names if n != name])


def _rotation(deg: float) -> np.ndarray:
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def _base_sample(base: str, n: int, noise_sd: float, rng) -> tuple[np.ndarray, np.ndarray]:
    if base == "gauss_mixture":
        y = rng.integers(0, 2, size=n)
        sd = MIXTURE_SD if noise_sd is None else noise_sd
        return MIXTURE_MEANS[y] + sd * rng.standard_normal((n, 2)), y
    if base == "two_moons":
        seed = int(rng.integers(0, 2**31 - 1))
        x, y = make_moons(n, noise=0.1 if noise_sd is None else noise_sd, random_state=seed)
        return x - x.mean(axis=0), y
    raise DataError(f"unknown base {base!r}; choose one of {BASES}")


def generate_rotated(
    base: str = "gauss_mixture",
    angles_deg=(0, 15, 30, 45),
    n_per_domain: int = 500,
    noise_sd: float | None = None,
    seed: int = 0,
) -> DomainDataset:
    """One domain per angle, all rotations of the same base sample.

    Labels travel with their points, so the labeling rule is the base rule
    in each domain's rotated frame. ``noise_sd`` defaults to the base's own
    spread (0.4 for the mixture, 0.1 for the moons).
    """
    angles = list(angles_deg)
    if not angles:
        raise DataError("need at least one angle")
    if n_per_domain < 1:
        raise DataError("n_per_domain must be >= 1")
    if base not in BASES:
        raise DataError(f"unknown base {base!r}; choose one of {BASES}")
    rng = np.random.default_rng(seed)
    x, y = _base_sample(base, n_per_domain, noise_sd, rng)
    domains = tuple(
        Domain(f"{base}_{_fmt_angle(a)}", x @ _rotation(a).T, y) for a in angles
    )
    return DomainDataset(domains, 2)


def _fmt_angle(a) -> str:
    return f"{a:g}deg"


# ---------------------------------------------------------------------------
# CSV


def load_csv(path) -> DomainDataset:
    """Read ``domain,label,f1..fd`` rows into a dataset.

    Domains keep first-appearance order; labels are re-indexed densely in
    sorted order and the mapping is kept on ``label_map``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file; a header is required", 1) from None
        header = [h.strip() for h in header]
        d = len(header) - 2
        expected = ["domain", "label"] + [f"f{i}" for i in range(1, d + 1)]
        if d < 1 or header != expected:
            raise ParseError(
                f"header must be 'domain,label,f1,...,fd', got {','.join(header)!r}", 1
            )
        groups: dict[str, tuple[list, list]] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 2:
                raise ParseError(f"expected {d + 2} fields, got {len(row)}", line)
            name = row[0].strip()
            if not name:
                raise ParseError("empty domain token", line)
            try:
                label = int(row[1])
            except ValueError:
                raise ParseError(f"label {row[1]!r} is not an integer", line) from None
            if label < 0:
                raise ParseError(f"label {label} is negative", line)
            try:
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", line) from None
            if not all(math.isfinite(v) for v in feats):
                raise ParseError("features must be finite", line)
            xs, ys = groups.setdefault(name, ([], []))
            xs.append(feats)
            ys.append(label)
    if not groups:
        raise ParseError("no data rows", 2)
    originals = sorted({lab for _, ys in groups.values() for lab in ys})
    label_map = {lab: i for i, lab in enumerate(originals)}
    domains = tuple(
        Domain(name, np.array(xs), np.array([label_map[v] for v in ys]))
        for name, (xs, ys) in groups.items()
    )
    return DomainDataset(domains, len(originals), label_map)


def save_csv(dataset: DomainDataset, path) -> None:
    """Write the dataset; labels are mapped back through ``label_map`` if present."""
    inverse = {v: k for k, v in dataset.label_map.items()}
    d = dataset.feature_dim
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "label"] + [f"f{i}" for i in range(1, d + 1)])
        for dom in dataset.domains:
            for x, y in zip(dom.features, dom.labels):
                w.writerow([dom.name, inverse.get(int(y), int(y))] + [repr(float(v)) for v in x])


# ---------------------------------------------------------------------------
# splits


def split_indices(labels, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    if not 0 < fraction < 1:
        raise DataError("fraction must lie in (0, 1)")
    counts = np.bincount(labels)
    small = [c for c, k in enumerate(counts) if 0 < k < 2]
    if small:
        raise DataError(f"classes {small} have fewer than 2 samples; cannot stratify")
    idx = np.arange(labels.size)
    n_train = int(round(fraction * labels.size))
    n_train = min(max(n_train, 1), labels.size - 1)
    tr, va = train_test_split(
        idx, train_size=n_train, stratify=labels, random_state=int(seed) % (2**32)
    )
    return np.sort(tr), np.sort(va)


def split_train_val(dataset: DomainDataset, fraction: float = 0.8, seed: int = 0):
    """Per-domain label-stratified split into (train, val) datasets."""
    ss = np.random.SeedSequence(int(seed)).spawn(len(dataset))
    train, val = [], []
    for dom, s in zip(dataset.domains, ss):
        tr, va = split_indices(dom.labels, fraction, s.generate_state(1)[0])
        train.append(Domain(dom.name, dom.features[tr], dom.labels[tr]))
        val.append(Domain(dom.name, dom.features[va], dom.labels[va]))
    return (
        DomainDataset(tuple(train), dataset.class_count, dataset.label_map),
        DomainDataset(tuple(val), dataset.class_count, dataset.label_map),
    )


__all__ = [
    "BASES",
    "DataError",
    "Domain",
    "DomainDataset",
    "ParseError",
    "generate_rotated",
    "load_csv",
    "save_csv",
    "split_indices",
    "split_train_val",
]
