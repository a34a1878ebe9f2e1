"""Tabular data handling: schema-driven CSV loading with signed feature
hashing, train-statistics standardization, seeded splitting, and a
biased-label synthetic generator.

The sensitive column is never encoded into the feature matrix; it is carried
separately and consulted only at evaluation time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError

COLUMN_KINDS = ("numeric", "categorical", "label", "sensitive")

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Geometry of the synthetic generator: the first feature doubles as a group
# proxy (latent signal plus a group-dependent shift that grows with |z|), the
# second is a groupless signal channel with extra noise, the rest are pure
# noise. Scaling the shift by |z| makes the groups indistinguishable near the
# decision boundary and increasingly separated away from it, so low-confidence
# rows carry little group signature while confident rows carry a lot; for
# group 1 the shift also folds the sign of z, which a classifier leaning on
# this channel turns into confident group-dependent errors.
GROUP_PROXY_SHIFT = 2.0
CLEAN_CHANNEL_NOISE = 1.25


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a digest, platform independent."""
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


def hash_features(value: str, column_name: str, buckets: int) -> tuple[int, int]:
    """Map a categorical value to a (bucket index, sign) pair.

    The digest is FNV-1a over ``column_name + ":" + value``; the low bits of
    the digest pick the bucket and the next bit picks the sign, so the
    encoding is deterministic across runs and platforms.
    """
    if buckets < 2 or buckets & (buckets - 1) != 0:
        raise ConfigError(f"hash buckets must be a power of two >= 2, got {buckets}")
    digest = fnv1a64(f"{column_name}:{value}".encode("utf-8"))
    index = digest & (buckets - 1)
    sign_bit = (digest >> (buckets.bit_length() - 1)) & 1
    return int(index), 1 - 2 * int(sign_bit)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in COLUMN_KINDS:
            raise ConfigError(f"unknown column kind {self.kind!r} for {self.name!r}")


@dataclass(frozen=True)
class Schema:
    """Column layout of a raw table plus the hashed encoding width.

    Encoded feature vectors lay out the feature columns in schema order:
    numeric columns take one slot, categorical columns take a block of
    ``hash_buckets`` slots.
    """

    columns: tuple[ColumnSpec, ...]
    hash_buckets: int = 64

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError("schema column names must be unique")
        if sum(c.kind == "label" for c in self.columns) != 1:
            raise ConfigError("schema requires exactly one label column")
        if sum(c.kind == "sensitive" for c in self.columns) != 1:
            raise ConfigError("schema requires exactly one sensitive column")
        if self.hash_buckets < 2 or self.hash_buckets & (self.hash_buckets - 1) != 0:
            raise ConfigError("hash_buckets must be a power of two >= 2")
        if self.m < 1:
            raise ConfigError("schema has no feature columns")

    @property
    def label_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "label")

    @property
    def sensitive_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "sensitive")

    @property
    def feature_columns(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.kind in ("numeric", "categorical"))

    @property
    def m(self) -> int:
        width = 0
        for c in self.feature_columns:
            width += 1 if c.kind == "numeric" else self.hash_buckets
        return width

    def feature_offsets(self) -> dict[str, int]:
        """Start offset of each feature column's block in the encoded vector."""
        offsets: dict[str, int] = {}
        pos = 0
        for c in self.feature_columns:
            offsets[c.name] = pos
            pos += 1 if c.kind == "numeric" else self.hash_buckets
        return offsets

    def numeric_positions(self) -> np.ndarray:
        offsets = self.feature_offsets()
        return np.array(
            [offsets[c.name] for c in self.feature_columns if c.kind == "numeric"],
            dtype=np.int64,
        )

    def to_dict(self) -> dict:
        return {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "hash_buckets": self.hash_buckets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            cols = tuple(ColumnSpec(c["name"], c["kind"]) for c in d["columns"])
            buckets = int(d.get("hash_buckets", 64))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed schema document: {exc}") from exc
        return cls(columns=cols, hash_buckets=buckets)


@dataclass(frozen=True)
class Dataset:
    """Immutable encoded dataset.

    ``x`` holds the encoded features (sensitive column excluded), ``y`` the
    binary labels, ``s`` dense group ids for evaluation. ``clean_y`` is only
    populated by the synthetic generator as a diagnostics side record.
    """

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    schema: Schema
    clean_y: np.ndarray | None = None

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        s = np.array(self.s, dtype=np.int64)
        if x.ndim != 2:
            raise DataError("x must be a 2-d matrix")
        if not (x.shape[0] == y.shape[0] == s.shape[0]):
            raise DataError("x, y, s row counts differ")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        if not np.isfinite(x).all():
            raise DataError("x contains non-finite values")
        clean = self.clean_y
        if clean is not None:
            clean = np.array(clean, dtype=np.int64)
            if clean.shape != y.shape:
                raise DataError("clean_y shape mismatch")
            clean.setflags(write=False)
        for arr in (x, y, s):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "clean_y", clean)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        clean = None if self.clean_y is None else self.clean_y[idx]
        return Dataset(self.x[idx], self.y[idx], self.s[idx], self.schema, clean)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    valid_fraction: float
    test_fraction: float
    seed: int = 0

    def __post_init__(self) -> None:
        fracs = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(not (0.0 < f < 1.0) for f in fracs):
            raise ConfigError("split fractions must each lie in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")

    def to_dict(self) -> dict:
        return {
            "train_fraction": self.train_fraction,
            "valid_fraction": self.valid_fraction,
            "test_fraction": self.test_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        try:
            return cls(
                train_fraction=float(d["train_fraction"]),
                valid_fraction=float(d["valid_fraction"]),
                test_fraction=float(d["test_fraction"]),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed split spec: {exc}") from exc


@dataclass(frozen=True)
class SynthConfig:
    n: int
    m_numeric: int = 6
    group_balance: float = 0.5
    flip_rate_g0: float = 0.0
    flip_rate_g1: float = 0.0
    signal_strength: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.m_numeric < 1:
            raise ConfigError("m_numeric must be >= 1")
        for name in ("group_balance", "flip_rate_g0", "flip_rate_g1"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.signal_strength <= 0:
            raise ConfigError("signal_strength must be positive")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m_numeric": self.m_numeric,
            "group_balance": self.group_balance,
            "flip_rate_g0": self.flip_rate_g0,
            "flip_rate_g1": self.flip_rate_g1,
            "signal_strength": self.signal_strength,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        try:
            return cls(
                n=int(d["n"]),
                m_numeric=int(d.get("m_numeric", 6)),
                group_balance=float(d.get("group_balance", 0.5)),
                flip_rate_g0=float(d.get("flip_rate_g0", 0.0)),
                flip_rate_g1=float(d.get("flip_rate_g1", 0.0)),
                signal_strength=float(d.get("signal_strength", 2.0)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed synth config: {exc}") from exc


def synth_schema(m_numeric: int) -> Schema:
    cols = [ColumnSpec(f"f{i}", "numeric") for i in range(m_numeric)]
    cols.append(ColumnSpec("y", "label"))
    cols.append(ColumnSpec("s", "sensitive"))
    return Schema(columns=tuple(cols))


def _map_labels(raw: list[str]) -> np.ndarray:
    distinct: list[str] = []
    for v in raw:
        if v not in distinct:
            distinct.append(v)
    if len(distinct) > 2:
        raise DataError(f"non-binary label: {len(distinct)} distinct values")
    try:
        as_num = {v: float(v) for v in distinct}
    except ValueError:
        as_num = None
    if as_num is not None and set(as_num.values()) <= {0.0, 1.0}:
        mapping = {v: int(as_num[v]) for v in distinct}
    elif len(distinct) == 2:
        lo, hi = sorted(distinct)
        mapping = {lo: 0, hi: 1}
    else:
        raise DataError(f"label column has a single unmappable value {distinct[0]!r}")
    return np.array([mapping[v] for v in raw], dtype=np.int64)


def _map_groups(raw: list[str]) -> np.ndarray:
    ids: dict[str, int] = {}
    for v in raw:
        if v not in ids:
            ids[v] = len(ids)
    return np.array([ids[v] for v in raw], dtype=np.int64)


def load_csv(path: str | Path, schema: Schema, impute_missing: bool = False) -> Dataset:
    """Load and encode a CSV into a Dataset.

    Numeric cells are parsed as floats, categorical cells signed-hashed into
    their column block, the label mapped to {0, 1}, and the sensitive column
    mapped to dense group ids in order of first appearance. Missing cells are
    a hard error unless ``impute_missing`` is set, in which case numeric gaps
    take the column mean and categorical gaps hash as their own category.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    want = [c.name for c in schema.columns]
    if sorted(header) != sorted(want):
        raise DataError(
            f"header mismatch: file has {header!r}, schema expects {sorted(want)!r}"
        )
    if not rows:
        raise DataError(f"empty file: {path} has a header but no rows")

    col_at = {name: header.index(name) for name in want}
    n = len(rows)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i + 2}: expected {len(header)} cells, got {len(row)}")

    label_raw = [row[col_at[schema.label_column]].strip() for row in rows]
    sens_raw = [row[col_at[schema.sensitive_column]].strip() for row in rows]
    if any(v == "" for v in label_raw):
        raise DataError("missing label cell")
    if any(v == "" for v in sens_raw):
        raise DataError("missing sensitive cell")
    y = _map_labels(label_raw)
    s = _map_groups(sens_raw)

    x = np.zeros((n, schema.m), dtype=np.float64)
    offsets = schema.feature_offsets()
    for c in schema.feature_columns:
        j = col_at[c.name]
        cells = [row[j].strip() for row in rows]
        if c.kind == "numeric":
            col = np.empty(n, dtype=np.float64)
            missing = []
            for i, cell in enumerate(cells):
                if cell == "":
                    if not impute_missing:
                        raise DataError(f"missing cell in numeric column {c.name!r}, row {i + 2}")
                    missing.append(i)
                    col[i] = np.nan
                    continue
                try:
                    col[i] = float(cell)
                except ValueError:
                    raise DataError(
                        f"unparseable numeric cell {cell!r} in column {c.name!r}, row {i + 2}"
                    ) from None
            if missing:
                present = np.delete(col, missing)
                if present.size == 0:
                    raise DataError(f"numeric column {c.name!r} is entirely missing")
                col[missing] = present.mean()
            if not np.isfinite(col).all():
                raise DataError(f"non-finite value in numeric column {c.name!r}")
            x[:, offsets[c.name]] = col
        else:
            base = offsets[c.name]
            for i, cell in enumerate(cells):
                if cell == "" and not impute_missing:
                    raise DataError(f"missing cell in categorical column {c.name!r}, row {i + 2}")
                idx, sign = hash_features(cell, c.name, schema.hash_buckets)
                x[i, base + idx] += sign
    return Dataset(x=x, y=y, s=s, schema=schema)


def standardize(
    train: Dataset, others: Sequence[Dataset] = ()
) -> tuple[list[Dataset], np.ndarray, np.ndarray]:
    """Z-score numeric columns of all datasets using train statistics only.

    Uses the population standard deviation; zero-variance columns pass
    through centered. Hashed blocks are untouched. Returns the transformed
    datasets (train first) plus the full-width mean and stdev vectors.
    """
    if train.n == 0:
        raise DataError("cannot standardize an empty training set")
    pos = train.schema.numeric_positions()
    mean = np.zeros(train.m, dtype=np.float64)
    std = np.ones(train.m, dtype=np.float64)
    if pos.size:
        mean[pos] = train.x[:, pos].mean(axis=0)
        sd = train.x[:, pos].std(axis=0)
        std[pos] = np.where(sd == 0.0, 1.0, sd)
    out = [apply_standardization(d, mean, std) for d in (train, *others)]
    return out, mean, std


def apply_standardization(d: Dataset, mean: np.ndarray, std: np.ndarray) -> Dataset:
    return Dataset((d.x - mean) / std, d.y, d.s, d.schema, d.clean_y)


def split_dataset(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded disjoint row partition into (train, valid, test)."""
    if d.n < 3:
        raise DataError("need at least 3 rows to split into three parts")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(d.n)
    n_train = int(spec.train_fraction * d.n)
    n_valid = int(spec.valid_fraction * d.n)
    n_test = d.n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise DataError(
            f"split of {d.n} rows leaves an empty part "
            f"(sizes {n_train}/{n_valid}/{n_test})"
        )
    train = d.take(perm[:n_train])
    valid = d.take(perm[n_train : n_train + n_valid])
    test = d.take(perm[n_train + n_valid :])
    return train, valid, test


def synth_biased(cfg: SynthConfig) -> Dataset:
    """Generate a biased-label binary classification dataset.

    Per row: group ``g`` is Bernoulli(group_balance), latent ``z`` standard
    normal. Feature 0 is ``z`` plus a group-dependent shift that scales with
    |z| (a group proxy whose signature vanishes at the decision boundary),
    feature 1 is a noisy groupless copy of ``z``, remaining features are
    independent noise. The clean label is Bernoulli(sigmoid(signal_strength
    * z)); the observed label flips with the group's flip rate. Clean labels
    ride along in ``clean_y`` for diagnostics.
    """
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.n, cfg.m_numeric
    g = (rng.random(n) < cfg.group_balance).astype(np.int64)
    z = rng.standard_normal(n)
    x = np.empty((n, k), dtype=np.float64)
    x[:, 0] = z + GROUP_PROXY_SHIFT * np.abs(z) * g
    if k >= 2:
        x[:, 1] = z + CLEAN_CHANNEL_NOISE * rng.standard_normal(n)
    for j in range(2, k):
        x[:, j] = rng.standard_normal(n)
    p_clean = 1.0 / (1.0 + np.exp(-cfg.signal_strength * z))
    y_clean = (rng.random(n) < p_clean).astype(np.int64)
    flip_rate = np.where(g == 1, cfg.flip_rate_g1, cfg.flip_rate_g0)
    flips = rng.random(n) < flip_rate
    y_obs = np.where(flips, 1 - y_clean, y_clean)
    return Dataset(x=x, y=y_obs, s=g, schema=synth_schema(k), clean_y=y_clean)
