"""
Randomized response / PRAM applied to attribute columns.

Randomness is counter based: every (master seed, period, attribute) triple
gets a 64-bit stream key from :class:`numpy.random.SeedSequence`, and
individual ``i`` receives the seed ``key + (i + 1) * GAMMA (mod 2**64)``. That
seed is hashed with the SplitMix64 finalizer into one uniform in ``[0, 1)``.
Each individual's draw therefore depends only on its own seed, so the work can
be split across workers in any order with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix

from .errors import (
    CatalogSizeMismatchError,
    DimensionalityCapError,
    SchemaError,
    SizeMismatchError,
)
from .matrices import STRICT_TOL, require_bistochastic, require_row_stochastic, sinkhorn_project

GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1
#: Largest joint catalog joint_encode will build.
JOINT_CAP = 10_000
#: Catalogs up to this size get a dense transition-count grid; larger ones a sparse one.
DENSE_COUNTS_CAP = 4096


def _mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _to_unit(z: np.ndarray) -> np.ndarray:
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniform_from_seed(seed: int) -> float:
    """The single uniform draw owned by an individual seed."""
    return float(_to_unit(_mix64(np.array([seed & _MASK64], dtype=np.uint64)))[0])


@dataclass(frozen=True)
class SeedStream:
    """Seed substream for one (master, period, attribute) triple."""

    master: int
    period: int = 0
    attribute: int = 0

    @property
    def key(self) -> int:
        ss = np.random.SeedSequence([self.master, self.period, self.attribute])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def individual_seed(self, i: int) -> int:
        return (self.key + (i + 1) * GAMMA) & _MASK64

    def individual_seeds(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return np.uint64(self.key) + (idx + np.uint64(1)) * np.uint64(GAMMA)

    def uniforms(self, indices) -> np.ndarray:
        return _to_unit(_mix64(self.individual_seeds(indices)))


def _as_stream(seed) -> SeedStream:
    if isinstance(seed, SeedStream):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return SeedStream(int(seed))


@dataclass(frozen=True, eq=False)
class AttributeColumn:
    """One attribute observed for every individual of a panel at one period.

    ``catalog`` is the ordered tuple of category labels for a categorical
    attribute and ``None`` for a numerical one. Absent individuals keep a
    placeholder value (``-1`` or ``nan``) and ``present[i] = False``.
    """

    values: np.ndarray
    present: np.ndarray
    catalog: tuple | None = None
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values)
        present = np.asarray(self.present, dtype=bool)
        if present.shape != values.shape or values.ndim != 1:
            raise SchemaError("values and present mask must be 1-d arrays of equal length")
        if self.catalog is not None:
            values = values.astype(np.int64)
            live = values[present]
            if live.size and (live.min() < 0 or live.max() >= len(self.catalog)):
                raise SchemaError(f"category index out of range for catalog of size {len(self.catalog)}")
        else:
            values = values.astype(float)
            if not np.all(np.isfinite(values[present])):
                raise SchemaError("numerical values of present individuals must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)

    @property
    def kind(self) -> str:
        return "numerical" if self.catalog is None else "categorical"

    @property
    def is_categorical(self) -> bool:
        return self.catalog is not None

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def categorical(cls, values, catalog, present=None, name="") -> "AttributeColumn":
        values = np.asarray(values)
        if present is None:
            present = np.ones(values.shape, dtype=bool)
        return cls(values, present, tuple(catalog), name)

    @classmethod
    def numerical(cls, values, present=None, name="") -> "AttributeColumn":
        values = np.asarray(values, dtype=float)
        if present is None:
            present = np.ones(values.shape, dtype=bool)
        return cls(values, present, None, name)

    @classmethod
    def from_labels(cls, labels: Sequence, catalog: Sequence, name="") -> "AttributeColumn":
        """Build a categorical column from labels; ``None`` marks an absent individual."""
        index = {lab: k for k, lab in enumerate(catalog)}
        values = np.full(len(labels), -1, dtype=np.int64)
        present = np.zeros(len(labels), dtype=bool)
        for i, lab in enumerate(labels):
            if lab is None:
                continue
            if lab not in index:
                raise SchemaError(f"{name or 'attribute'}: unknown category {lab!r}")
            values[i] = index[lab]
            present[i] = True
        return cls(values, present, tuple(catalog), name)

    def labels(self) -> list:
        if self.catalog is None:
            raise TypeError("numerical column has no labels")
        return [self.catalog[v] if p else None for v, p in zip(self.values, self.present)]

    def with_values(self, values) -> "AttributeColumn":
        return AttributeColumn(values, self.present, self.catalog, self.name)


@dataclass(frozen=True, eq=False)
class RandomizationOutcome:
    anonymized: AttributeColumn
    matrix: np.ndarray
    seed_used: int | None = None
    transition_counts: object = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def active_count(self) -> int:
        return int(self.anonymized.present.sum())


def _row_cdf(row: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(row.astype(np.longdouble))
    np.minimum(cdf, 1, out=cdf)
    cdf[-1] = 1
    return cdf


def _draw(row: np.ndarray, u) -> np.ndarray:
    # First category whose cumulative mass exceeds u; zero-mass categories are never picked.
    return np.searchsorted(_row_cdf(row), np.asarray(u, dtype=np.longdouble), side="right")


def local_randomize(value: int, P, seed: int) -> int:
    """One respondent's randomized report, drawn from row ``value`` of ``P``."""
    A = require_row_stochastic(P)
    if not 0 <= value < A.shape[0]:
        raise IndexError(f"category {value} out of range for {A.shape[0]} states")
    return int(_draw(A[value], uniform_from_seed(seed)))


def _transition_counts(orig: np.ndarray, rep: np.ndarray, r: int):
    if r <= DENSE_COUNTS_CAP:
        return np.bincount(orig * r + rep, minlength=r * r).reshape(r, r)
    ones = np.ones(orig.size, dtype=np.int64)
    return coo_matrix((ones, (orig, rep)), shape=(r, r)).tocsr()


def pram_apply(column: AttributeColumn, P, seed) -> RandomizationOutcome:
    """Post-randomize a categorical column.

    Each present individual with category ``u`` reports ``v`` with
    probability ``P[u, v]``, using its own substream draw. Absent individuals
    pass through unchanged.
    """
    if not column.is_categorical:
        raise TypeError("pram_apply needs a categorical column")
    A = require_row_stochastic(P)
    r = len(column.catalog)
    if A.shape[0] != r:
        raise CatalogSizeMismatchError(f"matrix has {A.shape[0]} states, catalog has {r} categories")
    stream = _as_stream(seed)

    idx = np.flatnonzero(column.present)
    orig = column.values[idx]
    u = stream.uniforms(idx)
    rep = np.empty_like(orig)
    for cat in np.unique(orig):
        sel = orig == cat
        rep[sel] = _draw(A[cat], u[sel])

    out = column.values.copy()
    out[idx] = rep
    return RandomizationOutcome(
        anonymized=column.with_values(out),
        matrix=A,
        seed_used=stream.key,
        transition_counts=_transition_counts(orig, rep, r),
    )


def mix_numerical(column: AttributeColumn, P, mode: str = "ex_post", tol: float = STRICT_TOL) -> AttributeColumn:
    """Replace present values ``x`` by ``P @ x``, treating individuals as categories.

    ``P`` must be bistochastic; its unit column sums are what make the mean
    of the output equal to the mean of the input.
    """
    if mode != "ex_post":
        raise ValueError(f"unsupported mode {mode!r}")
    if column.is_categorical:
        raise TypeError("mix_numerical needs a numerical column")
    A = require_bistochastic(P, tol)
    idx = np.flatnonzero(column.present)
    if A.shape[0] != idx.size:
        raise SizeMismatchError(f"matrix has {A.shape[0]} states, column has {idx.size} present individuals")
    out = column.values.copy()
    out[idx] = A @ column.values[idx]
    return column.with_values(out)


def restrict_to_present(P_full, present, tol: float = 1e-10) -> np.ndarray:
    """Keep the rows/columns of present individuals and re-project to bistochastic."""
    present = np.asarray(present, dtype=bool)
    A = np.asarray(P_full, dtype=float)
    if A.shape[0] != present.size:
        raise SizeMismatchError(f"matrix has {A.shape[0]} states, panel cohort has {present.size} individuals")
    if present.all():
        return require_bistochastic(A)
    idx = np.flatnonzero(present)
    return sinkhorn_project(A[np.ix_(idx, idx)], tol=tol).matrix


def apply_with_dropouts(
    column: AttributeColumn, P_full, seed=None, policy: str = "restrict_renormalize"
) -> RandomizationOutcome:
    """Randomize a column of an unbalanced panel.

    Numerical columns use ``P_full`` sized to the first-period cohort: rows and
    columns of absent individuals are dropped and the remainder is Sinkhorn
    re-projected so the applied matrix stays bistochastic. Categorical
    columns randomize over a fixed catalog and are unaffected by dropouts.
    """
    if policy != "restrict_renormalize":
        raise ValueError(f"unsupported dropout policy {policy!r}")
    if column.is_categorical:
        return pram_apply(column, P_full, seed)
    A = restrict_to_present(P_full, column.present)
    return RandomizationOutcome(anonymized=mix_numerical(column, A), matrix=A)


@dataclass(frozen=True)
class JointCodec:
    """Row-major mixed-radix code for tuples of categories.

    The last attribute varies fastest: for radices ``(r1, ..., rM)`` the tuple
    ``(a1, ..., aM)`` maps to ``((a1 * r2 + a2) * r3 + a3) ...``.
    """

    catalogs: tuple[tuple, ...]
    names: tuple[str, ...] = ()

    @property
    def radices(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.catalogs)

    @property
    def size(self) -> int:
        return prod(self.radices)

    @property
    def catalog(self) -> tuple:
        return tuple(self.decode_tuple(k, labels=True) for k in range(self.size))

    def encode_tuple(self, tup: Sequence[int]) -> int:
        code = 0
        for a, r in zip(tup, self.radices, strict=True):
            if not 0 <= a < r:
                raise IndexError(f"category {a} out of range for radix {r}")
            code = code * r + int(a)
        return code

    def decode_tuple(self, code: int, labels: bool = False) -> tuple:
        parts = []
        for r in reversed(self.radices):
            code, a = divmod(int(code), r)
            parts.append(a)
        parts.reverse()
        if labels:
            return tuple(cat[a] for cat, a in zip(self.catalogs, parts))
        return tuple(parts)

    def decode(self, column: AttributeColumn) -> list[AttributeColumn]:
        """Split a joint column back into its component columns."""
        codes = np.where(column.present, column.values, 0)
        out = []
        for pos, r in reversed(list(enumerate(self.radices))):
            codes, comp = np.divmod(codes, r)
            comp = np.where(column.present, comp, -1)
            name = self.names[pos] if self.names else ""
            out.append(AttributeColumn(comp, column.present, self.catalogs[pos], name))
        return out[::-1]


def joint_encode(columns: Sequence[AttributeColumn], cap: int = JOINT_CAP) -> tuple[AttributeColumn, JointCodec]:
    """Encode several categorical columns as one column over their product catalog.

    An individual is present in the joint column only when present in every
    component.
    """
    if not columns:
        raise ValueError("need at least one column")
    if any(not c.is_categorical for c in columns):
        raise TypeError("joint_encode needs categorical columns")
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise SizeMismatchError("columns differ in length")
    codec = JointCodec(tuple(c.catalog for c in columns), tuple(c.name for c in columns))
    if codec.size > cap:
        raise DimensionalityCapError(f"joint catalog of size {codec.size} exceeds cap {cap}")
    present = np.logical_and.reduce([c.present for c in columns])
    codes = np.zeros(n, dtype=np.int64)
    for c, r in zip(columns, codec.radices):
        codes = codes * r + np.where(present, c.values, 0)
    codes[~present] = -1
    name = "+".join(codec.names)
    return AttributeColumn(codes, present, codec.catalog, name), codec
