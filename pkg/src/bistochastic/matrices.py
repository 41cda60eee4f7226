"""
Bistochastic transition matrices: construction, validation and entropy.

A transition matrix ``P`` has ``P[u, v] = Pr(Y = v | X = u)``: row ``u`` is the
original category, column ``v`` the reported one. Matrices are plain
``numpy.ndarray`` objects of dtype float64; every constructor here returns a
read-only array so that a matrix handed to the ledger cannot change afterwards.

Entropies are in bits. For a bistochastic matrix the stationary distribution
of the associated chain is uniform, so the entropy rate reduces to the mean of
the row entropies.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from .errors import (
    InvalidMatrixError,
    NoConvergenceError,
    NotBistochasticError,
    SizeCapError,
    ZeroLineError,
)

#: Tolerance for matrices built by this module.
STRICT_TOL = 1e-9
#: Default tolerance for matrices read back from text files.
FILE_TOL = 1e-6
#: Largest matrix (in states) that block_diagonal / kronecker will materialize.
SIZE_CAP = 4096
#: Above this epsilon dp_circulant_matrix warns that off-diagonal entries are tiny.
EPSILON_CAP = 50.0
#: Half-width of the achieved-beta window used by entropy_target_matrix.
BETA_WINDOW = 1e-6


class MatrixClass(enum.Enum):
    ROW_STOCHASTIC = "row_stochastic"
    BISTOCHASTIC = "bistochastic"
    INVALID = "invalid"


@dataclass(frozen=True)
class Validation:
    """Outcome of :func:`validate`.

    ``reason`` and ``magnitude`` describe the first violated constraint: for
    an invalid matrix that is why it is invalid, for a row-stochastic one it
    is the worst column-sum deviation.
    """

    kind: MatrixClass
    reason: str | None = None
    magnitude: float | None = None

    @property
    def is_bistochastic(self) -> bool:
        return self.kind is MatrixClass.BISTOCHASTIC

    @property
    def is_stochastic(self) -> bool:
        return self.kind is not MatrixClass.INVALID


def _as_square(P) -> np.ndarray:
    A = np.asarray(P, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidMatrixError(f"matrix must be square and non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrixError("matrix has non-finite entries")
    return A


def validate(P, tol: float = STRICT_TOL) -> Validation:
    """Classify ``P`` as bistochastic, row-stochastic only, or invalid."""
    A = _as_square(P)
    if np.any(A < 0):
        return Validation(MatrixClass.INVALID, "negative entry", float(-A.min()))
    row_dev = np.abs(A.sum(axis=1) - 1.0)
    if row_dev.max() > tol:
        i = int(np.argmax(row_dev))
        return Validation(MatrixClass.INVALID, f"row sum (row {i})", float(row_dev[i]))
    col_dev = np.abs(A.sum(axis=0) - 1.0)
    if col_dev.max() > tol:
        j = int(np.argmax(col_dev))
        return Validation(MatrixClass.ROW_STOCHASTIC, f"column sum (column {j})", float(col_dev[j]))
    return Validation(MatrixClass.BISTOCHASTIC)


def _frozen(A: np.ndarray) -> np.ndarray:
    A = np.array(A, dtype=float)
    A.setflags(write=False)
    return A


def require_row_stochastic(P, tol: float = STRICT_TOL) -> np.ndarray:
    v = validate(P, tol)
    if not v.is_stochastic:
        raise InvalidMatrixError(v.reason, v.magnitude)
    return _frozen(P)


def require_bistochastic(P, tol: float = STRICT_TOL) -> np.ndarray:
    """Return a read-only copy of ``P`` or raise if it is not bistochastic."""
    v = validate(P, tol)
    if not v.is_bistochastic:
        raise NotBistochasticError(v.reason, v.magnitude)
    return _frozen(P)


@dataclass(frozen=True)
class EntropyReport:
    n: int
    bits: float
    max_bits: float
    beta: float

    @property
    def stationary(self) -> np.ndarray:
        # Uniform by bistochasticity; never estimated.
        return np.full(self.n, 1.0 / self.n)


def _plogp_sum(A: np.ndarray) -> float:
    pos = A[A > 0]
    return float(np.sum(pos * np.log2(pos)))


def entropy_rate(P, tol: float = STRICT_TOL) -> EntropyReport:
    """Entropy rate of a bistochastic matrix in bits, with its privacy ratio.

    ``bits = -(1/n) * sum_uv p_uv log2 p_uv`` (``0 log 0 = 0``), ``max_bits =
    log2 n`` and ``beta = bits / max_bits`` (``0`` when ``n == 1``).
    """
    A = require_bistochastic(P, tol)
    n = A.shape[0]
    bits = max(0.0, -_plogp_sum(A) / n)
    max_bits = math.log2(n)
    if n == 1:
        return EntropyReport(1, 0.0, 0.0, 0.0)
    beta = min(1.0, bits / max_bits)
    return EntropyReport(n, bits, max_bits, beta)


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------


def perfect_secrecy_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return _frozen(np.full((n, n), 1.0 / n))


def identity_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return _frozen(np.eye(n))


def dp_circulant_matrix(n: int, epsilon: float) -> np.ndarray:
    """Randomized-response matrix with diagonal/off-diagonal ratio ``e**epsilon``.

    Diagonal ``e^eps / (e^eps + n - 1)``, off-diagonal ``1 / (e^eps + n - 1)``.
    Evaluated as ``1 / (1 + (n-1) e^-eps)`` in extended precision so large
    epsilons do not overflow.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon}")
    if epsilon > EPSILON_CAP:
        warnings.warn(
            f"epsilon={epsilon} exceeds {EPSILON_CAP}; off-diagonal entries are below "
            f"{math.exp(-EPSILON_CAP):.1e} and the matrix is numerically close to the identity",
            RuntimeWarning,
            stacklevel=2,
        )
    e = np.exp(-np.longdouble(epsilon))
    denom = 1 + (n - 1) * e
    diag = float(1 / denom)
    off = float(e / denom)
    A = np.full((n, n), off)
    np.fill_diagonal(A, diag)
    return _frozen(A)


def k_anon_block_matrix(partition: Sequence[int]) -> np.ndarray:
    """Block-diagonal matrix whose blocks are perfect-secrecy matrices."""
    if len(partition) == 0:
        raise ValueError("partition must not be empty")
    if any(int(k) < 1 for k in partition):
        raise ValueError(f"block sizes must be >= 1, got {list(partition)}")
    return block_diagonal([perfect_secrecy_matrix(int(k)) for k in partition])


def mixture_matrix(n: int, alpha: float) -> np.ndarray:
    """``(1 - alpha) * I + alpha * P*``: interpolates identity to perfect secrecy."""
    A = np.full((n, n), alpha / n)
    np.fill_diagonal(A, 1.0 - alpha + alpha / n)
    return _frozen(A)


def entropy_target_alpha(n: int, beta_target: float) -> float:
    """Smallest mixing weight (to bisection precision) reaching ``beta_target``.

    The achieved beta lies in ``[beta_target, beta_target + BETA_WINDOW]``.
    Entropy is concave along the segment from I to P* and maximal at P*, so
    beta is nondecreasing in alpha and bisection is valid.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= beta_target <= 1.0:
        raise ValueError(f"beta_target must lie in [0, 1], got {beta_target}")
    if beta_target == 0.0:
        return 0.0
    if beta_target == 1.0:
        return 1.0

    def beta(alpha):
        return entropy_rate(mixture_matrix(n, alpha)).beta

    lo, hi = 0.0, 1.0
    for _ in range(2000):
        b_hi = beta(hi)
        if b_hi - beta_target <= BETA_WINDOW:
            return hi
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if beta(mid) >= beta_target:
            hi = mid
        else:
            lo = mid
    raise RuntimeError(f"bisection failed for n={n}, beta_target={beta_target}")


def entropy_target_matrix(n: int, beta_target: float) -> np.ndarray:
    """Mixture of identity and perfect secrecy whose beta just meets the target."""
    if beta_target == 1.0:
        return perfect_secrecy_matrix(n)
    return mixture_matrix(n, entropy_target_alpha(n, beta_target))


def convex_combination(P, Q, lam: float) -> np.ndarray:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must lie in [0, 1], got {lam}")
    return _frozen(lam * np.asarray(P, float) + (1.0 - lam) * np.asarray(Q, float))


class SinkhornResult(NamedTuple):
    matrix: np.ndarray
    iterations: int
    residual: float


def _sum_residual(A: np.ndarray) -> float:
    return float(max(np.abs(A.sum(axis=1) - 1).max(), np.abs(A.sum(axis=0) - 1).max()))


def has_total_support(A: np.ndarray) -> bool:
    """True when every positive entry of ``A`` lies on a positive diagonal.

    Sinkhorn scaling converges to a bistochastic matrix with the same zero
    pattern exactly for such matrices. Checked through a perfect matching of
    the support graph and its strongly connected components.
    """
    n = A.shape[0]
    support = csr_matrix(A > 0)
    match = maximum_bipartite_matching(support, perm_type="column")
    if np.any(match < 0):
        return False
    row_of_col = np.empty(n, dtype=np.int64)
    row_of_col[match] = np.arange(n)
    rows, cols = support.nonzero()
    graph = csr_matrix((np.ones(len(rows)), (rows, row_of_col[cols])), shape=(n, n))
    _, labels = connected_components(graph, directed=True, connection="strong")
    return bool(np.all(labels[rows] == labels[row_of_col[cols]]))


def sinkhorn_project(M, tol: float = 1e-10, max_iter: int = 10_000) -> SinkhornResult:
    """Alternate row and column normalization until all sums are within ``tol`` of 1."""
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidMatrixError(f"matrix must be square and non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        raise InvalidMatrixError("matrix must be finite and nonnegative")
    zero_rows = np.flatnonzero(A.sum(axis=1) == 0)
    if zero_rows.size:
        raise ZeroLineError("row", int(zero_rows[0]))
    zero_cols = np.flatnonzero(A.sum(axis=0) == 0)
    if zero_cols.size:
        raise ZeroLineError("column", int(zero_cols[0]))

    residual = _sum_residual(A)
    if residual < tol:
        return SinkhornResult(_frozen(A), 0, residual)
    if not has_total_support(A):
        raise NoConvergenceError(0, residual, "matrix lacks total support")

    for it in range(1, max_iter + 1):
        A /= A.sum(axis=1, keepdims=True)
        A /= A.sum(axis=0, keepdims=True)
        residual = _sum_residual(A)
        if residual < tol:
            return SinkhornResult(_frozen(A), it, residual)
    raise NoConvergenceError(max_iter, residual)


def block_diagonal(Ps: Sequence, cap: int = SIZE_CAP) -> np.ndarray:
    if len(Ps) == 0:
        raise ValueError("need at least one block")
    size = sum(np.asarray(P).shape[0] for P in Ps)
    if size > cap:
        raise SizeCapError(f"block-diagonal size {size} exceeds cap {cap}")
    return _frozen(scipy.linalg.block_diag(*[np.asarray(P, float) for P in Ps]))


def kronecker(P, Q, cap: int = SIZE_CAP) -> np.ndarray:
    """Kronecker product; entry ``((i, j), (k, l))`` is ``P[i, k] * Q[j, l]``."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    size = P.shape[0] * Q.shape[0]
    if size > cap:
        raise SizeCapError(f"Kronecker size {size} exceeds cap {cap}")
    return _frozen(np.kron(P, Q))


# --------------------------------------------------------------------------
# Parameterizations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PerfectSecrecy:
    n: int | None = None


@dataclass(frozen=True)
class DpCirculant:
    epsilon: float
    n: int | None = None


@dataclass(frozen=True)
class KAnonBlocks:
    partition: tuple[int, ...]

    @property
    def n(self) -> int:
        return sum(self.partition)


@dataclass(frozen=True)
class EntropyTarget:
    beta: float
    n: int | None = None


@dataclass(frozen=True)
class Identity:
    n: int | None = None


@dataclass(frozen=True)
class Custom:
    path: str
    tol: float = FILE_TOL


MatrixSpec = Union[PerfectSecrecy, DpCirculant, KAnonBlocks, EntropyTarget, Identity, Custom]

_SPEC_TYPES = {
    "perfect_secrecy": PerfectSecrecy,
    "dp_circulant": DpCirculant,
    "k_anon_blocks": KAnonBlocks,
    "entropy_target": EntropyTarget,
    "identity": Identity,
    "custom": Custom,
}
_SPEC_NAMES = {cls: name for name, cls in _SPEC_TYPES.items()}


def spec_from_dict(d: dict) -> MatrixSpec:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _SPEC_TYPES:
        raise ValueError(f"unknown matrix type {kind!r}; expected one of {sorted(_SPEC_TYPES)}")
    if kind == "k_anon_blocks":
        d["partition"] = tuple(int(k) for k in d.get("partition", ()))
    try:
        spec = _SPEC_TYPES[kind](**d)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None
    check_spec(spec)
    return spec


def spec_to_dict(spec: MatrixSpec) -> dict:
    out = {"type": _SPEC_NAMES[type(spec)]}
    for name, value in vars(spec).items():
        if value is None:
            continue
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def check_spec(spec: MatrixSpec) -> None:
    if isinstance(spec, DpCirculant):
        if not (math.isfinite(spec.epsilon) and spec.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {spec.epsilon}")
    elif isinstance(spec, EntropyTarget):
        if not 0.0 <= spec.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {spec.beta}")
    elif isinstance(spec, KAnonBlocks):
        if not spec.partition or any(k < 1 for k in spec.partition):
            raise ValueError(f"invalid partition {spec.partition}")
    n = getattr(spec, "n", None)
    if n is not None and n < 1:
        raise ValueError(f"n must be >= 1, got {n}")


def resolve_size(spec: MatrixSpec, n: int) -> MatrixSpec:
    """Fill in a missing state count, or check a given one against ``n``."""
    if isinstance(spec, Custom):
        return spec
    have = spec.n
    if have is None:
        return replace(spec, n=n)
    if have != n:
        raise ValueError(f"{_SPEC_NAMES[type(spec)]} matrix has {have} states, expected {n}")
    return spec


def build_matrix(spec: MatrixSpec, base_dir: Path | None = None) -> np.ndarray:
    check_spec(spec)
    if isinstance(spec, Custom):
        path = Path(spec.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_matrix(path, tol=spec.tol)
    if isinstance(spec, KAnonBlocks):
        return k_anon_block_matrix(spec.partition)
    if spec.n is None:
        raise ValueError(f"{_SPEC_NAMES[type(spec)]} matrix needs a state count n")
    if isinstance(spec, PerfectSecrecy):
        return perfect_secrecy_matrix(spec.n)
    if isinstance(spec, Identity):
        return identity_matrix(spec.n)
    if isinstance(spec, DpCirculant):
        return dp_circulant_matrix(spec.n, spec.epsilon)
    return entropy_target_matrix(spec.n, spec.beta)


# --------------------------------------------------------------------------
# Text format: first line n, then n lines of n space-separated probabilities.
# --------------------------------------------------------------------------


def format_matrix(P) -> str:
    A = _as_square(P)
    lines = [str(A.shape[0])]
    lines += [" ".join(f"{x:.15g}" for x in row) for row in A]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, tol: float = FILE_TOL) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidMatrixError("empty matrix file")
    try:
        n = int(lines[0])
        rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidMatrixError(f"malformed matrix file: {exc}") from None
    if n < 1 or len(rows) != n or any(len(r) != n for r in rows):
        raise InvalidMatrixError(f"matrix file declares n={n} but holds {len(rows)} rows of the wrong width")
    return require_bistochastic(np.array(rows), tol)


def write_matrix(path, P) -> None:
    Path(path).write_text(format_matrix(P), encoding="utf-8")


def read_matrix(path, tol: float = FILE_TOL) -> np.ndarray:
    return parse_matrix(Path(path).read_text(encoding="utf-8"), tol)
