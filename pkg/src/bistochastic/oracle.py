"""
Brute-force checks for the closed forms used by the ledger.

Matrices are materialized and their entropy rate is computed from scratch:
the stationary distribution is verified rather than assumed, and row
entropies go through :func:`scipy.special.entr` instead of the production
``entropy_rate`` code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.special import entr

from .errors import SizeCapError
from .matrices import SIZE_CAP, entropy_rate, require_bistochastic, sinkhorn_project
from .randomizer import AttributeColumn, pram_apply


def random_bistochastic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform (0, 1] entries, Sinkhorn-projected to 1e-12."""
    return sinkhorn_project(1.0 - rng.random((n, n)), tol=1e-12).matrix


def direct_entropy_bits(M, stationary_tol: float = 1e-9) -> float:
    """Markov entropy rate ``-sum_i pi_i sum_j m_ij log2 m_ij`` of a materialized matrix.

    Uses the uniform distribution for ``pi`` after checking that it is
    stationary, which holds for every bistochastic matrix.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    pi = np.full(n, 1.0 / n)
    drift = np.abs(pi @ M - pi).max()
    if drift > stationary_tol / n:
        raise ValueError(f"uniform distribution is not stationary (drift {drift:.3g})")
    return float(pi @ entr(M).sum(axis=1) / math.log(2))


def kron_chain(Ps: Sequence, cap: int = SIZE_CAP) -> np.ndarray:
    """Left-associated Kronecker product ``((P1 x P2) x P3) ...``."""
    if not Ps:
        raise ValueError("need at least one matrix")
    size = math.prod(np.asarray(P).shape[0] for P in Ps)
    if size > cap:
        raise SizeCapError(f"Kronecker chain of size {size} exceeds cap {cap}")
    K = reduce(np.kron, [np.asarray(P, dtype=float) for P in Ps])
    return require_bistochastic(K)


@dataclass(frozen=True)
class BlockCheck:
    direct_bits: float
    weighted_bits: float
    delta: float


@dataclass(frozen=True)
class KroneckerCheck:
    direct_bits: float
    summed_bits: float
    delta: float


def verify_block_diagonal(blocks: Sequence) -> BlockCheck:
    """Block-diagonal entropy rate against the size-weighted mean of block rates."""
    sizes = [np.asarray(B).shape[0] for B in blocks]
    N = sum(sizes)
    direct = direct_entropy_bits(scipy.linalg.block_diag(*blocks))
    weighted = math.fsum(n / N * entropy_rate(B).bits for n, B in zip(sizes, blocks))
    return BlockCheck(direct, weighted, abs(direct - weighted))


def verify_kronecker_chain(Ps: Sequence, cap: int = SIZE_CAP) -> KroneckerCheck:
    """Kronecker-product entropy rate against the sum of factor rates."""
    direct = direct_entropy_bits(kron_chain(Ps, cap))
    summed = math.fsum(entropy_rate(P).bits for P in Ps)
    return KroneckerCheck(direct, summed, abs(direct - summed))


def block_diagonal_trials(n_trials: int = 100, seed: int = 0, sizes=(2, 8), max_blocks: int = 5) -> list[BlockCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        k = int(rng.integers(2, max_blocks + 1))
        dims = rng.integers(sizes[0], sizes[1] + 1, size=k)
        out.append(verify_block_diagonal([random_bistochastic(int(d), rng) for d in dims]))
    return out


def random_chain_dims(rng: np.random.Generator, sizes=(2, 8), max_factors: int = 4, cap: int = SIZE_CAP) -> list[int]:
    while True:
        k = int(rng.integers(2, max_factors + 1))
        dims = [int(d) for d in rng.integers(sizes[0], sizes[1] + 1, size=k)]
        if math.prod(dims) <= cap:
            return dims


def kronecker_chain_trials(n_trials: int = 100, seed: int = 0, sizes=(2, 8), max_factors: int = 4, cap: int = SIZE_CAP) -> list[KroneckerCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        dims = random_chain_dims(rng, sizes, max_factors, cap)
        out.append(verify_kronecker_chain([random_bistochastic(d, rng) for d in dims], cap))
    return out


@dataclass(frozen=True, eq=False)
class TransitionCheck:
    max_sigma: float
    frequencies: np.ndarray
    counts: np.ndarray


def standardized_deviations(P, counts: np.ndarray) -> np.ndarray:
    """``|f_uv - p_uv| / sigma_uv`` with binomial ``sigma = sqrt(p (1 - p) / N_u)``.

    Deterministic cells (``p`` is 0 or 1) score 0 when matched exactly and
    ``inf`` otherwise. Rows with no observations score 0.
    """
    P = np.asarray(P, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n_u = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        freq = np.where(n_u > 0, counts / n_u, P)
        sigma = np.sqrt(P * (1 - P) / np.where(n_u > 0, n_u, 1))
        z = np.abs(freq - P) / sigma
    z = np.where(sigma > 0, z, np.where(freq == P, 0.0, np.inf))
    return z


def mc_transition_check(P, counts_per_category, seed) -> TransitionCheck:
    """Randomize synthetic data of known composition and score the worst transition frequency."""
    A = require_bistochastic(P)
    r = A.shape[0]
    counts_per_category = np.broadcast_to(np.asarray(counts_per_category, dtype=np.int64), (r,))
    values = np.repeat(np.arange(r), counts_per_category)
    column = AttributeColumn.categorical(values, catalog=range(r))
    outcome = pram_apply(column, A, seed)
    counts = np.asarray(outcome.transition_counts)
    z = standardized_deviations(A, counts)
    freq = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1)
    return TransitionCheck(float(z.max()), freq, counts)


def empirical_entropy_bits(values, r: int) -> float:
    p = np.bincount(np.asarray(values), minlength=r) / len(values)
    return float(entr(p).sum() / math.log(2))


def mutual_information_bits(counts) -> float:
    """Plug-in mutual information of a joint (original, reported) count table."""
    joint = np.asarray(counts, dtype=float)
    joint = joint / joint.sum()
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    h_joint = entr(joint).sum()
    return float((entr(px).sum() + entr(py).sum() - h_joint) / math.log(2))
