"""Bistochastic randomized response for longitudinal microdata."""

from .errors import *  # noqa: F401,F403
from .ledger import (
    Convention,
    BlockIdentityCheck,
    LedgerVerdict,
    NextEntropyRequirement,
    ReleaseLedger,
    ReleaseRecord,
    TrajectoryGuarantee,
)
from .matrices import (
    Custom,
    DpCirculant,
    EntropyReport,
    EntropyTarget,
    Identity,
    KAnonBlocks,
    MatrixClass,
    PerfectSecrecy,
    Validation,
    block_diagonal,
    build_matrix,
    dp_circulant_matrix,
    entropy_rate,
    entropy_target_alpha,
    entropy_target_matrix,
    identity_matrix,
    k_anon_block_matrix,
    kronecker,
    perfect_secrecy_matrix,
    read_matrix,
    sinkhorn_project,
    validate,
    write_matrix,
)
from .randomizer import (
    AttributeColumn,
    JointCodec,
    RandomizationOutcome,
    SeedStream,
    apply_with_dropouts,
    joint_encode,
    local_randomize,
    mix_numerical,
    pram_apply,
)

__version__ = "0.1.0"
