"""
Per-period release ledger with cross-sectional and trajectory guarantees.

Each release records the entropy rate of the matrix applied at period ``t``.
The trajectory guarantee is computed from those numbers alone: the entropy
rate of a Kronecker product of bistochastic matrices is the sum of the
factors' entropy rates, so the product is never materialized.

A :class:`ReleaseLedger` is immutable. Recording or revising a release returns
a new ledger whose ``previous`` attribute points at the version it replaced,
which keeps the full audit trail readable.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    InsufficientPeriodsError,
    LedgerFormatError,
    NonMonotonePeriodError,
    TargetArityMismatchError,
    UnknownPeriodError,
)
from .matrices import STRICT_TOL, MatrixSpec, entropy_rate, spec_to_dict

LEDGER_FORMAT = "bistochastic-ledger/1"
BLOCK_IDENTITY_TOL = 1e-12


class Convention(enum.Enum):
    """Which periods enter the trajectory guarantee.

    ``FROM_FIRST`` sums every recorded period; ``FROM_SECOND`` only periods
    ``t >= 2``, where a trajectory of at least two observations exists.
    """

    FROM_FIRST = "t1"
    FROM_SECOND = "t2"

    @classmethod
    def parse(cls, value) -> "Convention":
        if isinstance(value, cls):
            return value
        for c in cls:
            if value in (c.value, c.name, c.name.lower()):
                return c
        raise ValueError(f"unknown convention {value!r}; use 't1' or 't2'")


def _sig15(x: float) -> float:
    return float(f"{x:.15g}")


@dataclass(frozen=True)
class ReleaseRecord:
    t: int
    n_t: int
    bits_t: float
    beta_t: float
    spec: dict | None = None
    active_count: int | None = None

    @property
    def max_bits(self) -> float:
        return math.log2(self.n_t)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "n_t": self.n_t,
            "bits_t": _sig15(self.bits_t),
            "beta_t": _sig15(self.beta_t),
            "spec": self.spec,
            "active_count": self.active_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReleaseRecord":
        try:
            rec = cls(
                t=int(d["t"]),
                n_t=int(d["n_t"]),
                bits_t=float(d["bits_t"]),
                beta_t=float(d["beta_t"]),
                spec=d.get("spec"),
                active_count=None if d.get("active_count") is None else int(d["active_count"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise LedgerFormatError(f"bad release record {d!r}: {exc}") from None
        if rec.n_t < 1 or not 0.0 <= rec.beta_t <= 1.0 or rec.bits_t < 0:
            raise LedgerFormatError(f"release record out of range: {d!r}")
        return rec


@dataclass(frozen=True)
class TrajectoryGuarantee:
    total_bits: float
    max_bits: float
    beta_L: float
    convention: Convention
    periods: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "total_bits": _sig15(self.total_bits),
            "max_bits": _sig15(self.max_bits),
            "beta_L": _sig15(self.beta_L),
        }


@dataclass(frozen=True)
class BlockIdentityCheck:
    """Trajectory entropy against ``T`` times the block-diagonal entropy rate."""

    holds: bool
    lhs_bits: float
    rhs_bits: float
    size_mismatch: bool = False
    note: str = ""


@dataclass(frozen=True)
class PeriodVerdict:
    t: int
    beta_t: float
    target: float
    passed: bool


@dataclass(frozen=True)
class LedgerVerdict:
    periods: tuple[PeriodVerdict, ...]
    trajectory: TrajectoryGuarantee | None
    beta_L_target: float | None
    trajectory_passed: bool | None
    note: str = ""

    @property
    def failures(self) -> list[str]:
        out = [f"period {p.t}: beta_t={p.beta_t:.6f} < {p.target}" for p in self.periods if not p.passed]
        if self.trajectory_passed is False:
            out.append(f"trajectory: beta_L={self.trajectory.beta_L:.6f} < {self.beta_L_target}")
        return out

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.periods) and self.trajectory_passed is not False


@dataclass(frozen=True)
class NextEntropyRequirement:
    """Minimal entropy for the next release to keep ``beta_L`` on target."""

    feasible: bool
    bits: float | None
    max_bits: float
    needed_bits: float

    @property
    def beta(self) -> float | None:
        if self.bits is None:
            return None
        return self.bits / self.max_bits


@dataclass(frozen=True)
class ReleaseLedger:
    records: tuple[ReleaseRecord, ...] = ()
    version: int = 0
    previous: ReleaseLedger | None = field(default=None, repr=False, compare=False)

    # -- writers (return new versions) ------------------------------------

    def record_release(
        self,
        t: int,
        P,
        active_count: int | None = None,
        spec: MatrixSpec | dict | None = None,
        tol: float = STRICT_TOL,
    ) -> "ReleaseLedger":
        if self.records and t <= self.records[-1].t:
            raise NonMonotonePeriodError(f"period {t} is not after the last recorded period {self.records[-1].t}")
        if t < 1:
            raise NonMonotonePeriodError(f"periods are 1-based, got {t}")
        rec = _make_record(t, P, active_count, spec, tol)
        return ReleaseLedger(self.records + (rec,), self.version + 1, self)

    def revise_release(
        self,
        t: int,
        P,
        active_count: int | None = None,
        spec: MatrixSpec | dict | None = None,
        tol: float = STRICT_TOL,
    ) -> "ReleaseLedger":
        idx = self._index(t)
        old = self.records[idx]
        if active_count is None:
            active_count = old.active_count
        rec = _make_record(t, P, active_count, spec, tol)
        records = self.records[:idx] + (rec,) + self.records[idx + 1 :]
        return ReleaseLedger(records, self.version + 1, self)

    # -- readers -----------------------------------------------------------

    @property
    def periods(self) -> tuple[int, ...]:
        return tuple(r.t for r in self.records)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, t: int) -> ReleaseRecord:
        return self.records[self._index(t)]

    def _index(self, t: int) -> int:
        for i, r in enumerate(self.records):
            if r.t == t:
                return i
        raise UnknownPeriodError(f"no release recorded for period {t}")

    def history(self) -> list["ReleaseLedger"]:
        """All versions, oldest first, ending with this one."""
        out = []
        node = self
        while node is not None:
            out.append(node)
            node = node.previous
        return out[::-1]

    def at_version(self, version: int) -> "ReleaseLedger":
        for led in self.history():
            if led.version == version:
                return led
        raise KeyError(f"no ledger version {version}")

    def _included(self, convention: Convention) -> list[ReleaseRecord]:
        if convention is Convention.FROM_FIRST:
            return list(self.records)
        return [r for r in self.records if r.t >= 2]

    def trajectory_guarantee(self, convention=Convention.FROM_FIRST) -> TrajectoryGuarantee:
        convention = Convention.parse(convention)
        if convention is Convention.FROM_FIRST and len(self.records) < 1:
            raise InsufficientPeriodsError("no releases recorded")
        if convention is Convention.FROM_SECOND and (len(self.records) < 2 or not self._included(convention)):
            raise InsufficientPeriodsError("trajectories need at least two periods, one of them t >= 2")
        recs = self._included(convention)
        total = math.fsum(r.bits_t for r in recs)
        max_bits = math.fsum(r.max_bits for r in recs)
        beta = 0.0 if max_bits == 0 else min(1.0, total / max_bits)
        return TrajectoryGuarantee(total, max_bits, beta, convention, tuple(r.t for r in recs))

    def guarantees(self) -> dict[str, TrajectoryGuarantee | None]:
        """Trajectory guarantee under both conventions, ``None`` where undefined."""
        out = {}
        for c in Convention:
            try:
                out[c.value] = self.trajectory_guarantee(c)
            except InsufficientPeriodsError:
                out[c.value] = None
        return out

    def check_block_identity(self) -> BlockIdentityCheck:
        if not self.records:
            return BlockIdentityCheck(True, 0.0, 0.0)
        T = len(self.records)
        lhs = math.fsum(r.bits_t for r in self.records)
        N = sum(r.n_t for r in self.records)
        block_rate = math.fsum(r.n_t / N * r.bits_t for r in self.records)
        rhs = T * block_rate
        if len({r.n_t for r in self.records}) > 1:
            return BlockIdentityCheck(
                False, lhs, rhs, size_mismatch=True,
                note="state counts differ across periods; the identity needs a fixed categorization",
            )
        return BlockIdentityCheck(abs(lhs - rhs) <= BLOCK_IDENTITY_TOL * max(1.0, abs(lhs)), lhs, rhs)

    def verdict(
        self,
        beta_targets: Sequence[float],
        beta_L_target: float | None = None,
        convention=Convention.FROM_SECOND,
    ) -> LedgerVerdict:
        """Check every period and the trajectory against their targets.

        All failures are reported. When no trajectory exists yet under the
        chosen convention the trajectory condition is left unevaluated.
        """
        convention = Convention.parse(convention)
        if len(beta_targets) != len(self.records):
            raise TargetArityMismatchError(
                f"{len(beta_targets)} per-period targets for {len(self.records)} recorded periods"
            )
        periods = tuple(
            PeriodVerdict(r.t, r.beta_t, float(b), r.beta_t >= b) for r, b in zip(self.records, beta_targets)
        )
        try:
            traj = self.trajectory_guarantee(convention)
        except InsufficientPeriodsError as exc:
            return LedgerVerdict(periods, None, beta_L_target, None, note=str(exc))
        passed = None if beta_L_target is None else traj.beta_L >= beta_L_target
        return LedgerVerdict(periods, traj, beta_L_target, passed)

    def required_next_entropy(
        self, beta_L_target: float, n_next: int, convention=Convention.FROM_FIRST
    ) -> NextEntropyRequirement:
        """Smallest ``H(P_next)`` keeping the trajectory ratio at ``beta_L_target``.

        Solves ``(S + H) / (M + log2 n_next) >= target`` where ``S`` and ``M``
        are the entropy and maximal-entropy sums over the included periods.
        """
        convention = Convention.parse(convention)
        if n_next < 2:
            raise ValueError(f"n_next must be >= 2, got {n_next}")
        recs = self._included(convention)
        total = math.fsum(r.bits_t for r in recs)
        max_bits = math.fsum(r.max_bits for r in recs)
        cap = math.log2(n_next)
        needed = beta_L_target * (max_bits + cap) - total
        if needed > cap + 1e-12:
            return NextEntropyRequirement(False, None, cap, needed)
        return NextEntropyRequirement(True, min(cap, max(0.0, needed)), cap, needed)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        derived = {k: (None if g is None else g.to_dict()) for k, g in self.guarantees().items()}
        return {
            "format": LEDGER_FORMAT,
            "version": self.version,
            "records": [r.to_dict() for r in self.records],
            "derived": derived,
            "history": [
                {"version": led.version, "records": [r.to_dict() for r in led.records]}
                for led in self.history()[:-1]
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ReleaseLedger":
        if not isinstance(d, dict) or d.get("format") != LEDGER_FORMAT:
            raise LedgerFormatError("not a ledger document")
        try:
            versions = list(d.get("history", [])) + [{"version": d["version"], "records": d["records"]}]
        except KeyError as exc:
            raise LedgerFormatError(f"ledger is missing {exc}") from None
        led = None
        for v in versions:
            records = tuple(ReleaseRecord.from_dict(r) for r in v["records"])
            ts = [r.t for r in records]
            if ts != sorted(set(ts)):
                raise LedgerFormatError(f"periods not strictly increasing in version {v['version']}")
            led = ReleaseLedger(records, int(v["version"]), led)
        return led

    @classmethod
    def from_json(cls, text: str) -> "ReleaseLedger":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LedgerFormatError(f"ledger is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ReleaseLedger":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _make_record(t, P, active_count, spec, tol) -> ReleaseRecord:
    report = entropy_rate(P, tol)
    if spec is not None and not isinstance(spec, dict):
        spec = spec_to_dict(spec)
    return ReleaseRecord(t, report.n, report.bits, report.beta, spec, active_count)
