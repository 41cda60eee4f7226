"""Cross-section vs. trajectory guarantees for an epsilon schedule of DP-circulant matrices."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .ledger import Convention, ReleaseLedger
from .matrices import DpCirculant, dp_circulant_matrix


@dataclass(frozen=True)
class Table1Column:
    T: int
    epsilon: float
    cross_section: float
    trajectory: float | None  # None at T = 1

    @property
    def cross_section_pct(self) -> int:
        return round_half_up(100 * self.cross_section)

    @property
    def trajectory_pct(self) -> int | None:
        return None if self.trajectory is None else round_half_up(100 * self.trajectory)


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def simulate_table1(schedule: Sequence[float], n: int) -> list[Table1Column]:
    """Record ``dp_circulant(n, eps_t)`` for each period and read off both guarantees."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    ledger = ReleaseLedger()
    out = []
    for t, eps in enumerate(schedule, start=1):
        ledger = ledger.record_release(t, dp_circulant_matrix(n, eps), spec=DpCirculant(eps, n))
        traj = None if t == 1 else ledger.trajectory_guarantee(Convention.FROM_FIRST).beta_L
        out.append(Table1Column(t, float(eps), ledger.records[-1].beta_t, traj))
    return out


def running_mean_trajectory(cross_section: Sequence[float]) -> list[float | None]:
    """Trajectory ratio implied by per-period ratios of equally sized matrices.

    With a fixed state count the trajectory ratio at ``T`` is the plain mean
    of the first ``T`` cross-section ratios. Entry 0 is ``None``.
    """
    out: list[float | None] = [None]
    for T in range(2, len(cross_section) + 1):
        out.append(sum(cross_section[:T]) / T)
    return out


def format_table1(columns: Sequence[Table1Column], unrounded: bool = True) -> str:
    eps = ";".join(f"{c.epsilon:g}" for c in columns)
    head = ["T".ljust(4), "epsilon".rjust(8), "cross".rjust(6), "traj".rjust(6)]
    if unrounded:
        head += ["cross (exact)".rjust(16), "traj (exact)".rjust(16)]
    lines = [f"epsilon schedule {{{eps}}}", " ".join(head)]
    for c in columns:
        traj = "" if c.trajectory_pct is None else f"{c.trajectory_pct}%"
        row = [str(c.T).ljust(4), f"{c.epsilon:g}".rjust(8), f"{c.cross_section_pct}%".rjust(6), traj.rjust(6)]
        if unrounded:
            exact_traj = "" if c.trajectory is None else f"{100 * c.trajectory:.6f}"
            row += [f"{100 * c.cross_section:.6f}".rjust(16), exact_traj.rjust(16)]
        lines.append(" ".join(row))
    return "\n".join(lines)
