"""
Per-period protection of a CSV panel under a release plan.

Individuals are identified by the plan's id column. The first period fixes
the cohort; individual ``i`` is the ``i``-th id of that first file, which also
selects its random substream. Empty cells mean "not observed this period".
Everything is validated and randomized in memory before any file is written.

Numerical attributes use the individuals as categories, so their matrix is
``N x N`` dense; cohorts above ``NUMERICAL_CAP`` individuals are rejected
for plans with numerical attributes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ReleasePlan, Unit
from .errors import NonMonotonePeriodError, SchemaError, SizeCapError
from .ledger import Convention, ReleaseLedger
from .matrices import SIZE_CAP, build_matrix, resolve_size, spec_to_dict
from .randomizer import AttributeColumn, SeedStream, apply_with_dropouts, joint_encode, pram_apply


NUMERICAL_CAP = SIZE_CAP


@dataclass
class PanelFile:
    fieldnames: list[str]
    rows: list[list[str]]
    lineterminator: str


def read_panel(path, id_column: str) -> PanelFile:
    raw = Path(path).read_bytes().decode("utf-8")
    terminator = "\r\n" if "\r\n" in raw else "\n"
    lines = [ln for ln in raw.splitlines(keepends=True) if not ln.startswith("#")]
    reader = csv.reader(io.StringIO("".join(lines)))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty CSV") from None
    if id_column not in header:
        raise SchemaError(f"{path}: missing id column {id_column!r}")
    rows = [r for r in reader if r]
    for k, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise SchemaError(f"{path}: line {k} has {len(r)} fields, header has {len(header)}")
    ids = [r[header.index(id_column)] for r in rows]
    if any(not i for i in ids):
        raise SchemaError(f"{path}: missing id value")
    if len(set(ids)) != len(ids):
        raise SchemaError(f"{path}: duplicate ids")
    return PanelFile(header, rows, terminator)


def seed_fingerprint(master_seed: int) -> str:
    return hashlib.sha256(str(master_seed).encode()).hexdigest()[:16]


@dataclass
class UnitRelease:
    unit: Unit
    spec: dict
    n_t: int
    active_count: int
    beta_t: float
    ledger: ReleaseLedger


@dataclass
class ProtectResult:
    period: int
    csv_path: Path
    ledger_paths: dict[str, Path]
    releases: list[UnitRelease]

    def summary(self) -> str:
        lines = [f"period {self.period}: wrote {self.csv_path}"]
        for r in self.releases:
            g = r.ledger.guarantees()
            traj = "  ".join(
                f"beta_L[{c.value}]=" + ("n/a" if g[c.value] is None else f"{g[c.value].beta_L:.6f}")
                for c in Convention
            )
            lines.append(f"  {r.unit.name}: n_t={r.n_t} active={r.active_count} beta_t={r.beta_t:.6f}  {traj}")
        return "\n".join(lines)


def ledger_path(out_dir: Path, unit_name: str) -> Path:
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in unit_name)
    return out_dir / f"ledger_{safe}.json"


def _parse_float(text: str, name: str, ident: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise SchemaError(f"{name}: non-numeric value {text!r} for id {ident}") from None
    if not np.isfinite(x):
        raise SchemaError(f"{name}: non-finite value {text!r} for id {ident}")
    return x


def _resolve(plan: ReleasePlan, path: Path) -> Path:
    return path if path.is_absolute() else plan.base_dir / path


def protect_period(
    plan: ReleasePlan,
    t: int,
    out_dir: Path | None = None,
    seed: int | None = None,
    revise: bool = False,
) -> ProtectResult:
    period = plan.period(t)
    master = plan.master_seed if seed is None else int(seed)
    out_dir = Path(out_dir) if out_dir is not None else _resolve(plan, plan.output_dir)

    cohort = read_panel(_resolve(plan, plan.first_period.input), plan.id_column)
    id_pos = cohort.fieldnames.index(plan.id_column)
    cohort_ids = [r[id_pos] for r in cohort.rows]
    slot = {ident: i for i, ident in enumerate(cohort_ids)}
    N = len(cohort_ids)

    panel = cohort if period is plan.first_period else read_panel(_resolve(plan, period.input), plan.id_column)
    header = panel.fieldnames
    missing = [a.name for a in plan.attributes if a.name not in header]
    if missing:
        raise SchemaError(f"{period.input}: missing columns {missing}")
    pid = header.index(plan.id_column)
    row_slots = []
    for r in panel.rows:
        if r[pid] not in slot:
            raise SchemaError(f"id {r[pid]!r} is not in the first-period cohort; new arrivals are not supported")
        row_slots.append(slot[r[pid]])

    # Build cohort-ordered columns; raises on unknown labels before anything is written.
    columns: dict[str, AttributeColumn] = {}
    for a in plan.attributes:
        k = header.index(a.name)
        cells: list = [None] * N
        for r, s in zip(panel.rows, row_slots):
            cells[s] = r[k] if r[k] != "" else None
        if a.kind == "categorical":
            columns[a.name] = AttributeColumn.from_labels(cells, a.catalog, name=a.name)
        else:
            present = np.array([c is not None for c in cells])
            values = np.array([np.nan if c is None else _parse_float(c, a.name, cohort_ids[i]) for i, c in enumerate(cells)])
            columns[a.name] = AttributeColumn.numerical(values, present, name=a.name)

    anonymized: dict[str, AttributeColumn] = {}
    releases: list[UnitRelease] = []
    for unit in plan.units():
        if unit.joint:
            column, codec = joint_encode([columns[name] for name in unit.attributes])
            partial = np.logical_or.reduce([columns[name].present for name in unit.attributes]) & ~column.present
            if partial.any():
                ident = cohort_ids[int(np.flatnonzero(partial)[0])]
                raise SchemaError(f"{unit.name}: id {ident!r} is observed for only part of the joint group")
        else:
            column, codec = columns[unit.name], None
        n_full = len(column.catalog) if column.is_categorical else N
        if not column.is_categorical and N > NUMERICAL_CAP:
            raise SizeCapError(
                f"{unit.name}: numerical mixing over {N} individuals exceeds the cap of {NUMERICAL_CAP}")
        try:
            spec = resolve_size(period.matrices[unit.name], n_full)
            P = build_matrix(spec, base_dir=plan.base_dir)
        except ValueError as exc:
            raise SchemaError(f"period {t}, {unit.name}: {exc}") from None
        if P.shape[0] != n_full:
            raise SchemaError(f"period {t}, {unit.name}: matrix has {P.shape[0]} states, expected {n_full}")
        stream = SeedStream(master, t, unit.stream)
        if column.is_categorical:
            outcome = pram_apply(column, P, stream)
        else:
            outcome = apply_with_dropouts(column, P, stream)
        if codec is not None:
            for part in codec.decode(outcome.anonymized):
                anonymized[part.name] = part
        else:
            anonymized[unit.name] = outcome.anonymized

        path = ledger_path(out_dir, unit.name)
        ledger = ReleaseLedger.load(path) if path.exists() else ReleaseLedger()
        spec_d = spec_to_dict(spec)
        try:
            if revise:
                ledger = ledger.revise_release(t, outcome.matrix, outcome.active_count, spec_d)
            else:
                ledger = ledger.record_release(t, outcome.matrix, outcome.active_count, spec_d)
        except NonMonotonePeriodError as exc:
            raise NonMonotonePeriodError(f"{unit.name}: {exc} (use --revise to replace a past release)") from None
        rec = ledger.record(t)
        releases.append(UnitRelease(unit, spec_d, rec.n_t, outcome.active_count, rec.beta_t, ledger))

    text = _render_csv(plan, panel, row_slots, columns, anonymized, t, master, releases)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"release_t{t}.csv"
    csv_path.write_bytes(text.encode("utf-8"))
    paths = {}
    for r in releases:
        paths[r.unit.name] = ledger_path(out_dir, r.unit.name)
        r.ledger.save(paths[r.unit.name])
    return ProtectResult(t, csv_path, paths, releases)


def _render_csv(plan, panel, row_slots, original, anonymized, t, master, releases) -> str:
    buf = io.StringIO()
    nl = panel.lineterminator
    buf.write(f"# bistochastic release period={t} seed_fingerprint={seed_fingerprint(master)}{nl}")
    for r in releases:
        buf.write(f"# {r.unit.name}: spec={json.dumps(r.spec, sort_keys=True)} n_t={r.n_t} beta_t={r.beta_t:.15g}{nl}")
    writer = csv.writer(buf, lineterminator=nl)
    writer.writerow(panel.fieldnames)
    header = panel.fieldnames
    cols = {a.name: header.index(a.name) for a in plan.attributes}
    for row, s in zip(panel.rows, row_slots):
        out = list(row)
        for name, k in cols.items():
            col = anonymized[name]
            if not col.present[s]:
                continue
            if col.is_categorical:
                out[k] = col.catalog[col.values[s]]
            elif col.values[s] != original[name].values[s]:
                out[k] = repr(float(col.values[s]))
        writer.writerow(out)
    return buf.getvalue()
