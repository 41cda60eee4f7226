"""
Release plan: a single YAML document describing a longitudinal release.

Example::

    master_seed: 20240101
    id_column: id              # optional, default "id"
    output_dir: out            # relative to this file
    attributes:
      - {name: status, kind: categorical, catalog: [employed, unemployed, inactive]}
      - {name: region, kind: categorical, catalog: [north, south]}
      - {name: income, kind: numerical}
    joint_groups:
      - {name: status_region, attributes: [status, region]}
    periods:
      - t: 1
        input: data/wave1.csv
        matrices:
          status_region: {type: dp_circulant, epsilon: 1.0}
          income: {type: entropy_target, beta: 0.3}
    targets:
      per_period: [0.2, 0.2]
      beta_L: 0.25
      convention: t2

Matrix entries are keyed by attribute name, or by group name for attributes
encoded jointly. ``n`` may be omitted from a matrix entry; it is taken from
the catalog size, the joint catalog size, or (numerical attributes) the
number of individuals in the first period.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import SchemaError
from .ledger import Convention
from .matrices import MatrixSpec, spec_from_dict


@dataclass(frozen=True)
class AttributeDecl:
    name: str
    kind: str
    catalog: tuple[str, ...] | None = None


@dataclass(frozen=True)
class JointGroup:
    name: str
    attributes: tuple[str, ...]


@dataclass(frozen=True)
class PeriodPlan:
    t: int
    input: Path
    matrices: dict[str, MatrixSpec]


@dataclass(frozen=True)
class Targets:
    per_period: tuple[float, ...] = ()
    beta_L: float | None = None
    convention: Convention = Convention.FROM_SECOND


@dataclass(frozen=True)
class Unit:
    """Something randomized with one matrix: a single attribute or a joint group."""

    name: str
    attributes: tuple[str, ...]
    stream: int
    joint: bool = False


@dataclass(frozen=True)
class ReleasePlan:
    attributes: tuple[AttributeDecl, ...]
    periods: tuple[PeriodPlan, ...]
    master_seed: int
    joint_groups: tuple[JointGroup, ...] = ()
    id_column: str = "id"
    output_dir: Path = Path("out")
    targets: Targets = field(default_factory=Targets)
    base_dir: Path = Path(".")

    def attribute(self, name: str) -> AttributeDecl:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"undeclared attribute {name!r}")

    def period(self, t: int) -> PeriodPlan:
        for p in self.periods:
            if p.t == t:
                return p
        raise SchemaError(f"period {t} is not in the release plan")

    @property
    def first_period(self) -> PeriodPlan:
        return min(self.periods, key=lambda p: p.t)

    def units(self) -> list[Unit]:
        """Randomization units in declaration order; stream ids follow attribute positions."""
        position = {a.name: i for i, a in enumerate(self.attributes)}
        grouped = {name: g for g in self.joint_groups for name in g.attributes}
        out, seen = [], set()
        for a in self.attributes:
            g = grouped.get(a.name)
            if g is None:
                out.append(Unit(a.name, (a.name,), position[a.name]))
            elif g.name not in seen:
                seen.add(g.name)
                out.append(Unit(g.name, g.attributes, position[g.attributes[0]], joint=True))
        return out


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SchemaError(f"{where}: missing {key!r}")
    return d[key]


def plan_from_dict(d: dict, base_dir: Path = Path(".")) -> ReleasePlan:
    if not isinstance(d, dict):
        raise SchemaError("release plan must be a mapping")
    attrs = []
    for a in _require(d, "attributes", "plan"):
        kind = _require(a, "kind", "attribute")
        if kind not in ("categorical", "numerical"):
            raise SchemaError(f"attribute {a.get('name')!r}: kind must be categorical or numerical")
        catalog = a.get("catalog")
        if kind == "categorical":
            if not catalog:
                raise SchemaError(f"categorical attribute {a.get('name')!r} needs a catalog")
            catalog = tuple(str(c) for c in catalog)
            if len(set(catalog)) != len(catalog):
                raise SchemaError(f"attribute {a.get('name')!r}: duplicate catalog labels")
        elif catalog is not None:
            raise SchemaError(f"numerical attribute {a.get('name')!r} cannot have a catalog")
        attrs.append(AttributeDecl(str(_require(a, "name", "attribute")), kind, catalog))
    names = [a.name for a in attrs]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate attribute names")
    kinds = {a.name: a.kind for a in attrs}

    groups, used = [], set()
    for g in d.get("joint_groups") or ():
        members = tuple(str(m) for m in _require(g, "attributes", "joint group"))
        gname = str(g.get("name") or "+".join(members))
        for m in members:
            if m not in kinds:
                raise SchemaError(f"joint group {gname!r} references undeclared attribute {m!r}")
            if kinds[m] != "categorical":
                raise SchemaError(f"joint group {gname!r}: {m!r} is not categorical")
            if m in used:
                raise SchemaError(f"attribute {m!r} belongs to more than one joint group")
            used.add(m)
        if gname in kinds:
            raise SchemaError(f"joint group name {gname!r} clashes with an attribute")
        groups.append(JointGroup(gname, members))

    unit_names = {g.name for g in groups} | (set(names) - used)
    periods = []
    for p in _require(d, "periods", "plan"):
        t = int(_require(p, "t", "period"))
        matrices = {}
        for key, spec in (p.get("matrices") or {}).items():
            if key not in unit_names:
                raise SchemaError(f"period {t}: matrix for unknown attribute or group {key!r}")
            try:
                matrices[key] = spec_from_dict(spec)
            except ValueError as exc:
                raise SchemaError(f"period {t}, {key}: {exc}") from None
        missing = unit_names - matrices.keys()
        if missing:
            raise SchemaError(f"period {t}: no matrix for {sorted(missing)}")
        periods.append(PeriodPlan(t, Path(_require(p, "input", f"period {t}")), matrices))
    ts = [p.t for p in periods]
    if not ts or len(set(ts)) != len(ts) or min(ts) < 1:
        raise SchemaError("periods must be distinct positive integers")

    tg = d.get("targets") or {}
    targets = Targets(
        per_period=tuple(float(x) for x in tg.get("per_period") or ()),
        beta_L=None if tg.get("beta_L") is None else float(tg["beta_L"]),
        convention=Convention.parse(tg.get("convention", "t2")),
    )
    return ReleasePlan(
        attributes=tuple(attrs),
        periods=tuple(sorted(periods, key=lambda p: p.t)),
        master_seed=int(_require(d, "master_seed", "plan")),
        joint_groups=tuple(groups),
        id_column=str(d.get("id_column", "id")),
        output_dir=Path(d.get("output_dir", "out")),
        targets=targets,
        base_dir=base_dir,
    )


def load_plan(path) -> ReleasePlan:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        d = yaml.safe_load(fh)
    return plan_from_dict(d, base_dir=path.parent)
