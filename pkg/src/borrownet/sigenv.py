"""Signature environment: callable items, trait/associated-type fact tables,
struct field tables, and the JSON loader.

The on-disk format is a single JSON document with top-level keys ``types``,
``structs``, ``impls``, ``assoc``, ``fns``; unknown keys anywhere are
rejected so typos surface early. Method receivers are expected to be
pre-desugared to ordinary first parameters (``&self`` becomes ``&'a Self``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .typesys import (
    HOOK,
    MUT,
    PRIMITIVES,
    SHR,
    AssocTy,
    BaseTy,
    FieldTy,
    RefTy,
    SliceTy,
    TupleTy,
    Ty,
    TyApp,
    TyVar,
    Universe,
    base_names,
    components,
    fv_lifetimes,
    fv_typevars,
    hookify,
    is_ground,
    parse_type,
    render,
    subst_types,
)

COPY = "Copy"
CLONE = "Clone"


class SigError(Exception):
    """Malformed signature file; message carries the offending location."""


# ---------------------------------------------------------------------------
# Obligations


@dataclass(frozen=True)
class TraitBound:
    ty: Ty
    trait: str

    def render(self) -> str:
        return f"{render(self.ty)}: {self.trait}"


@dataclass(frozen=True)
class AssocEq:
    ty: Ty
    trait: str
    name: str
    target: Ty

    def render(self) -> str:
        return f"<{render(self.ty)} as {self.trait}>::{self.name} == {render(self.target)}"


@dataclass(frozen=True)
class Outlives:
    longer: str
    shorter: str

    def render(self) -> str:
        return f"{self.longer}: {self.shorter}"


@dataclass(frozen=True)
class FieldEq:
    """Equality emitted by unification against a field projection; discharged
    through the struct field table, never written in signatures."""

    ty: Ty
    field: str
    target: Ty

    def render(self) -> str:
        return f"{render(self.ty)}.{self.field} == {render(self.target)}"


Obligation = TraitBound | AssocEq | Outlives | FieldEq


# ---------------------------------------------------------------------------
# Items and fact tables


@dataclass(frozen=True)
class CallableItem:
    """A function or desugared method; 0-ary items act as value constructors."""

    name: str
    generics: tuple = ()
    lifetimes: tuple = ()
    params: tuple = ()
    ret: Ty | None = None
    bounds: tuple = ()

    def check_scoping(self) -> None:
        tvars = set()
        lifes = set()
        for t in self.params + ((self.ret,) if self.ret is not None else ()):
            tvars |= fv_typevars(t)
            lifes |= fv_lifetimes(t)
        for b in self.bounds:
            if isinstance(b, TraitBound):
                tvars |= fv_typevars(b.ty)
            elif isinstance(b, AssocEq):
                tvars |= fv_typevars(b.ty) | fv_typevars(b.target)
            elif isinstance(b, Outlives):
                lifes |= {b.longer, b.shorter}
        undeclared_t = tvars - set(self.generics)
        if undeclared_t:
            raise SigError(f"fn {self.name}: undeclared type variable {sorted(undeclared_t)[0]}")
        undeclared_l = lifes - set(self.lifetimes)
        if undeclared_l:
            raise SigError(f"fn {self.name}: undeclared lifetime {sorted(undeclared_l)[0]}")


@dataclass(frozen=True)
class FactTables:
    """Ground facts the entailment judgment consults."""

    impls: frozenset = frozenset()  # of (Ty, trait name)
    assoc: tuple = ()               # sorted ((Ty, trait, name), Ty) pairs
    fields: tuple = ()              # sorted ((struct name, field), Ty) pairs
    struct_order: tuple = ()        # sorted (struct name, (field, ...)) pairs

    def assoc_lookup(self, ty: Ty, trait: str, name: str) -> Ty | None:
        return dict(self.assoc).get((ty, trait, name))

    def field_lookup(self, struct: str, fname: str) -> Ty | None:
        return dict(self.fields).get((struct, fname))

    def struct_fields(self, struct: str) -> tuple:
        return dict(self.struct_order).get(struct, ())

    def structs(self) -> dict:
        out: dict = {}
        for name, fnames in self.struct_order:
            out[name] = {f: self.field_lookup(name, f) for f in fnames}
        return out

    def has_impl(self, ty: Ty, trait: str) -> bool:
        return (ty, trait) in self.impls

    def with_impls(self, extra: Iterable) -> "FactTables":
        return FactTables(
            impls=self.impls | frozenset(extra),
            assoc=self.assoc,
            fields=self.fields,
            struct_order=self.struct_order,
        )


@dataclass(frozen=True)
class SigEnv:
    items: tuple
    facts: FactTables
    base_types: frozenset

    def item(self, name: str) -> CallableItem:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)


def is_copy(ty: Ty, facts: FactTables) -> bool:
    """Table lookup; primitive and structural Copy facts are preloaded."""
    return facts.has_impl(ty, COPY)


# ---------------------------------------------------------------------------
# Loading


_TOP_KEYS = {"types", "structs", "impls", "assoc", "fns"}
_FN_KEYS = {"name", "generics", "lifetimes", "params", "ret", "bounds"}
_IMPL_KEYS = {"type", "trait"}
_ASSOC_KEYS = {"type", "trait", "name", "target"}


def _reject_unknown(mapping: Mapping, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise SigError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def _parse_ground(text: str, declared: set, where: str) -> Ty:
    try:
        t = parse_type(text)
    except Exception as e:
        raise SigError(f"{where}: {e}") from e
    lifes = fv_lifetimes(t)
    named = {l for l in lifes if l}
    if named:
        raise SigError(f"{where}: undeclared lifetime {sorted(named)[0]}")
    t = hookify(_fill_elided(t, lambda: HOOK))
    missing = base_names(t) - declared
    if missing:
        raise SigError(f"{where}: undeclared type {sorted(missing)[0]}")
    if not is_ground(t):
        raise SigError(f"{where}: type {render(t)} is not ground")
    return t


def _fill_elided(t: Ty, fresh) -> Ty:
    if isinstance(t, RefTy):
        life = t.life if t.life else fresh()
        return RefTy(t.qual, life, _fill_elided(t.inner, fresh))
    if isinstance(t, TyApp):
        return TyApp(t.head, tuple(_fill_elided(a, fresh) for a in t.args))
    if isinstance(t, TupleTy):
        return TupleTy(tuple(_fill_elided(e, fresh) for e in t.elems))
    if isinstance(t, SliceTy):
        return SliceTy(_fill_elided(t.elem, fresh))
    if isinstance(t, AssocTy):
        return AssocTy(_fill_elided(t.base, fresh), t.trait, t.name)
    if isinstance(t, FieldTy):
        return FieldTy(_fill_elided(t.base, fresh), t.field)
    return t


def _vars_from_generics(t: Ty, generics: set) -> Ty:
    if isinstance(t, BaseTy) and t.name in generics:
        return TyVar(t.name)
    if isinstance(t, TyApp):
        if t.head.name in generics:
            raise SigError(f"generic {t.head.name} used as a type constructor")
        return TyApp(t.head, tuple(_vars_from_generics(a, generics) for a in t.args))
    if isinstance(t, TupleTy):
        return TupleTy(tuple(_vars_from_generics(e, generics) for e in t.elems))
    if isinstance(t, SliceTy):
        return SliceTy(_vars_from_generics(t.elem, generics))
    if isinstance(t, RefTy):
        return RefTy(t.qual, t.life, _vars_from_generics(t.inner, generics))
    if isinstance(t, AssocTy):
        return AssocTy(_vars_from_generics(t.base, generics), t.trait, t.name)
    if isinstance(t, FieldTy):
        return FieldTy(_vars_from_generics(t.base, generics), t.field)
    return t


def _no_bare_slice(t: Ty, where: str) -> None:
    if isinstance(t, SliceTy):
        raise SigError(f"{where}: unsized slice type {render(t)} must live behind a reference")


def _parse_bound(text: str, where: str) -> list:
    text = text.strip()
    if "==" in text:
        left, right = (s.strip() for s in text.split("==", 1))
        lt = parse_type(left)
        if not isinstance(lt, AssocTy):
            raise SigError(f"{where}: equality bound must project an associated type")
        rt = parse_type(right)
        return [AssocEq(lt.base, lt.trait, lt.name, rt)]
    if text.startswith("'"):
        if ":" not in text:
            raise SigError(f"{where}: malformed lifetime bound {text!r}")
        left, right = (s.strip() for s in text.split(":", 1))
        if not right.startswith("'"):
            raise SigError(f"{where}: malformed lifetime bound {text!r}")
        return [Outlives(left, right)]
    if ":" not in text:
        raise SigError(f"{where}: malformed bound {text!r}")
    left, right = (s.strip() for s in text.split(":", 1))
    ty = parse_type(left)
    out = []
    for trait in (p.strip() for p in right.split("+")):
        if not trait.isidentifier():
            raise SigError(f"{where}: malformed trait name {trait!r}")
        out.append(TraitBound(ty, trait))
    return out


def _load_fn(entry: Mapping, declared: set, where: str) -> CallableItem:
    _reject_unknown(entry, _FN_KEYS, where)
    if "name" not in entry:
        raise SigError(f"{where}: missing fn name")
    name = entry["name"]
    generics = tuple(entry.get("generics", ()))
    lifetimes = list(entry.get("lifetimes", ()))
    for l in lifetimes:
        if not (l.startswith("'") and len(l) > 1):
            raise SigError(f"{where}: malformed lifetime {l!r}")

    counter = [0]

    def fresh_life() -> str:
        while True:
            cand = f"'e{counter[0]}"
            counter[0] += 1
            if cand not in lifetimes:
                lifetimes.append(cand)
                return cand

    def resolve(text: str, slot: str, output: bool = False) -> Ty:
        try:
            t = parse_type(text)
        except Exception as e:
            raise SigError(f"{where}.{slot}: {e}") from e
        if output:
            declared_input = [l for l in lifetimes]

            def ret_life() -> str:
                if len(declared_input) == 1:
                    return declared_input[0]
                raise SigError(
                    f"{where}.{slot}: elided return lifetime needs exactly one "
                    f"input lifetime"
                )

            t = _fill_elided(t, ret_life)
        else:
            t = _fill_elided(t, fresh_life)
        t = _vars_from_generics(t, set(generics))
        missing = base_names(t) - declared
        if missing:
            raise SigError(f"{where}.{slot}: undeclared type {sorted(missing)[0]}")
        _no_bare_slice(t, f"{where}.{slot}")
        return t

    params = tuple(
        resolve(p, f"params[{i}]") for i, p in enumerate(entry.get("params", ()))
    )
    ret_text = entry.get("ret")
    ret = resolve(ret_text, "ret", output=True) if ret_text is not None else None

    bounds: list = []
    for i, b in enumerate(entry.get("bounds", ())):
        for atom in _parse_bound(b, f"{where}.bounds[{i}]"):
            if isinstance(atom, (TraitBound, AssocEq)):
                fix = lambda t: _vars_from_generics(t, set(generics))
                if isinstance(atom, TraitBound):
                    atom = TraitBound(fix(atom.ty), atom.trait)
                else:
                    atom = AssocEq(fix(atom.ty), atom.trait, atom.name, fix(atom.target))
            bounds.append(atom)

    item = CallableItem(name, generics, tuple(lifetimes), params, ret, tuple(bounds))
    item.check_scoping()
    return item


def load_sigenv(path: str | Path) -> SigEnv:
    """Load and validate a signature file; all invariants hold on return."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    return env_from_mapping(doc, where=str(path))


def env_from_mapping(doc: Mapping, where: str = "<mapping>") -> SigEnv:
    if not isinstance(doc, Mapping):
        raise SigError(f"{where}: top level must be an object")
    _reject_unknown(doc, _TOP_KEYS, where)

    type_names = list(doc.get("types", ()))
    structs_doc = doc.get("structs", {})
    declared = set(type_names) | set(structs_doc)
    for n in sorted(declared):
        if not n.isidentifier():
            raise SigError(f"{where}: malformed type name {n!r}")

    fields: dict = {}
    order: dict = {}
    for sname, fmap in structs_doc.items():
        if not isinstance(fmap, Mapping):
            raise SigError(f"{where}.structs.{sname}: expected an object")
        names = []
        for fname, ftext in fmap.items():
            fty = _parse_ground(ftext, declared, f"{where}.structs.{sname}.{fname}")
            _no_bare_slice(fty, f"{where}.structs.{sname}.{fname}")
            fields[(sname, fname)] = fty
            names.append(fname)
        order[sname] = tuple(names)

    impls: set = set()
    for i, entry in enumerate(doc.get("impls", ())):
        here = f"{where}.impls[{i}]"
        _reject_unknown(entry, _IMPL_KEYS, here)
        ty = _parse_ground(entry["type"], declared, here)
        trait = entry["trait"]
        impls.add((ty, trait))
        if trait == COPY:
            impls.add((ty, CLONE))  # Copy requires Clone in the object language

    assoc: dict = {}
    for i, entry in enumerate(doc.get("assoc", ())):
        here = f"{where}.assoc[{i}]"
        _reject_unknown(entry, _ASSOC_KEYS, here)
        ty = _parse_ground(entry["type"], declared, here)
        target = _parse_ground(entry["target"], declared, here)
        key = (ty, entry["trait"], entry["name"])
        if key in assoc:
            raise SigError(
                f"{here}: duplicate associated type for "
                f"<{render(ty)} as {entry['trait']}>::{entry['name']}"
            )
        assoc[key] = target

    items: list = []
    seen = set()
    for i, entry in enumerate(doc.get("fns", ())):
        item = _load_fn(entry, declared, f"{where}.fns[{i}]")
        if item.name in seen:
            raise SigError(f"{where}.fns[{i}]: duplicate fn {item.name}")
        seen.add(item.name)
        items.append(item)

    # Primitive Copy/Clone facts are ground truth; user facts only ever add.
    for n in sorted(declared):
        if n in PRIMITIVES:
            impls.add((BaseTy(n), COPY))
            impls.add((BaseTy(n), CLONE))

    facts = FactTables(
        impls=frozenset(impls),
        assoc=tuple(sorted(assoc.items(), key=lambda kv: (render(kv[0][0]), kv[0][1], kv[0][2]))),
        fields=tuple(sorted(fields.items())),
        struct_order=tuple(sorted(order.items())),
    )
    base_types = frozenset(BaseTy(n) for n in declared)
    return SigEnv(tuple(sorted(items, key=lambda it: it.name)), facts, base_types)


def env_to_mapping(env: SigEnv) -> dict:
    """Inverse of loading, up to key order; used by the round-trip tests."""
    structs = {
        name: {f: render(ty) for f, ty in m.items()}
        for name, m in env.facts.structs().items()
    }
    prim = set()
    for name in sorted(b.name for b in env.base_types):
        if name in PRIMITIVES:
            prim.add((BaseTy(name), COPY))
            prim.add((BaseTy(name), CLONE))
    impls = [
        {"type": render(t), "trait": tr}
        for (t, tr) in sorted(env.facts.impls - frozenset(prim), key=lambda p: (render(p[0]), p[1]))
    ]
    assoc = [
        {"type": render(t), "trait": tr, "name": n, "target": render(tgt)}
        for ((t, tr, n), tgt) in env.facts.assoc
    ]
    fns = []
    for it in env.items:
        fns.append(
            {
                "name": it.name,
                "generics": list(it.generics),
                "lifetimes": list(it.lifetimes),
                "params": [render(p) for p in it.params],
                "ret": render(it.ret) if it.ret is not None else None,
                "bounds": [b.render() for b in it.bounds],
            }
        )
    return {
        "types": sorted(b.name for b in env.base_types if b.name not in dict(env.facts.struct_order)),
        "structs": structs,
        "impls": impls,
        "assoc": assoc,
        "fns": fns,
    }


# ---------------------------------------------------------------------------
# Derived facts and projection normalization


def derive_builtin_facts(universe: Universe, facts: FactTables) -> FactTables:
    """Extend the impl table with object-language ground truth over the
    universe: shared references are Copy, tuples of Copy components are Copy,
    and everything Copy is Clone."""
    impls = set(facts.impls)
    changed = True
    while changed:
        changed = False
        for m in universe:
            if (m, COPY) in impls:
                if (m, CLONE) not in impls:
                    impls.add((m, CLONE))
                    changed = True
                continue
            copy = False
            if isinstance(m, BaseTy) and m.name in PRIMITIVES:
                copy = True
            elif isinstance(m, RefTy) and m.qual == SHR:
                copy = True
            elif isinstance(m, TupleTy) and all((e, COPY) in impls for e in m.elems):
                copy = True
            if copy:
                impls.add((m, COPY))
                impls.add((m, CLONE))
                changed = True
    return facts.with_impls(impls)


def normalize_projections(t: Ty, facts: FactTables) -> Ty | None:
    """Resolve Assoc/Field projections bottom-up through the fact tables.

    Returns None when some projection has no fact, which callers treat as a
    failed instantiation rather than an error.
    """
    if isinstance(t, AssocTy):
        base = normalize_projections(t.base, facts)
        if base is None:
            return None
        return facts.assoc_lookup(base, t.trait, t.name)
    if isinstance(t, FieldTy):
        base = normalize_projections(t.base, facts)
        if base is None or not isinstance(base, BaseTy):
            return None
        return facts.field_lookup(base.name, t.field)
    if isinstance(t, TyApp):
        args = [normalize_projections(a, facts) for a in t.args]
        if any(a is None for a in args):
            return None
        return TyApp(t.head, tuple(args))
    if isinstance(t, TupleTy):
        elems = [normalize_projections(e, facts) for e in t.elems]
        if any(e is None for e in elems):
            return None
        return TupleTy(tuple(elems))
    if isinstance(t, SliceTy):
        inner = normalize_projections(t.elem, facts)
        return None if inner is None else SliceTy(inner)
    if isinstance(t, RefTy):
        inner = normalize_projections(t.inner, facts)
        return None if inner is None else RefTy(t.qual, t.life, inner)
    return t
