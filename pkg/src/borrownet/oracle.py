"""Independent interpreter for the statement-level resource semantics of the
object language: ownership transfer, borrowing, reborrowing, projections,
dereference of Copy data, and explicit borrow termination under a properly
nested (last-in, first-out) discipline.

This module is the differential-testing oracle for the net engine. It is
written directly against the informal ownership rules and deliberately shares
no code with the net model or the net builder beyond the type grammar and the
signature environment; the dependency review test enforces that.

Statements operate on named bindings. Each binding owns a value of a ground
type and sits in one of three modes: usable (``own``), frozen under shared
borrows (``frz``), or blocked under an exclusive borrow (``blk``). A stack of
borrow records tracks outstanding borrows; a borrow may end only while its
record is on top, and an owner thaws when its last shared borrow ends.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Iterator

from .sigenv import (
    AssocEq,
    CLONE,
    COPY,
    FactTables,
    Outlives,
    SigEnv,
    TraitBound,
    is_copy,
    normalize_projections,
)
from .typesys import (
    HOOK,
    MUT,
    SHR,
    BaseTy,
    RefTy,
    Ty,
    Universe,
    fv_lifetimes,
    hookify,
    is_ground,
    render,
    subst_types,
)

OWN = "own"
FRZ = "frz"
BLK = "blk"


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class Call:
    fname: str
    tsub: tuple = ()  # (generic, Ty) in declaration order
    args: tuple = ()
    result: str | None = None


@dataclass(frozen=True)
class Drop:
    name: str


@dataclass(frozen=True)
class Borrow:
    qual: str  # shr | mut
    name: str
    result: str | None = None


@dataclass(frozen=True)
class Reborrow:
    qual: str
    name: str
    result: str | None = None


@dataclass(frozen=True)
class ProjMove:
    name: str
    fname: str
    result: str | None = None


@dataclass(frozen=True)
class ProjRef:
    name: str
    fname: str
    result: str | None = None


@dataclass(frozen=True)
class Deref:
    name: str
    result: str | None = None


@dataclass(frozen=True)
class DupCopy:
    name: str
    result: str | None = None


@dataclass(frozen=True)
class DupClone:
    name: str
    result: str | None = None


Statement = Call | Drop | Borrow | Reborrow | ProjMove | ProjRef | Deref | DupCopy | DupClone


# ---------------------------------------------------------------------------
# State


@dataclass(frozen=True)
class Binding:
    ty: Ty
    mode: str = OWN
    region: int | None = None  # region a reference binding is valid in


@dataclass(frozen=True)
class Record:
    kind: str  # shr | mut
    owner: str
    borrower: str
    region: int


@dataclass(frozen=True)
class OracleState:
    bindings: tuple = ()  # (name, Binding) in creation order
    records: tuple = ()  # top first
    next_region: int = 0
    next_name: int = 0

    def binding(self, name: str) -> Binding | None:
        return dict(self.bindings).get(name)

    def live_regions(self) -> frozenset:
        return frozenset(r.region for r in self.records)

    def names(self) -> tuple:
        return tuple(n for n, _ in self.bindings)


@dataclass(frozen=True)
class OracleEnv:
    env: SigEnv
    universe: Universe
    facts: FactTables


@dataclass(frozen=True)
class StepOutcome:
    ok: bool
    state: OracleState | None = None
    reason: str | None = None
    new_name: str | None = None


def initial_state() -> OracleState:
    return OracleState()


def _reject(reason: str) -> StepOutcome:
    return StepOutcome(False, None, reason)


def _fresh_name(state: OracleState) -> tuple:
    n = state.next_name
    return f"n{n}", n + 1


def _bind(state: OracleState, name: str | None, binding: Binding) -> tuple:
    nxt = state.next_name
    if name is None:
        name, nxt = _fresh_name(state)
    live = dict(state.bindings)
    if name in live:
        raise ValueError(f"binding {name} already live")
    return name, replace(state, bindings=state.bindings + ((name, binding),), next_name=nxt)


def _unbind(state: OracleState, name: str) -> OracleState:
    return replace(state, bindings=tuple((n, b) for n, b in state.bindings if n != name))


def _set_mode(state: OracleState, name: str, mode: str) -> OracleState:
    out = tuple((n, replace(b, mode=mode)) if n == name else (n, b) for n, b in state.bindings)
    return replace(state, bindings=out)


def _usable_ref(state: OracleState, b: Binding) -> bool:
    """A reference may be read through only while its region is active."""
    return b.region is not None and b.region in state.live_regions()


# ---------------------------------------------------------------------------
# Call legality


def _forced_regions(scheme: Ty, region: int | None, forced: dict) -> bool:
    """Bind every lifetime occurring in a parameter scheme to the argument's
    region slot (values carry a single region view). False on conflict."""
    for life in sorted(fv_lifetimes(scheme)):
        if region is None:
            return False
        if life in forced and forced[life] != region:
            return False
        forced[life] = region
    return True


def _call_plan(u: OracleEnv, state: OracleState, stmt: Call):
    """Validate a call and compute its effects; returns (plan dict | None,
    reason). Independent re-derivation of applicability: explicit generic
    instantiation, exact type match on usable bindings, table lookups for
    trait and associated-type requirements, and region ordering by record
    depth for lifetime requirements."""
    try:
        item = u.env.item(stmt.fname)
    except KeyError:
        return None, f"unknown fn {stmt.fname}"
    tmap = dict(stmt.tsub)
    if tuple(tmap) != tuple(item.generics):
        return None, "generic instantiation mismatch"
    for ty in tmap.values():
        if ty not in u.universe:
            return None, "instantiation outside the universe"
    if len(stmt.args) != len(item.params):
        return None, "arity mismatch"
    if len(set(stmt.args)) != len(stmt.args):
        return None, "one binding used for two parameters"

    outlives: list = []
    for b in item.bounds:
        if isinstance(b, TraitBound):
            ty = normalize_projections(subst_types(b.ty, tmap), u.facts)
            if ty is None or not u.facts.has_impl(ty, b.trait):
                return None, f"unsatisfied bound {b.render()}"
        elif isinstance(b, AssocEq):
            ty = normalize_projections(subst_types(b.ty, tmap), u.facts)
            target = normalize_projections(subst_types(b.target, tmap), u.facts)
            if ty is None or target is None or u.facts.assoc_lookup(ty, b.trait, b.name) != target:
                return None, f"unsatisfied bound {b.render()}"
        elif isinstance(b, Outlives):
            outlives.append(b)

    forced: dict = {}
    moved: list = []
    for scheme, arg in zip(item.params, stmt.args):
        resolved = normalize_projections(subst_types(scheme, tmap), u.facts)
        if resolved is None or not is_ground(resolved):
            return None, "parameter type does not resolve"
        ground = hookify(resolved)
        if ground not in u.universe:
            return None, "parameter type outside the universe"
        b = state.binding(arg)
        if b is None:
            return None, f"{arg} is not live"
        if b.mode != OWN:
            return None, f"{arg} is not usable (mode {b.mode})"
        if b.ty != ground:
            return None, f"{arg} has type {render(b.ty)}, expected {render(ground)}"
        if fv_lifetimes(ground):
            if not _usable_ref(state, b):
                return None, f"{arg} outlived its region"
        if not _forced_regions(resolved, b.region, forced):
            return None, "conflicting region requirements"
        if not (isinstance(ground, RefTy) or is_copy(ground, u.facts)):
            moved.append(arg)

    ret_ground = None
    ret_region_life = None
    if item.ret is not None:
        resolved = normalize_projections(subst_types(item.ret, tmap), u.facts)
        if resolved is None or not is_ground(resolved):
            return None, "return type does not resolve"
        ret_ground = hookify(resolved)
        if ret_ground not in u.universe:
            return None, "return type outside the universe"
        if fv_lifetimes(ret_ground):
            ret_region_life = _outermost_life(resolved)

    # Region assignment for lifetimes the arguments did not force: active
    # record regions (outermost choice first by scanning top to bottom), then
    # one fresh region.
    unforced = [l for l in item.lifetimes if l not in forced]
    pool: list = []
    for r in state.records:
        if r.region not in pool:
            pool.append(r.region)
    pool.append(state.next_region)

    def ok_outlives(assign: dict) -> bool:
        for b in outlives:
            l1, l2 = assign.get(b.longer), assign.get(b.shorter)
            if l1 is None or l2 is None:
                return False
            if l1 == l2:
                continue
            ds = [i for i, r in enumerate(state.records) if r.region == l1]
            dt = [i for i, r in enumerate(state.records) if r.region == l2]
            if not ds or not dt or not ds[0] > dt[0]:
                return False
        return True

    chosen = None
    for pick in product(pool, repeat=len(unforced)):
        assign = dict(forced)
        assign.update(zip(unforced, pick))
        if ok_outlives(assign):
            chosen = assign
            break
    if chosen is None:
        return None, "no region assignment satisfies the lifetime bounds"

    plan = {
        "moved": moved,
        "ret": ret_ground,
        "ret_region": chosen.get(ret_region_life) if ret_region_life else None,
        "fresh_region_used": any(v == state.next_region for v in chosen.values()),
    }
    return plan, None


def _outermost_life(t: Ty) -> str | None:
    if isinstance(t, RefTy):
        return t.life
    from .typesys import components

    for c in components(t):
        life = _outermost_life(c)
        if life is not None:
            return life
    return None


# ---------------------------------------------------------------------------
# Stepping


def step(u: OracleEnv, state: OracleState, stmt: Statement) -> StepOutcome:
    """Apply one statement; rejection is a value carrying the failed
    precondition, never an exception."""
    if isinstance(stmt, Call):
        return _step_call(u, state, stmt)
    if isinstance(stmt, Drop):
        return _step_drop(u, state, stmt)
    if isinstance(stmt, Borrow):
        return _step_borrow(u, state, stmt)
    if isinstance(stmt, Reborrow):
        return _step_reborrow(u, state, stmt)
    if isinstance(stmt, ProjMove):
        return _step_projmove(u, state, stmt)
    if isinstance(stmt, ProjRef):
        return _step_projref(u, state, stmt)
    if isinstance(stmt, Deref):
        return _step_deref(u, state, stmt)
    if isinstance(stmt, DupCopy):
        return _step_dup(u, state, stmt, COPY)
    if isinstance(stmt, DupClone):
        return _step_dup(u, state, stmt, CLONE)
    return _reject(f"unknown statement {stmt!r}")


def _step_call(u: OracleEnv, state: OracleState, stmt: Call) -> StepOutcome:
    plan, reason = _call_plan(u, state, stmt)
    if plan is None:
        return _reject(reason)
    for arg in plan["moved"]:
        state = _unbind(state, arg)
    if plan["fresh_region_used"]:
        state = replace(state, next_region=state.next_region + 1)
    new_name = None
    if plan["ret"] is not None:
        binding = Binding(plan["ret"], OWN, plan["ret_region"])
        new_name, state = _bind(state, stmt.result, binding)
    return StepOutcome(True, state, new_name=new_name)


def _step_drop(u: OracleEnv, state: OracleState, stmt: Drop) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    rec = next((r for r in state.records if r.borrower == stmt.name), None)
    if rec is not None:
        if state.records[0] != rec:
            return _reject(f"{stmt.name} is not the most recent outstanding borrow")
        state = replace(state, records=state.records[1:])
        state = _unbind(state, stmt.name)
        owner_left = any(
            r.kind == SHR and r.owner == rec.owner for r in state.records
        )
        if rec.kind == MUT or not owner_left:
            if state.binding(rec.owner) is not None:
                state = _set_mode(state, rec.owner, OWN)
        return StepOutcome(True, state)
    if b.mode != OWN:
        return _reject(f"{stmt.name} is not usable (mode {b.mode})")
    if isinstance(b.ty, RefTy) and not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    return StepOutcome(True, _unbind(state, stmt.name))


def _step_borrow(u: OracleEnv, state: OracleState, stmt: Borrow) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    ref_ty = RefTy(stmt.qual, HOOK, b.ty)
    if ref_ty not in u.universe:
        return _reject(f"{render(ref_ty)} is outside the universe")
    if isinstance(b.ty, RefTy) and not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    region = state.next_region
    if stmt.qual == SHR:
        if b.mode == BLK:
            return _reject(f"{stmt.name} is exclusively borrowed")
        state = _set_mode(state, stmt.name, FRZ)
    else:
        if b.mode != OWN:
            return _reject(f"{stmt.name} is already borrowed")
        state = _set_mode(state, stmt.name, BLK)
    new_name, state = _bind(state, stmt.result, Binding(ref_ty, OWN, region))
    state = replace(
        state,
        records=(Record(stmt.qual, stmt.name, new_name, region),) + state.records,
        next_region=region + 1,
    )
    return StepOutcome(True, state, new_name=new_name)


def _step_reborrow(u: OracleEnv, state: OracleState, stmt: Reborrow) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    if not (isinstance(b.ty, RefTy) and b.ty.qual == MUT):
        return _reject(f"{stmt.name} is not an exclusive reference")
    if b.mode != OWN:
        return _reject(f"{stmt.name} is suspended or frozen")
    if not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    child_ty = b.ty if stmt.qual == MUT else RefTy(SHR, HOOK, b.ty.inner)
    if child_ty not in u.universe:
        return _reject(f"{render(child_ty)} is outside the universe")
    region = state.next_region
    state = _set_mode(state, stmt.name, BLK)
    new_name, state = _bind(state, stmt.result, Binding(child_ty, OWN, region))
    state = replace(
        state,
        records=(Record(MUT, stmt.name, new_name, region),) + state.records,
        next_region=region + 1,
    )
    return StepOutcome(True, state, new_name=new_name)


def _step_projmove(u: OracleEnv, state: OracleState, stmt: ProjMove) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    if b.mode != OWN:
        return _reject(f"{stmt.name} is not usable (mode {b.mode})")
    if not isinstance(b.ty, BaseTy):
        return _reject(f"{render(b.ty)} has no fields")
    fty = u.facts.field_lookup(b.ty.name, stmt.fname)
    if fty is None:
        return _reject(f"{render(b.ty)} has no field {stmt.fname}")
    state = _unbind(state, stmt.name)
    new_name, state = _bind(state, stmt.result, Binding(fty, OWN, None))
    return StepOutcome(True, state, new_name=new_name)


def _step_projref(u: OracleEnv, state: OracleState, stmt: ProjRef) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    if not isinstance(b.ty, RefTy):
        return _reject(f"{stmt.name} is not a reference")
    if b.mode != OWN:
        return _reject(f"{stmt.name} is suspended or frozen")
    if not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    inner = b.ty.inner
    if not isinstance(inner, BaseTy):
        return _reject(f"{render(inner)} has no fields")
    fty = u.facts.field_lookup(inner.name, stmt.fname)
    if fty is None:
        return _reject(f"{render(inner)} has no field {stmt.fname}")
    child_ty = RefTy(b.ty.qual, HOOK, fty)
    if child_ty not in u.universe:
        return _reject(f"{render(child_ty)} is outside the universe")
    if b.ty.qual == SHR:
        # The parent's frozen referent covers the field; no new record.
        new_name, state = _bind(state, stmt.result, Binding(child_ty, OWN, b.region))
        return StepOutcome(True, state, new_name=new_name)
    region = state.next_region
    state = _set_mode(state, stmt.name, BLK)
    new_name, state = _bind(state, stmt.result, Binding(child_ty, OWN, region))
    state = replace(
        state,
        records=(Record(MUT, stmt.name, new_name, region),) + state.records,
        next_region=region + 1,
    )
    return StepOutcome(True, state, new_name=new_name)


def _step_deref(u: OracleEnv, state: OracleState, stmt: Deref) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    if not (isinstance(b.ty, RefTy) and b.ty.qual == SHR):
        return _reject(f"{stmt.name} is not a shared reference")
    if b.mode != OWN:
        return _reject(f"{stmt.name} is suspended or frozen")
    if not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    inner = b.ty.inner
    if not is_copy(inner, u.facts):
        return _reject(f"{render(inner)} is not Copy")
    region = b.region if fv_lifetimes(inner) else None
    new_name, state = _bind(state, stmt.result, Binding(inner, OWN, region))
    return StepOutcome(True, state, new_name=new_name)


def _step_dup(u: OracleEnv, state: OracleState, stmt, trait: str) -> StepOutcome:
    b = state.binding(stmt.name)
    if b is None:
        return _reject(f"{stmt.name} is not live")
    if b.mode != OWN:
        return _reject(f"{stmt.name} is not usable (mode {b.mode})")
    if not u.facts.has_impl(b.ty, trait):
        return _reject(f"{render(b.ty)} is not {trait}")
    if isinstance(b.ty, RefTy) and not _usable_ref(state, b):
        return _reject(f"{stmt.name} outlived its region")
    new_name, state = _bind(state, stmt.result, Binding(b.ty, OWN, b.region))
    return StepOutcome(True, state, new_name=new_name)


# ---------------------------------------------------------------------------
# Action enumeration (abstract statements; used by trace generation and the
# differential driver)


def enabled_actions(u: OracleEnv, state: OracleState) -> list:
    """All statements currently accepted, abstracted to operand names and
    sorted deterministically."""
    out = []
    for stmt in _candidate_statements(u, state):
        if step(u, state, stmt).ok:
            out.append(_abstract(stmt))
    return sorted(set(out), key=repr)


def _candidate_statements(u: OracleEnv, state: OracleState) -> Iterator[Statement]:
    names = state.names()
    for n in names:
        yield Drop(n)
        yield Borrow(SHR, n)
        yield Borrow(MUT, n)
        yield Reborrow(SHR, n)
        yield Reborrow(MUT, n)
        yield Deref(n)
        yield DupCopy(n)
        yield DupClone(n)
        b = state.binding(n)
        struct = None
        if isinstance(b.ty, BaseTy):
            struct = b.ty.name
        elif isinstance(b.ty, RefTy) and isinstance(b.ty.inner, BaseTy):
            struct = b.ty.inner.name
        if struct is not None:
            for fname in u.facts.struct_fields(struct):
                if isinstance(b.ty, BaseTy):
                    yield ProjMove(n, fname)
                else:
                    yield ProjRef(n, fname)
    for item in u.env.items:
        axes = [u.universe.sorted for _ in item.generics]
        for pick in product(*axes):
            tsub = tuple(zip(item.generics, pick))
            arg_axes = [names for _ in item.params]
            for args in product(*arg_axes):
                yield Call(item.name, tsub, tuple(args))


def _abstract(stmt: Statement) -> tuple:
    if isinstance(stmt, Call):
        tsub = tuple((g, render(t)) for g, t in stmt.tsub)
        return ("call", stmt.fname, tsub, stmt.args)
    if isinstance(stmt, Drop):
        return ("drop", stmt.name)
    if isinstance(stmt, Borrow):
        return (f"borrow_{stmt.qual}", stmt.name)
    if isinstance(stmt, Reborrow):
        return (f"reborrow_{stmt.qual}", stmt.name)
    if isinstance(stmt, ProjMove):
        return ("projmove", stmt.name, stmt.fname)
    if isinstance(stmt, ProjRef):
        return ("projref", stmt.name, stmt.fname)
    if isinstance(stmt, Deref):
        return ("deref", stmt.name)
    if isinstance(stmt, DupCopy):
        return ("dup_copy", stmt.name)
    if isinstance(stmt, DupClone):
        return ("dup_clone", stmt.name)
    raise ValueError(stmt)


def action_statement(u: OracleEnv, state: OracleState, action: tuple) -> Statement:
    """Concrete statement for an abstract action (inverse of `_abstract` up to
    result naming)."""
    kind = action[0]
    if kind == "call":
        _, fname, tsub_r, args = action
        item = u.env.item(fname)
        by_render = {render(t): t for t in u.universe.sorted}
        tsub = tuple((g, by_render[r]) for g, r in tsub_r)
        return Call(fname, tsub, tuple(args))
    if kind == "drop":
        return Drop(action[1])
    if kind in ("borrow_shr", "borrow_mut"):
        return Borrow(kind.removeprefix("borrow_"), action[1])
    if kind in ("reborrow_shr", "reborrow_mut"):
        return Reborrow(kind.removeprefix("reborrow_"), action[1])
    if kind == "projmove":
        return ProjMove(action[1], action[2])
    if kind == "projref":
        return ProjRef(action[1], action[2])
    if kind == "deref":
        return Deref(action[1])
    if kind == "dup_copy":
        return DupCopy(action[1])
    if kind == "dup_clone":
        return DupClone(action[1])
    raise ValueError(action)


# ---------------------------------------------------------------------------
# Parsing emitted statement text back into statements

_LET_RE = re.compile(r"^let\s+(?:mut\s+)?(\w+)\s*=\s*(.+);$")
_DROP_RE = re.compile(r"^drop\(\s*(\w+)\s*\);$")
_CALL_RE = re.compile(r"^(\w+)\s*(?:::\s*<([^>]*)>)?\s*\((.*)\)$")


class StatementParseError(Exception):
    pass


def parse_statements(text: str, env: SigEnv) -> list:
    """Parse the emitted statement forms back into statements; used by the
    round-trip acceptance check."""
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        m = _DROP_RE.match(line)
        if m:
            out.append(Drop(m.group(1)))
            continue
        m = _LET_RE.match(line)
        if m:
            out.append(_parse_value(m.group(1), m.group(2).strip(), env))
            continue
        m = _CALL_RE.match(line.rstrip(";").strip())
        if m:
            out.append(_parse_call(None, m, env))
            continue
        raise StatementParseError(f"unparsed statement {line!r}")
    return out


def _parse_value(result: str, expr: str, env: SigEnv) -> Statement:
    if expr.startswith("&mut *"):
        return Reborrow(MUT, expr[6:].strip(), result)
    if expr.startswith("&*"):
        return Reborrow(SHR, expr[2:].strip(), result)
    if expr.startswith("&mut "):
        rest = expr[5:].strip()
        if "." in rest:
            name, fname = rest.split(".", 1)
            return ProjRef(name.strip(), fname.strip(), result)
        return Borrow(MUT, rest, result)
    if expr.startswith("&"):
        rest = expr[1:].strip()
        if "." in rest:
            name, fname = rest.split(".", 1)
            return ProjRef(name.strip(), fname.strip(), result)
        return Borrow(SHR, rest, result)
    if expr.startswith("*"):
        return Deref(expr[1:].strip(), result)
    if expr.endswith(".clone()"):
        return DupClone(expr[: -len(".clone()")].strip(), result)
    m = _CALL_RE.match(expr)
    if m and "(" in expr:
        return _parse_call(result, m, env)
    if "." in expr:
        name, fname = expr.split(".", 1)
        return ProjMove(name.strip(), fname.strip(), result)
    if expr.isidentifier():
        return DupCopy(expr, result)
    raise StatementParseError(f"unparsed expression {expr!r}")


def _parse_call(result: str | None, m: re.Match, env: SigEnv) -> Call:
    fname, generics, argtext = m.group(1), m.group(2), m.group(3)
    item = env.item(fname)
    tsub: tuple = ()
    if generics:
        from .typesys import parse_type

        tys = [hookify(parse_type(g.strip())) for g in generics.split(",") if g.strip()]
        tsub = tuple(zip(item.generics, tys))
    args = tuple(a.strip() for a in argtext.split(",") if a.strip())
    return Call(fname, tsub, args, result)


def run_program(u: OracleEnv, stmts: list) -> tuple:
    """Run a parsed statement sequence from the empty state; returns
    (accepted, final state or reason, index of failing statement)."""
    state = initial_state()
    for i, stmt in enumerate(stmts):
        outcome = step(u, state, stmt)
        if not outcome.ok:
            return False, outcome.reason, i
        state = outcome.state
    return True, state, len(stmts)


def make_oracle_env(env: SigEnv, universe: Universe, facts: FactTables) -> OracleEnv:
    return OracleEnv(env, universe, facts)
