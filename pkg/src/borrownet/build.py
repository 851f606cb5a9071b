"""Constructs the full transition set from a loaded signature environment:
monomorphized call transitions plus the fixed family of structural schemas
(ownership, duplication, borrow creation/discharge, field projection,
dereference, and reborrowing).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

from .net import (
    BLK,
    F_FREEZE,
    F_MUT,
    F_SHR,
    FrameSpec,
    KIND_CALL,
    K_BORROW_MUT,
    K_BORROW_SHR,
    K_BORROW_SHR_AGAIN,
    K_COPY_USE,
    K_DEREF_COPY,
    K_DROP_OWN,
    K_DUP_CLONE,
    K_DUP_COPY,
    K_END_FIELD_REF_MUT,
    K_END_MUT,
    K_END_REBORROW_MUT,
    K_END_REBORROW_SHR,
    K_END_SHR,
    K_END_SHR_LAST,
    K_FIELD_MOVE,
    K_FIELD_REF,
    K_FIELD_REF_MUT,
    K_MOVE,
    K_REBORROW_MUT,
    K_REBORROW_SHR,
    Net,
    OutSpec,
    Place,
    Port,
    Transition,
    blk,
    frz,
    mut_ref,
    own,
    shr_ref,
)
from .sigenv import (
    AssocEq,
    CallableItem,
    FactTables,
    Outlives,
    SigEnv,
    TraitBound,
    derive_builtin_facts,
    is_copy,
    normalize_projections,
)
from .typesys import (
    AssocTy,
    FieldTy,
    RefTy,
    SliceTy,
    TupleTy,
    Ty,
    TyApp,
    Universe,
    build_ground_universe,
    fv_lifetimes,
    fv_typevars,
    hookify,
    is_ground,
    render,
    subst_types,
)


def _with_life(t: Ty, life: str) -> Ty:
    if isinstance(t, RefTy):
        return RefTy(t.qual, life, _with_life(t.inner, life))
    if isinstance(t, TyApp):
        return TyApp(t.head, tuple(_with_life(a, life) for a in t.args))
    if isinstance(t, TupleTy):
        return TupleTy(tuple(_with_life(e, life) for e in t.elems))
    if isinstance(t, SliceTy):
        return SliceTy(_with_life(t.elem, life))
    if isinstance(t, AssocTy):
        return AssocTy(_with_life(t.base, life), t.trait, t.name)
    if isinstance(t, FieldTy):
        return FieldTy(_with_life(t.base, life), t.field)
    return t


def _port(place: Place, index: int, redeliver: bool = False) -> Port:
    """Schema input port; regions are per-token, so each port's expected
    scheme gets its own lifetime name to keep unification joins apart."""
    return Port(place, _with_life(place.ty, f"'p{index}"), redeliver)


@dataclass(frozen=True)
class CallTransition(Transition):
    """Monomorphized API call; static trait and associated-type obligations
    were discharged at build time, so only lifetime conditions remain in the
    runtime guard."""

    item: CallableItem | None = None
    tsub: tuple = ()  # (generic name, ground type) in declaration order
    ret_place: Place | None = None


@dataclass(frozen=True)
class SchemaTransition(Transition):
    """One structural schema instance for a subject ground type (and field)."""


@dataclass
class BuildReport:
    calls_built: int = 0
    calls_skipped_unresolved: int = 0
    calls_skipped_static: int = 0
    schemas_built: dict = field(default_factory=dict)
    schemas_skipped_depth: int = 0

    def render(self) -> str:
        lines = [
            f"call transitions: {self.calls_built}",
            f"call instantiations skipped (unresolvable types): {self.calls_skipped_unresolved}",
            f"call instantiations skipped (static obligations): {self.calls_skipped_static}",
        ]
        for kind in sorted(self.schemas_built):
            lines.append(f"schema {kind}: {self.schemas_built[kind]}")
        lines.append(f"schema instances skipped (missing ref place): {self.schemas_skipped_depth}")
        return "\n".join(lines)

    def bump(self, kind: str) -> None:
        self.schemas_built[kind] = self.schemas_built.get(kind, 0) + 1


# ---------------------------------------------------------------------------
# Universe collection


def signature_ground_types(env: SigEnv) -> set:
    """Fully instantiated types reachable from the signatures: every generic
    parameter ranges over the declared base types (compound shapes are only
    ever the ones signatures mention, never invented)."""
    base = sorted(env.base_types)
    out: set = set(base)
    for item in env.items:
        axes = [base for _ in item.generics]
        for pick in product(*axes):
            tmap = dict(zip(item.generics, pick))
            for t in item.params + ((item.ret,) if item.ret is not None else ()):
                s = normalize_projections(subst_types(t, tmap), env.facts)
                if s is None or not is_ground(s):
                    continue
                out.add(hookify(s))
    return out


def build_universe(env: SigEnv, ref_depth: int = 2) -> Universe:
    structs = env.facts.structs()
    return build_ground_universe(signature_ground_types(env), structs, ref_depth)


# ---------------------------------------------------------------------------
# Call transitions


def _outer_lifetime(t: Ty) -> str | None:
    """Leftmost outermost reference lifetime of a resolved scheme; names the
    region recorded on a produced token whose type contains references."""
    if isinstance(t, RefTy):
        return t.life
    from .typesys import components

    for c in components(t):
        life = _outer_lifetime(c)
        if life is not None:
            return life
    return None


def build_call_transitions(env: SigEnv, universe: Universe, facts: FactTables):
    """One transition per (item, total generic substitution) whose argument
    and return types land in the universe and whose static obligations hold.
    Invalid instantiations are skipped and counted, never raised."""
    out: list = []
    report = BuildReport()
    for item in env.items:
        axes = [universe.sorted for _ in item.generics]
        for pick in product(*axes):
            tmap = dict(zip(item.generics, pick))
            t = _instantiate_call(item, tmap, universe, facts, report)
            if t is not None:
                out.append(t)
                report.calls_built += 1
    return out, report


def _instantiate_call(item, tmap, universe, facts, report):
    def resolve(t: Ty) -> tuple | None:
        s = normalize_projections(subst_types(t, tmap), facts)
        if s is None or fv_typevars(s):
            return None
        ground = hookify(s)
        if ground not in universe:
            return None
        return s, ground

    params = []
    for p in item.params:
        r = resolve(p)
        if r is None:
            report.calls_skipped_unresolved += 1
            return None
        params.append(r)
    ret = None
    if item.ret is not None:
        ret = resolve(item.ret)
        if ret is None:
            report.calls_skipped_unresolved += 1
            return None

    residual = []
    for b in item.bounds:
        if isinstance(b, TraitBound):
            ty = normalize_projections(subst_types(b.ty, tmap), facts)
            if ty is None or not facts.has_impl(ty, b.trait):
                report.calls_skipped_static += 1
                return None
        elif isinstance(b, AssocEq):
            ty = normalize_projections(subst_types(b.ty, tmap), facts)
            target = normalize_projections(subst_types(b.target, tmap), facts)
            if ty is None or target is None or facts.assoc_lookup(ty, b.trait, b.name) != target:
                report.calls_skipped_static += 1
                return None
        elif isinstance(b, Outlives):
            residual.append(b)

    ports = []
    live_ports = []
    for i, (scheme, ground) in enumerate(params):
        redeliver = isinstance(ground, RefTy) or is_copy(ground, facts)
        ports.append(Port(own(ground), scheme, redeliver))
        if fv_lifetimes(ground):
            live_ports.append(i)

    outs = []
    fresh_vids = 0
    ret_place = None
    if ret is not None:
        scheme, ground = ret
        ret_place = own(ground)
        region_src = None
        if fv_lifetimes(ground):
            life = _outer_lifetime(scheme)
            if life is None:  # pragma: no cover - ground has refs iff scheme does
                report.calls_skipped_unresolved += 1
                return None
            region_src = ("life", life)
        outs.append(OutSpec(ret_place, ("fresh", 0), region_src))
        fresh_vids = 1

    if item.generics:
        inst = ", ".join(render(tmap[g]) for g in item.generics)
        label = f"{item.name}::<{inst}>"
    else:
        label = item.name
    return CallTransition(
        label=label,
        kind=KIND_CALL,
        ports=tuple(ports),
        outs=tuple(outs),
        life_params=tuple(item.lifetimes),
        obligations=tuple(residual),
        live_ports=tuple(live_ports),
        fresh_vids=fresh_vids,
        item=item,
        tsub=tuple((g, tmap[g]) for g in item.generics),
        ret_place=ret_place,
    )


# ---------------------------------------------------------------------------
# Structural schemas


def build_schema_transitions(universe: Universe, facts: FactTables, include_copy_use: bool = False):
    """Instantiate the structural schema tables for every universe member
    (and struct field); schemas whose static guard cannot hold for a type are
    not built, and borrow rows needing an out-of-universe reference type are
    skipped and counted."""
    out: list = []
    report = BuildReport()

    def add(t: Transition) -> None:
        out.append(t)
        report.bump(t.kind)

    for ty in universe.sorted:
        name = render(ty)
        is_ref_subject = isinstance(ty, RefTy)
        own_p, frz_p, blk_p = own(ty), frz(ty), blk(ty)
        live0 = (0,) if is_ref_subject else ()
        copy_here = is_copy(ty, facts)

        if not copy_here:
            add(
                SchemaTransition(
                    label=f"move[{name}]",
                    kind=K_MOVE,
                    ports=(_port(own_p, 0),),
                    copy_guard="noncopy",
                    subject=ty,
                    untracked_only=is_ref_subject,
                    live_ports=live0,
                )
            )
        if copy_here:
            add(
                SchemaTransition(
                    label=f"copy_use[{name}]",
                    kind=K_COPY_USE,
                    ports=(_port(own_p, 0, True),),
                    copy_guard="copy",
                    subject=ty,
                    live_ports=live0,
                    search=include_copy_use,
                )
            )
            add(
                SchemaTransition(
                    label=f"dup_copy[{name}]",
                    kind=K_DUP_COPY,
                    ports=(_port(own_p, 0, True),),
                    outs=(OutSpec(own_p, ("fresh", 0), ("port", 0) if fv_lifetimes(ty) else None),),
                    copy_guard="copy",
                    subject=ty,
                    live_ports=live0,
                    fresh_vids=1,
                )
            )
        if facts.has_impl(ty, "Clone"):
            add(
                SchemaTransition(
                    label=f"dup_clone[{name}]",
                    kind=K_DUP_CLONE,
                    ports=(_port(own_p, 0, True),),
                    outs=(OutSpec(own_p, ("fresh", 0), ("port", 0) if fv_lifetimes(ty) else None),),
                    copy_guard="clone",
                    subject=ty,
                    live_ports=live0,
                    fresh_vids=1,
                )
            )
        add(
            SchemaTransition(
                label=f"drop_own[{name}]",
                kind=K_DROP_OWN,
                ports=(_port(own_p, 0),),
                subject=ty,
                untracked_only=is_ref_subject,
                live_ports=live0,
            )
        )

        shr_ty, mut_ty = shr_ref(ty), mut_ref(ty)
        have_shr = shr_ty in universe
        have_mut = mut_ty in universe
        carry = ("port", 0) if fv_lifetimes(ty) else None

        if have_shr:
            ref_p = own(shr_ty)
            add(
                SchemaTransition(
                    label=f"borrow_shr[{name}]",
                    kind=K_BORROW_SHR,
                    ports=(_port(own_p, 0),),
                    outs=(OutSpec(frz_p, ("port", 0), carry), OutSpec(ref_p, ("fresh", 0), ("fresh", 0))),
                    act_kind="push",
                    act_frames=(
                        FrameSpec(F_SHR, ("port", 0), ("fresh", 0), ("fresh", 0)),
                        FrameSpec(F_FREEZE, ("port", 0)),
                    ),
                    subject=ty,
                    live_ports=live0,
                    fresh_vids=1,
                    fresh_regions=1,
                )
            )
            add(
                SchemaTransition(
                    label=f"borrow_shr_again[{name}]",
                    kind=K_BORROW_SHR_AGAIN,
                    ports=(_port(frz_p, 0, True),),
                    outs=(OutSpec(ref_p, ("fresh", 0), ("fresh", 0)),),
                    act_kind="push",
                    act_frames=(FrameSpec(F_SHR, ("port", 0), ("fresh", 0), ("fresh", 0)),),
                    subject=ty,
                    live_ports=live0,
                    fresh_vids=1,
                    fresh_regions=1,
                )
            )
            add(
                SchemaTransition(
                    label=f"end_shr[{name}]",
                    kind=K_END_SHR,
                    ports=(_port(frz_p, 0, True), _port(own(shr_ty), 1)),
                    act_kind="pop",
                    act_frames=(FrameSpec(F_SHR, ("port", 0), ("port", 1), ("port", 1)),),
                    subject=ty,
                    below_not_freeze=True,
                )
            )
            add(
                SchemaTransition(
                    label=f"end_shr_last[{name}]",
                    kind=K_END_SHR_LAST,
                    ports=(_port(frz_p, 0), _port(own(shr_ty), 1)),
                    outs=(OutSpec(own_p, ("port", 0), carry),),
                    act_kind="pop",
                    act_frames=(
                        FrameSpec(F_SHR, ("port", 0), ("port", 1), ("port", 1)),
                        FrameSpec(F_FREEZE, ("port", 0)),
                    ),
                    subject=ty,
                )
            )
        else:
            report.schemas_skipped_depth += 2
        if have_mut:
            mut_p = own(mut_ty)
            add(
                SchemaTransition(
                    label=f"borrow_mut[{name}]",
                    kind=K_BORROW_MUT,
                    ports=(_port(own_p, 0),),
                    outs=(OutSpec(blk_p, ("port", 0), carry), OutSpec(mut_p, ("fresh", 0), ("fresh", 0))),
                    act_kind="push",
                    act_frames=(FrameSpec(F_MUT, ("port", 0), ("fresh", 0), ("fresh", 0)),),
                    subject=ty,
                    live_ports=live0,
                    fresh_vids=1,
                    fresh_regions=1,
                )
            )
            add(
                SchemaTransition(
                    label=f"end_mut[{name}]",
                    kind=K_END_MUT,
                    ports=(_port(blk_p, 0), _port(mut_p, 1)),
                    outs=(OutSpec(own_p, ("port", 0), carry),),
                    act_kind="pop",
                    act_frames=(FrameSpec(F_MUT, ("port", 0), ("port", 1), ("port", 1)),),
                    subject=ty,
                )
            )
        else:
            report.schemas_skipped_depth += 2

        _add_deref_reborrow(ty, universe, facts, add, report)

        if not isinstance(ty, RefTy):
            for fname in facts.struct_fields(name):
                fty = facts.field_lookup(name, fname)
                _add_field_rows(ty, fname, fty, universe, add, report)

    return out, report


def _add_field_rows(ty: Ty, fname: str, fty: Ty, universe: Universe, add, report) -> None:
    """Field projection rows for struct `ty`, field `fname` of type `fty`."""
    name = render(ty)
    add(
        SchemaTransition(
            label=f"field_move[{name}.{fname}]",
            kind=K_FIELD_MOVE,
            ports=(_port(own(ty), 0),),
            outs=(OutSpec(own(fty), ("fresh", 0)),),
            subject=ty,
            field_name=fname,
            fresh_vids=1,
        )
    )
    shr_parent, shr_child = shr_ref(ty), shr_ref(fty)
    if shr_parent in universe and shr_child in universe:
        add(
            SchemaTransition(
                label=f"field_ref[{name}.{fname}]",
                kind=K_FIELD_REF,
                ports=(_port(own(shr_parent), 0, True),),
                outs=(OutSpec(own(shr_child), ("fresh", 0), ("port", 0)),),
                subject=ty,
                field_name=fname,
                live_ports=(0,),
                fresh_vids=1,
            )
        )
    else:
        report.schemas_skipped_depth += 1
    mut_parent, mut_child = mut_ref(ty), mut_ref(fty)
    if mut_parent in universe and mut_child in universe:
        add(
            SchemaTransition(
                label=f"field_ref_mut[{name}.{fname}]",
                kind=K_FIELD_REF_MUT,
                ports=(_port(own(mut_parent), 0),),
                outs=(
                    OutSpec(blk(mut_parent), ("port", 0), ("port", 0)),
                    OutSpec(own(mut_child), ("fresh", 0), ("fresh", 0)),
                ),
                act_kind="push",
                act_frames=(FrameSpec(F_MUT, ("port", 0), ("fresh", 0), ("fresh", 0)),),
                subject=ty,
                field_name=fname,
                live_ports=(0,),
                fresh_vids=1,
                fresh_regions=1,
            )
        )
        add(
            SchemaTransition(
                label=f"end_field_ref_mut[{name}.{fname}]",
                kind=K_END_FIELD_REF_MUT,
                ports=(_port(blk(mut_parent), 0), _port(own(mut_child), 1)),
                outs=(OutSpec(own(mut_parent), ("port", 0), ("port", 0)),),
                act_kind="pop",
                act_frames=(FrameSpec(F_MUT, ("port", 0), ("port", 1), ("port", 1)),),
                subject=ty,
                field_name=fname,
            )
        )
    else:
        report.schemas_skipped_depth += 2


def _add_deref_reborrow(ty: Ty, universe: Universe, facts: FactTables, add, report) -> None:
    """Dereference and reborrowing rows for referent type `ty`."""
    name = render(ty)
    shr_ty, mut_ty = shr_ref(ty), mut_ref(ty)
    carry = ("port", 0) if fv_lifetimes(ty) else None
    if shr_ty in universe and is_copy(ty, facts):
        add(
            SchemaTransition(
                label=f"deref_copy[{name}]",
                kind=K_DEREF_COPY,
                ports=(_port(own(shr_ty), 0, True),),
                outs=(OutSpec(own(ty), ("fresh", 0), carry),),
                copy_guard="copy",
                subject=ty,
                live_ports=(0,),
                fresh_vids=1,
            )
        )
    if mut_ty in universe:
        mut_p = own(mut_ty)
        add(
            SchemaTransition(
                label=f"reborrow_mut[{name}]",
                kind=K_REBORROW_MUT,
                ports=(_port(mut_p, 0),),
                outs=(
                    OutSpec(blk(mut_ty), ("port", 0), ("port", 0)),
                    OutSpec(mut_p, ("fresh", 0), ("fresh", 0)),
                ),
                act_kind="push",
                act_frames=(FrameSpec(F_MUT, ("port", 0), ("fresh", 0), ("fresh", 0)),),
                subject=ty,
                live_ports=(0,),
                fresh_vids=1,
                fresh_regions=1,
            )
        )
        add(
            SchemaTransition(
                label=f"end_reborrow_mut[{name}]",
                kind=K_END_REBORROW_MUT,
                ports=(_port(blk(mut_ty), 0), _port(mut_p, 1)),
                outs=(OutSpec(mut_p, ("port", 0), ("port", 0)),),
                act_kind="pop",
                act_frames=(FrameSpec(F_MUT, ("port", 0), ("port", 1), ("port", 1)),),
                subject=ty,
            )
        )
        if shr_ty in universe:
            add(
                SchemaTransition(
                    label=f"reborrow_shr[{name}]",
                    kind=K_REBORROW_SHR,
                    ports=(_port(mut_p, 0),),
                    outs=(
                        OutSpec(blk(mut_ty), ("port", 0), ("port", 0)),
                        OutSpec(own(shr_ty), ("fresh", 0), ("fresh", 0)),
                    ),
                    act_kind="push",
                    act_frames=(FrameSpec(F_MUT, ("port", 0), ("fresh", 0), ("fresh", 0)),),
                    subject=ty,
                    live_ports=(0,),
                    fresh_vids=1,
                    fresh_regions=1,
                )
            )
            add(
                SchemaTransition(
                    label=f"end_reborrow_shr[{name}]",
                    kind=K_END_REBORROW_SHR,
                    ports=(_port(blk(mut_ty), 0), _port(own(shr_ty), 1)),
                    outs=(OutSpec(mut_p, ("port", 0), ("port", 0)),),
                    act_kind="pop",
                    act_frames=(FrameSpec(F_MUT, ("port", 0), ("port", 1), ("port", 1)),),
                    subject=ty,
                )
            )
        else:
            report.schemas_skipped_depth += 2


# ---------------------------------------------------------------------------
# Whole-net assembly


def build_net(env: SigEnv, ref_depth: int = 2, include_copy_use: bool = False):
    """Full pipeline from a loaded environment to an immutable net, plus a
    build report in a stable textual format."""
    universe = build_universe(env, ref_depth)
    facts = derive_builtin_facts(universe, env.facts)
    calls, creport = build_call_transitions(env, universe, facts)
    schemas, sreport = build_schema_transitions(universe, facts, include_copy_use)
    report = BuildReport(
        calls_built=creport.calls_built,
        calls_skipped_unresolved=creport.calls_skipped_unresolved,
        calls_skipped_static=creport.calls_skipped_static,
        schemas_built=sreport.schemas_built,
        schemas_skipped_depth=sreport.schemas_skipped_depth,
    )
    transitions = tuple(sorted(calls + schemas, key=lambda t: t.label))
    return Net(universe, facts, transitions, env), report
