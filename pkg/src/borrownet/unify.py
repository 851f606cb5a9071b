"""Observation, unification, obligation entailment, and the guard solver.

Unification matches a transition port's expected type scheme against the
observed ground structure of a chosen token, producing partial substitutions
and possibly emitting projection-equality obligations. The guard solver then
joins per-token results, completes unconstrained variables deterministically,
allocates fresh identifiers, and checks entailment of all obligations against
the fact tables and the borrow stack.

Everything here is pure; net objects are only touched through attributes so
this module stays independent of the net's concrete classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import TYPE_CHECKING, Iterator

from .sigenv import AssocEq, FactTables, FieldEq, Outlives, TraitBound
from .typesys import (
    AssocTy,
    BaseTy,
    FieldTy,
    JoinConflict,
    RefTy,
    SliceTy,
    Subst,
    TupleTy,
    Ty,
    TyApp,
    TyVar,
    fv_lifetimes,
    is_ground,
    render,
    subst_types,
)

if TYPE_CHECKING:  # pragma: no cover
    from .net import Net, Token, Transition


class UnifyError(Exception):
    pass


class ShapeMismatch(UnifyError):
    def __init__(self, expected: Ty, observed: Ty):
        super().__init__(f"cannot match {render(expected)} against {render(observed)}")
        self.expected = expected
        self.observed = observed


class MissingRegion(UnifyError):
    def __init__(self, life: str):
        super().__init__(f"observed lifetime {life} has no region binding")
        self.life = life


class UnresolvedAtom(Exception):
    """An obligation still contains variables after substitution; this marks a
    solver bug, not ordinary non-enabledness."""

    def __init__(self, atom):
        super().__init__(f"unresolved obligation atom {atom!r}")
        self.atom = atom


@dataclass(frozen=True)
class Observation:
    """Ground type of a token's place plus the region view of its lifetimes."""

    ground: Ty
    regions: tuple  # sorted (lifetime, label) pairs, domain = fv_lifetimes(ground)

    def region(self, life: str) -> int | None:
        return dict(self.regions).get(life)


@dataclass(frozen=True)
class UnifyOutcome:
    subst: Subst
    emitted: tuple  # AssocEq / FieldEq atoms only


@dataclass(frozen=True)
class InstRecord:
    """How one firing resolves variables and which fresh names it allocates.

    `new_vids` and `new_regions` are indexed by output slot; both ranges are
    injective and disjoint from everything live in the source configuration.
    """

    subst: Subst
    new_vids: tuple = ()
    new_regions: tuple = ()


def observe(place, token) -> Observation:
    """Observable structure of `token` sitting in `place`: the place's ground
    type and the token's region bindings restricted to its free lifetimes."""
    free = fv_lifetimes(place.ty)
    view = tuple(sorted((k, v) for (k, v) in token.life if k in free))
    return Observation(place.ty, view)


def unify(expected: Ty, obs: Observation) -> UnifyOutcome:
    """Match an expected scheme against an observation.

    Projection nodes bind nothing and emit one equality obligation each;
    reference nodes require equal qualifiers and record the observed region
    for the expected lifetime; compound nodes fold the join over components.
    """
    subst, emitted = _unify(expected, obs.ground, obs)
    return UnifyOutcome(subst, tuple(emitted))


def _unify(expected: Ty, observed: Ty, obs: Observation):
    if isinstance(expected, TyVar):
        return Subst.of({expected.name: observed}), []
    if isinstance(expected, BaseTy):
        if isinstance(observed, BaseTy) and observed.name == expected.name:
            return Subst(), []
        raise ShapeMismatch(expected, observed)
    if isinstance(expected, FieldTy):
        return Subst(), [FieldEq(expected.base, expected.field, observed)]
    if isinstance(expected, AssocTy):
        return Subst(), [AssocEq(expected.base, expected.trait, expected.name, observed)]
    if isinstance(expected, SliceTy):
        if not isinstance(observed, SliceTy):
            raise ShapeMismatch(expected, observed)
        return _unify(expected.elem, observed.elem, obs)
    if isinstance(expected, RefTy):
        if not isinstance(observed, RefTy) or observed.qual != expected.qual:
            raise ShapeMismatch(expected, observed)
        label = obs.region(observed.life)
        if label is None:
            raise MissingRegion(observed.life)
        sub, emitted = _unify(expected.inner, observed.inner, obs)
        sub = sub.join(Subst.of(None, {expected.life: label}))
        return sub, emitted
    if isinstance(expected, TupleTy):
        if not isinstance(observed, TupleTy) or len(observed.elems) != len(expected.elems):
            raise ShapeMismatch(expected, observed)
        sub, emitted = Subst(), []
        for e, o in zip(expected.elems, observed.elems):
            s2, em2 = _unify(e, o, obs)
            sub = sub.join(s2)
            emitted += em2
        return sub, emitted
    if isinstance(expected, TyApp):
        if (
            not isinstance(observed, TyApp)
            or observed.head != expected.head
            or len(observed.args) != len(expected.args)
        ):
            raise ShapeMismatch(expected, observed)
        sub, emitted = Subst(), []
        for e, o in zip(expected.args, observed.args):
            s2, em2 = _unify(e, o, obs)
            sub = sub.join(s2)
            emitted += em2
        return sub, emitted
    raise UnifyError(f"unsupported scheme node {expected!r}")


# ---------------------------------------------------------------------------
# Entailment


def outlives_holds(stack, l1: int, l2: int) -> bool:
    """Region order by borrow-stack depth: equal labels always satisfy it;
    otherwise both must occur on the stack and the first must sit strictly
    deeper (farther from the top). Absent labels have no derivable depth."""
    if l1 == l2:
        return True
    d1 = _topmost_depth(stack, l1)
    d2 = _topmost_depth(stack, l2)
    if d1 is None or d2 is None:
        return False
    return d1 > d2


def _topmost_depth(stack, label: int) -> int | None:
    for i, frame in enumerate(stack):
        if frame.region == label:
            return i
    return None


def entail(facts: FactTables, stack, subst: Subst, obls) -> tuple[bool, object]:
    """Check every obligation atom; returns (True, None) or (False, atom) for
    the first underivable one. Atoms the substitution fails to ground raise
    UnresolvedAtom instead of failing silently."""
    tmap = subst.types()
    for o in obls:
        if isinstance(o, TraitBound):
            ty = subst_types(o.ty, tmap)
            if not is_ground(ty):
                raise UnresolvedAtom(o)
            if not facts.has_impl(ty, o.trait):
                return False, o
        elif isinstance(o, AssocEq):
            ty = subst_types(o.ty, tmap)
            target = subst_types(o.target, tmap)
            if not (is_ground(ty) and is_ground(target)):
                raise UnresolvedAtom(o)
            if facts.assoc_lookup(ty, o.trait, o.name) != target:
                return False, o
        elif isinstance(o, Outlives):
            l1 = subst.lget(o.longer)
            l2 = subst.lget(o.shorter)
            if l1 is None or l2 is None:
                raise UnresolvedAtom(o)
            if not outlives_holds(stack, l1, l2):
                return False, o
        elif isinstance(o, FieldEq):
            ty = subst_types(o.ty, tmap)
            if not is_ground(ty):
                raise UnresolvedAtom(o)
            if not isinstance(ty, BaseTy):
                return False, o
            if facts.field_lookup(ty.name, o.field) != o.target:
                return False, o
        else:
            raise UnresolvedAtom(o)
    return True, None


# ---------------------------------------------------------------------------
# Guard solving


def _least_unused(taken, count: int, start: int = 0) -> tuple:
    out = []
    cand = start
    used = set(taken)
    while len(out) < count:
        if cand not in used:
            out.append(cand)
            used.add(cand)
        cand += 1
    return tuple(out)


def solve_guard(net: "Net", t: "Transition", cfg, args) -> Iterator[InstRecord]:
    """Enumerate, deterministically, every instantiation record enabling `t`
    on the chosen input tokens `args` (one per port, in port order).

    An empty stream means the transition is not enabled under this choice.
    Unconstrained type variables range over the ground universe in total
    order; unconstrained lifetimes range over the stack's regions (top to
    bottom) followed by one fresh label.
    """
    try:
        forced = Subst()
        emitted: list = []
        for port, tok in zip(t.ports, args):
            out = unify(port.scheme, observe(port.place, tok))
            forced = forced.join(out.subst)
            emitted.extend(out.emitted)
    except (UnifyError, JoinConflict):
        return

    unforced_t = [v for v in t.type_params if forced.tget(v) is None]
    unforced_l = [l for l in t.life_params if forced.lget(l) is None]

    live_vids = cfg.live_vids()
    live_labels = cfg.live_labels()
    stack_regions: list = []
    for frame in cfg.stack:
        if frame.region is not None and frame.region not in stack_regions:
            stack_regions.append(frame.region)
    fresh_label = _least_unused(live_labels, 1)[0]
    label_pool = stack_regions + [fresh_label]

    type_axes = [net.universe.sorted for _ in unforced_t]
    life_axes = [label_pool for _ in unforced_l]
    obligations = tuple(t.obligations) + tuple(emitted)

    tried = 0
    for t_pick in product(*type_axes):
        for l_pick in product(*life_axes):
            if t.completion_cap is not None and tried >= t.completion_cap:
                return
            tried += 1
            try:
                subst = forced.join(
                    Subst.of(dict(zip(unforced_t, t_pick)), dict(zip(unforced_l, l_pick)))
                )
            except JoinConflict:  # pragma: no cover - unforced by construction
                continue
            new_vids = _least_unused(live_vids, t.fresh_vids)
            new_regions = _least_unused(set(live_labels) | set(l_pick), t.fresh_regions)
            inst = InstRecord(subst, new_vids, new_regions)
            ok, _bad = entail(net.facts, cfg.stack, subst, obligations)
            if ok:
                _selfcheck(net, t, cfg, inst, obligations)
                yield inst


def _selfcheck(net, t, cfg, inst: InstRecord, obligations) -> None:
    # Re-verify freshness and entailment on everything handed out.
    live_vids = cfg.live_vids()
    live_labels = cfg.live_labels()
    assert len(set(inst.new_vids)) == len(inst.new_vids)
    assert len(set(inst.new_regions)) == len(inst.new_regions)
    assert not (set(inst.new_vids) & set(live_vids))
    assert not (set(inst.new_regions) & set(live_labels))
    ok, bad = entail(net.facts, cfg.stack, inst.subst, obligations)
    assert ok, f"entailment self-check failed on {bad!r}"
