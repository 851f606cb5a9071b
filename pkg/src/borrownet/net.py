"""The net itself: typed places with capabilities, colored tokens, the borrow
stack, configurations, transitions, enabling, and the firing rule.

Configurations are immutable values; `fire` returns a new configuration, so
independent explorations can proceed concurrently without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from . import unify as _unify
from .sigenv import CLONE, FactTables, SigEnv, is_copy
from .typesys import (
    HOOK,
    MUT,
    SHR,
    Multiset,
    RefTy,
    Subst,
    Ty,
    Universe,
    fv_lifetimes,
    render,
)

OWN = "own"
FRZ = "frz"
BLK = "blk"
_CAP_RANK = {OWN: 0, FRZ: 1, BLK: 2}

F_FREEZE = "Freeze"
F_SHR = "Shr"
F_MUT = "Mut"

DEAD_LABEL = -1  # canonical sink for region labels no longer on the stack


class NetError(Exception):
    pass


class NotEnabled(NetError):
    pass


class PopMismatch(NetError):
    pass


@dataclass(frozen=True)
class Place:
    cap: str
    ty: Ty

    def key(self):
        return (render(self.ty), _CAP_RANK[self.cap])

    def __lt__(self, other: "Place") -> bool:
        return self.key() < other.key()

    def __repr__(self) -> str:
        return f"{self.cap}[{render(self.ty)}]"


def own(ty: Ty) -> Place:
    return Place(OWN, ty)


def frz(ty: Ty) -> Place:
    return Place(FRZ, ty)


def blk(ty: Ty) -> Place:
    return Place(BLK, ty)


def shr_ref(ty: Ty) -> Ty:
    return RefTy(SHR, HOOK, ty)


def mut_ref(ty: Ty) -> Ty:
    return RefTy(MUT, HOOK, ty)


def _label_str(label: int) -> str:
    return "L-" if label == DEAD_LABEL else f"L{label}"


@dataclass(frozen=True)
class Token:
    """A colored token: value identifier plus the observable part of its
    instantiation context. The type context is always fully absorbed by the
    place's ground type, so only region bindings for the place type's free
    lifetimes remain (the hook binding of internally created references)."""

    vid: int
    life: tuple = ()  # sorted (lifetime, label) pairs
    tctx: tuple = ()  # retained for colors over schematic places; empty here

    def region(self) -> int | None:
        return dict(self.life).get(HOOK)

    def key(self):
        return (self.vid, self.life, self.tctx)

    def __lt__(self, other: "Token") -> bool:
        return self.key() < other.key()

    def __repr__(self) -> str:
        reg = self.region()
        return f"v{self.vid}" + (f"[{_label_str(reg)}]" if reg is not None else "")


def make_token(vid: int, place_ty: Ty, region: int | None = None) -> Token:
    """Build a token for a place, restricting the region context to the place
    type's free lifetimes (production normal form)."""
    if fv_lifetimes(place_ty):
        if region is None:
            raise NetError(f"token for {render(place_ty)} needs a region")
        return Token(vid, ((HOOK, region),))
    return Token(vid)


@dataclass(frozen=True)
class Frame:
    kind: str
    owner: int
    borrower: int | None = None
    region: int | None = None

    def __repr__(self) -> str:
        if self.kind == F_FREEZE:
            return f"Freeze(v{self.owner})"
        return f"{self.kind}(v{self.owner},v{self.borrower},{_label_str(self.region)})"


class Config:
    """A colored marking plus the borrow stack (top frame leftmost)."""

    __slots__ = ("_items", "stack", "_hash", "_index")

    def __init__(self, marking, stack=()):
        if isinstance(marking, dict):
            items = tuple(
                sorted(((p, m) for p, m in marking.items() if m), key=lambda pm: pm[0].key())
            )
        else:
            items = tuple(sorted((pm for pm in marking if pm[1]), key=lambda pm: pm[0].key()))
        self._items = items
        self.stack = tuple(stack)
        self._index = dict(items)
        self._hash = hash((items, self.stack))

    def place_items(self) -> tuple:
        return self._items

    def tokens(self, place: Place) -> Multiset:
        return self._index.get(place, Multiset())

    def count(self, place: Place) -> int:
        return self.tokens(place).total()

    def all_tokens(self) -> Iterator:
        for place, ms in self._items:
            for tok in ms.elements():
                yield place, tok

    def live_vids(self) -> frozenset:
        vids = set()
        for _, tok in self.all_tokens():
            vids.add(tok.vid)
        for f in self.stack:
            vids.add(f.owner)
            if f.borrower is not None:
                vids.add(f.borrower)
        return frozenset(vids)

    def live_labels(self) -> frozenset:
        labels = set()
        for _, tok in self.all_tokens():
            reg = tok.region()
            if reg is not None:
                labels.add(reg)
        for f in self.stack:
            if f.region is not None:
                labels.add(f.region)
        return frozenset(labels)

    def stack_regions(self) -> frozenset:
        return frozenset(f.region for f in self.stack if f.region is not None)

    def tracked_borrowers(self) -> frozenset:
        return frozenset(f.borrower for f in self.stack if f.borrower is not None)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Config)
            and self._items == other._items
            and self.stack == other.stack
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Config({len(self._items)} places, |S|={len(self.stack)})"


EMPTY_CONFIG = Config({})


def initial_config() -> Config:
    """All values originate from 0-ary constructor firings; the start is the
    empty marking with an empty stack."""
    return EMPTY_CONFIG


def config_dump(cfg: Config) -> str:
    """Deterministic line-oriented rendering used by golden tests and the
    graph export hash."""
    lines = []
    for place, ms in cfg.place_items():
        toks = ", ".join(repr(t) for t in ms.elements())
        lines.append(f"{place.cap} {render(place.ty)}: {toks}")
    stack = " ".join(repr(f) for f in cfg.stack) if cfg.stack else "-"
    lines.append(f"stack: {stack}")
    return "\n".join(lines)


def wf_violations(cfg: Config) -> list:
    """Well-formedness audit for debug use; returns human-readable findings."""
    out = []
    where: dict = {}
    for place, tok in cfg.all_tokens():
        if tok.vid in where:
            out.append(f"v{tok.vid} occurs in both {where[tok.vid]!r} and {place!r}")
        where[tok.vid] = place
        want = fv_lifetimes(place.ty)
        have = {k for k, _ in tok.life}
        if want != have:
            out.append(f"token v{tok.vid} in {place!r} has region domain {have} != {want}")
    for f in cfg.stack:
        owner_place = where.get(f.owner)
        if f.kind == F_FREEZE:
            if owner_place is None or owner_place.cap != FRZ:
                out.append(f"{f!r}: owner not in a frz place")
        else:
            if owner_place is None or owner_place.cap not in (FRZ, BLK):
                out.append(f"{f!r}: owner not in a frz/blk place")
            borrower_place = where.get(f.borrower)
            if borrower_place is None or borrower_place.cap != OWN:
                out.append(f"{f!r}: borrower not in an own place")
    return out


# ---------------------------------------------------------------------------
# Transitions

# Schema kinds; calls use KIND_CALL.
KIND_CALL = "call"
K_MOVE = "move"
K_COPY_USE = "copy_use"
K_DUP_COPY = "dup_copy"
K_DUP_CLONE = "dup_clone"
K_DROP_OWN = "drop_own"
K_BORROW_SHR = "borrow_shr"
K_BORROW_SHR_AGAIN = "borrow_shr_again"
K_BORROW_MUT = "borrow_mut"
K_END_MUT = "end_mut"
K_END_SHR = "end_shr"
K_END_SHR_LAST = "end_shr_last"
K_FIELD_MOVE = "field_move"
K_FIELD_REF = "field_ref"
K_FIELD_REF_MUT = "field_ref_mut"
K_END_FIELD_REF_MUT = "end_field_ref_mut"
K_DEREF_COPY = "deref_copy"
K_REBORROW_MUT = "reborrow_mut"
K_END_REBORROW_MUT = "end_reborrow_mut"
K_REBORROW_SHR = "reborrow_shr"
K_END_REBORROW_SHR = "end_reborrow_shr"

POP_KINDS = frozenset(
    {K_END_MUT, K_END_SHR, K_END_SHR_LAST, K_END_FIELD_REF_MUT, K_END_REBORROW_MUT, K_END_REBORROW_SHR}
)


@dataclass(frozen=True)
class Port:
    place: Place
    scheme: Ty
    redeliver: bool = False  # consume-and-reproduce the same token


# Sources for output/frame construction: ("port", i) takes from the i-th input
# token, ("fresh", k) from the instantiation record's k-th fresh slot,
# ("life", name) reads the solved region of a declared lifetime.
@dataclass(frozen=True)
class OutSpec:
    place: Place
    vid_src: tuple
    region_src: tuple | None = None


@dataclass(frozen=True)
class FrameSpec:
    kind: str
    owner_src: tuple
    borrower_src: tuple | None = None
    region_src: tuple | None = None


@dataclass(frozen=True)
class Transition:
    """Declarative transition interpreted by the firing engine.

    Structural stack guards (pop prefix matching, the tracked-borrower
    carve-out, region liveness, and the end-of-sharing sentinel check) are
    stack conditions evaluated by `enabled_instances`; the typing side lives
    in the guard solver.
    """

    label: str
    kind: str
    ports: tuple = ()
    outs: tuple = ()
    act_kind: str = "none"  # none | push | pop
    act_frames: tuple = ()
    type_params: tuple = ()
    life_params: tuple = ()
    obligations: tuple = ()
    copy_guard: str | None = None  # None | copy | noncopy | clone (on `subject`)
    subject: Ty | None = None
    field_name: str | None = None
    untracked_only: bool = False
    live_ports: tuple = ()
    below_not_freeze: bool = False
    search: bool = True
    fresh_vids: int = 0
    fresh_regions: int = 0
    completion_cap: int | None = None

    def __lt__(self, other: "Transition") -> bool:
        return self.label < other.label

    def __repr__(self) -> str:
        return f"<t {self.label}>"


@dataclass(frozen=True)
class Firing:
    """An enabled firing instance: transition, chosen input tokens (one per
    port, in port order), and the instantiation record."""

    transition: Transition
    args: tuple
    inst: "_unify.InstRecord"

    def chi(self) -> dict:
        """Input choice as place -> multiset."""
        by_place: dict = {}
        for port, tok in zip(self.transition.ports, self.args):
            by_place.setdefault(port.place, []).append(tok)
        return {p: Multiset(toks) for p, toks in by_place.items()}

    def render(self) -> str:
        args = ",".join(repr(a) for a in self.args)
        lifes = ",".join(f"{k}={_label_str(v)}" for k, v in self.inst.subst.lmap)
        fresh = ",".join(
            [f"v{v}" for v in self.inst.new_vids] + [_label_str(r) for r in self.inst.new_regions]
        )
        return f"{self.transition.label}({args};{lifes};{fresh})"


@dataclass(frozen=True)
class Net:
    universe: Universe
    facts: FactTables
    transitions: tuple
    env: SigEnv

    def search_transitions(self) -> tuple:
        return tuple(t for t in self.transitions if t.search)

    def transition(self, label: str) -> Transition:
        for t in self.transitions:
            if t.label == label:
                return t
        raise KeyError(label)


def _src_vid(src: tuple, args, inst) -> int:
    tag, idx = src
    if tag == "port":
        return args[idx].vid
    if tag == "fresh":
        return inst.new_vids[idx]
    raise NetError(f"bad vid source {src!r}")


def _src_region(src: tuple, args, inst) -> int:
    tag, idx = src
    if tag == "port":
        reg = args[idx].region()
        if reg is None:
            raise NetError("source token carries no region")
        return reg
    if tag == "fresh":
        return inst.new_regions[idx]
    if tag == "life":
        reg = inst.subst.lget(idx)
        if reg is None:
            raise NetError(f"lifetime {idx} unresolved at firing time")
        return reg
    raise NetError(f"bad region source {src!r}")


def eval_frames(t: Transition, args, inst) -> tuple:
    frames = []
    for spec in t.act_frames:
        owner = _src_vid(spec.owner_src, args, inst)
        if spec.kind == F_FREEZE:
            frames.append(Frame(F_FREEZE, owner))
        else:
            borrower = _src_vid(spec.borrower_src, args, inst)
            region = _src_region(spec.region_src, args, inst)
            frames.append(Frame(spec.kind, owner, borrower, region))
    return tuple(frames)


def _eval_outs(t: Transition, args, inst) -> list:
    out = []
    for spec in t.outs:
        vid = _src_vid(spec.vid_src, args, inst)
        if spec.region_src is not None:
            tok = make_token(vid, spec.place.ty, _src_region(spec.region_src, args, inst))
        else:
            tok = make_token(vid, spec.place.ty)
        out.append((spec.place, tok))
    return out


def firing_outputs(firing: Firing) -> tuple:
    """Constructed output tokens of a firing (excluding redelivered inputs),
    as (place, token) pairs in template order."""
    return tuple(_eval_outs(firing.transition, firing.args, firing.inst))


def fire(cfg: Config, firing: Firing) -> Config:
    """Apply an enabled firing: marking minus inputs plus outputs, stack
    updated per the transition's action. Raises NotEnabled / PopMismatch when
    the precondition does not hold."""
    t = firing.transition
    counts: dict = {}
    for place, ms in cfg.place_items():
        counts[place] = dict(ms.items())
    for place, chosen in firing.chi().items():
        have = counts.get(place, {})
        for tok, n in chosen.items():
            if have.get(tok, 0) < n:
                raise NotEnabled(f"{t.label}: token {tok!r} not available in {place!r}")
            have[tok] -= n

    produced: list = []
    for port, tok in zip(t.ports, firing.args):
        if port.redeliver:
            produced.append((port.place, tok))
    produced.extend(_eval_outs(t, firing.args, firing.inst))

    for place, tok in produced:
        counts.setdefault(place, {})
        counts[place][tok] = counts[place].get(tok, 0) + 1

    marking = {p: Multiset(c.items()) for p, c in counts.items()}

    if t.act_kind == "none":
        stack = cfg.stack
    elif t.act_kind == "push":
        stack = eval_frames(t, firing.args, firing.inst) + cfg.stack
    elif t.act_kind == "pop":
        frames = eval_frames(t, firing.args, firing.inst)
        if cfg.stack[: len(frames)] != frames:
            raise PopMismatch(f"{t.label}: {frames!r} is not a stack prefix")
        stack = cfg.stack[len(frames) :]
    else:
        raise NetError(f"bad stack action {t.act_kind!r}")

    return Config(marking, stack)


def _static_guard_ok(net: Net, t: Transition) -> bool:
    if t.copy_guard is None:
        return True
    if t.copy_guard == "copy":
        return is_copy(t.subject, net.facts)
    if t.copy_guard == "noncopy":
        return not is_copy(t.subject, net.facts)
    if t.copy_guard == "clone":
        return net.facts.has_impl(t.subject, CLONE)
    raise NetError(f"bad copy guard {t.copy_guard!r}")


def _port_assignments(cfg: Config, t: Transition) -> Iterator:
    """Ordered per-port token choices, respecting multiplicities; places are
    consulted in port order, tokens in color order."""

    def rec(i: int, chosen: list, taken: dict) -> Iterator:
        if i == len(t.ports):
            yield tuple(chosen)
            return
        place = t.ports[i].place
        ms = cfg.tokens(place)
        for tok, n in ms.items():
            used = taken.get((place, tok), 0)
            if used >= n:
                continue
            taken[(place, tok)] = used + 1
            chosen.append(tok)
            yield from rec(i + 1, chosen, taken)
            chosen.pop()
            taken[(place, tok)] = used

    yield from rec(0, [], {})


def enabled_instances(net: Net, cfg: Config, t: Transition) -> Iterator[Firing]:
    """All enabled firing instances of `t` at `cfg`, in deterministic order."""
    if not _static_guard_ok(net, t):
        return
    tracked = cfg.tracked_borrowers()
    on_stack = cfg.stack_regions()
    for args in _port_assignments(cfg, t):
        if t.untracked_only and any(tok.vid in tracked for tok in args):
            continue
        live_ok = True
        for i in t.live_ports:
            reg = args[i].region()
            if reg is None or reg not in on_stack:
                live_ok = False
                break
        if not live_ok:
            continue
        if t.below_not_freeze:
            if len(cfg.stack) < 2:
                continue
            below = cfg.stack[1]
            if below.kind == F_FREEZE and below.owner == args[0].vid:
                continue
        if t.act_kind == "pop":
            # Pop frames reference input tokens only, never fresh slots.
            try:
                frames = eval_frames(t, args, _unify.InstRecord(Subst()))
            except NetError:
                continue
            if cfg.stack[: len(frames)] != frames:
                continue
        for inst in _unify.solve_guard(net, t, cfg, args):
            yield Firing(t, args, inst)


def all_enabled(net: Net, cfg: Config, search_only: bool = True) -> Iterator[Firing]:
    transitions = net.search_transitions() if search_only else net.transitions
    for t in transitions:
        yield from enabled_instances(net, cfg, t)
