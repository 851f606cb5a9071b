"""Goal evaluation, witness backtracking and concrete replay, deterministic
stack closure, and emission of compilable Rust snippets.

Every returned witness replays from the empty initial configuration within
bounds and ends with an empty borrow stack; that is re-verified on each
synthesis result before it is handed out.
"""

from __future__ import annotations

from dataclasses import dataclass

from .build import CallTransition
from .net import (
    BLK,
    FRZ,
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
    OWN,
    Config,
    Firing,
    Net,
    enabled_instances,
    fire,
    firing_outputs,
    initial_config,
)
from .reach import Bounds, ReachGraph, budget_ok, canon
from .sigenv import CLONE, COPY, PRIMITIVES, AssocEq, Outlives, SigEnv, TraitBound
from .typesys import BaseTy, RefTy, Ty, TyVar, render


class SynthError(Exception):
    pass


class NodeUnknown(SynthError):
    pass


class ClosureError(SynthError):
    pass


class NoPopTransition(ClosureError):
    pass


class NonUniquePop(ClosureError):
    """Two distinct pop transitions match the top frame; this indicates a
    model-integrity violation, not a normal search miss."""


class ReplayError(SynthError):
    pass


class UnrenderableFiring(SynthError):
    pass


@dataclass(frozen=True)
class Goal:
    """Required token counts per (capability, ground type); the final witness
    is always extended by stack closure, and with `require_closed` unset only
    nodes that are already closed qualify as goal nodes."""

    requires: tuple  # ((cap, Ty, min count), ...)
    require_closed: bool = True

    def render(self) -> str:
        return ", ".join(f"{cap}:{render(ty)}>={n}" for cap, ty, n in self.requires)


def goal_holds(cfg: Config, goal: Goal) -> bool:
    for cap, ty, n in goal.requires:
        have = 0
        for place, ms in cfg.place_items():
            if place.cap == cap and place.ty == ty:
                have += ms.total()
        if have < n:
            return False
    if not goal.require_closed and cfg.stack:
        return False
    return True


# ---------------------------------------------------------------------------
# Backtracking and concrete replay


def backtrack(graph: ReachGraph, node: int) -> list:
    """Parent-chain firing sequence from the root to `node` (empty for the
    root itself)."""
    return [f for f, _ in backtrack_path(graph, node)]


def backtrack_path(graph: ReachGraph, node: int) -> list:
    if not 0 <= node < len(graph.configs):
        raise NodeUnknown(f"node {node} not in graph")
    chain_: list = []
    idx = node
    while graph.parent[idx] is not None:
        src, firing = graph.parent[idx]
        chain_.append((firing, idx))
        idx = src
    chain_.reverse()
    return chain_


@dataclass(frozen=True)
class Step:
    """One concretely replayed firing plus the tokens it freshly produced."""

    firing: Firing
    fresh: tuple  # ((Place, Token), ...) fresh-id outputs, in template order

    def result_vid(self) -> int | None:
        return self.fresh[0][1].vid if self.fresh else None


def _make_step(firing: Firing) -> Step:
    fresh = tuple(
        (place, tok)
        for spec, (place, tok) in zip(firing.transition.outs, firing_outputs(firing))
        if spec.vid_src[0] == "fresh"
    )
    return Step(firing, fresh)


def replay_concrete(net: Net, graph: ReachGraph, node: int):
    """Re-fire the backtracked witness from the empty configuration.

    Edges are recorded in canonical coordinates; replay searches, per edge,
    for the enabled instance of that transition whose successor canonicalizes
    to the recorded target. Renaming invariance guarantees one exists.
    """
    cfg = initial_config()
    steps: list = []
    for firing, target in backtrack_path(graph, node):
        goal_cfg = graph.configs[target]
        found = None
        for cand in enabled_instances(net, cfg, firing.transition):
            succ = fire(cfg, cand)
            if canon(succ) == goal_cfg:
                found = (cand, succ)
                break
        if found is None:
            raise ReplayError(f"cannot replay {firing.render()} toward node {target}")
        cand, cfg = found
        steps.append(_make_step(cand))
    return steps, cfg


def close_stack(net: Net, cfg: Config):
    """Fire the unique discharge transition for the top frame until the stack
    is empty; raises NoPopTransition / NonUniquePop when the model's
    uniqueness assumption fails."""
    steps: list = []
    while cfg.stack:
        candidates: list = []
        for t in net.search_transitions():
            if t.act_kind != "pop":
                continue
            candidates.extend(enabled_instances(net, cfg, t))
        distinct = {(f.transition.label, f.args) for f in candidates}
        if not candidates:
            raise NoPopTransition(f"no transition discharges {cfg.stack[0]!r}")
        if len(distinct) > 1:
            raise NonUniquePop(f"multiple discharges for {cfg.stack[0]!r}: {sorted(l for l, _ in distinct)}")
        firing = candidates[0]
        steps.append(_make_step(firing))
        cfg = fire(cfg, firing)
    return steps, cfg


@dataclass(frozen=True)
class Witness:
    steps: tuple
    closing: tuple
    final: Config
    node: int
    node_hash: str

    def all_steps(self) -> tuple:
        return self.steps + self.closing

    def __len__(self) -> int:
        return len(self.steps) + len(self.closing)


def verify_witness(net: Net, witness: Witness, bounds: Bounds) -> None:
    """Soundness check run on every synthesis result: the full sequence
    replays from the empty configuration within bounds and ends closed."""
    cfg = initial_config()
    for step in witness.all_steps():
        cfg = fire(cfg, step.firing)
        if not budget_ok(cfg, bounds):
            raise SynthError(f"witness leaves the budget at {step.firing.render()}")
    if cfg.stack:
        raise SynthError("witness does not end with an empty stack")
    if cfg != witness.final:
        raise SynthError("witness replay mismatch")


def synthesize(net: Net, graph: ReachGraph, goal: Goal, bounds: Bounds) -> Witness | None:
    """First goal-satisfying node in discovery order whose closure yields a
    valid bounded witness; None when no node satisfies the goal or none of
    them closes within bounds (closure pops can refill an own place past its
    cap, so the budget is re-checked over the whole closed sequence)."""
    for idx, cfg in enumerate(graph.configs):
        if not goal_holds(cfg, goal):
            continue
        try:
            steps, concrete = replay_concrete(net, graph, idx)
            closing, final = close_stack(net, concrete)
            witness = Witness(tuple(steps), tuple(closing), final, idx, graph.node_hash(idx))
            verify_witness(net, witness, bounds)
        except (ClosureError, ReplayError, SynthError):
            continue
        return witness
    return None


# ---------------------------------------------------------------------------
# Emission

_NAME_PREFIX = {
    KIND_CALL: "x",
    K_BORROW_SHR: "r",
    K_BORROW_SHR_AGAIN: "r",
    K_BORROW_MUT: "r",
    K_FIELD_REF: "r",
    K_FIELD_REF_MUT: "r",
    K_REBORROW_MUT: "r",
    K_REBORROW_SHR: "r",
    K_FIELD_MOVE: "y",
    K_DEREF_COPY: "y",
    K_DUP_COPY: "y",
    K_DUP_CLONE: "y",
}

# Consuming one of these marks the consumed binding as needing `let mut`.
_MUT_CONSUMERS = frozenset({K_BORROW_MUT, K_FIELD_REF_MUT, K_REBORROW_MUT, K_REBORROW_SHR})

_DROP_KINDS = frozenset(
    {
        K_MOVE,
        K_DROP_OWN,
        K_END_MUT,
        K_END_SHR,
        K_END_SHR_LAST,
        K_END_FIELD_REF_MUT,
        K_END_REBORROW_MUT,
        K_END_REBORROW_SHR,
    }
)


def render_statement(step: Step, names: dict) -> tuple | None:
    """(result vid | None, statement text without the let prefix) for one
    step; None for steps with no source-level counterpart."""
    t = step.firing.transition
    kind = t.kind
    args = step.firing.args
    res = step.result_vid()

    def nm(i: int) -> str:
        vid = args[i].vid
        if vid not in names:
            raise UnrenderableFiring(f"no binding for v{vid} in {t.label}")
        return names[vid]

    if kind == K_COPY_USE:
        return None
    if kind == KIND_CALL:
        if not isinstance(t, CallTransition):
            raise UnrenderableFiring(t.label)
        fn = t.item.name
        if t.tsub:
            fn += "::<" + ", ".join(render(ty) for _, ty in t.tsub) + ">"
        call = f"{fn}({', '.join(nm(i) for i in range(len(args)))})"
        return res, call
    if kind in (K_BORROW_SHR, K_BORROW_SHR_AGAIN):
        return res, f"&{nm(0)}"
    if kind == K_BORROW_MUT:
        return res, f"&mut {nm(0)}"
    if kind in _DROP_KINDS:
        victim = 0 if kind in (K_MOVE, K_DROP_OWN) else 1
        return None, f"drop({nm(victim)})"
    if kind == K_FIELD_MOVE:
        return res, f"{nm(0)}.{t.field_name}"
    if kind == K_FIELD_REF:
        return res, f"&{nm(0)}.{t.field_name}"
    if kind == K_FIELD_REF_MUT:
        return res, f"&mut {nm(0)}.{t.field_name}"
    if kind == K_DEREF_COPY:
        return res, f"*{nm(0)}"
    if kind == K_REBORROW_MUT:
        return res, f"&mut *{nm(0)}"
    if kind == K_REBORROW_SHR:
        return res, f"&*{nm(0)}"
    if kind == K_DUP_COPY:
        return res, f"{nm(0)}"
    if kind == K_DUP_CLONE:
        return res, f"{nm(0)}.clone()"
    raise UnrenderableFiring(f"no rendering rule for kind {kind!r}")


def emit_body(witness: Witness) -> list:
    """One statement per firing, in order; bindings later borrowed mutably or
    reborrowed get a `let mut` qualifier."""
    names: dict = {}
    bound_at: dict = {}  # vid -> statement index that bound it
    rendered: list = []  # (result vid | None, text)
    needs_mut: set = set()

    for step in witness.all_steps():
        t = step.firing.transition
        if t.kind in _MUT_CONSUMERS:
            vid = step.firing.args[0].vid
            if vid in bound_at:
                needs_mut.add(bound_at[vid])
        out = render_statement(step, names)
        if out is None:
            continue
        res, text = out
        if res is not None:
            name = f"{_NAME_PREFIX.get(t.kind, 'x')}{res}"
            names[res] = name
            bound_at[res] = len(rendered)
            rendered.append((res, text))
        else:
            rendered.append((None, text))

    lines = []
    for i, (res, text) in enumerate(rendered):
        if res is None:
            lines.append(f"{text};")
        else:
            qual = "mut " if i in needs_mut else ""
            lines.append(f"let {qual}{names[res]} = {text};")
    return lines


# ---------------------------------------------------------------------------
# Compilable scaffold


def _trait_table(env: SigEnv) -> dict:
    """Custom trait name -> sorted associated type names mentioned anywhere."""
    traits: dict = {}
    for _, trait in env.facts.impls:
        if trait not in (COPY, CLONE):
            traits.setdefault(trait, set())
    for (ty, trait, name), _tgt in env.facts.assoc:
        traits.setdefault(trait, set()).add(name)
    for item in env.items:
        for b in item.bounds:
            if isinstance(b, TraitBound) and b.trait not in (COPY, CLONE):
                traits.setdefault(b.trait, set())
            elif isinstance(b, AssocEq):
                traits.setdefault(b.trait, set()).add(b.name)
    return {t: sorted(names) for t, names in sorted(traits.items())}


def _fn_stub(item, env: SigEnv) -> str:
    outlives: dict = {}
    for b in item.bounds:
        if isinstance(b, Outlives):
            outlives.setdefault(b.longer, []).append(b.shorter)
    var_bounds: dict = {}
    for b in item.bounds:
        if isinstance(b, TraitBound) and isinstance(b.ty, TyVar):
            var_bounds.setdefault(b.ty.name, []).append(b.trait)
        elif isinstance(b, AssocEq) and isinstance(b.ty, TyVar):
            var_bounds.setdefault(b.ty.name, []).append(
                f"{b.trait}<{b.name} = {render(b.target)}>"
            )
    parts = []
    for l in item.lifetimes:
        if l in outlives:
            parts.append(f"{l}: {' + '.join(outlives[l])}")
        else:
            parts.append(l)
    for g in item.generics:
        if g in var_bounds:
            parts.append(f"{g}: {' + '.join(var_bounds[g])}")
        else:
            parts.append(g)
    generics = f"<{', '.join(parts)}>" if parts else ""
    params = ", ".join(f"a{i}: {render(p)}" for i, p in enumerate(item.params))
    ret = f" -> {render(item.ret)}" if item.ret is not None else ""
    return f"fn {item.name}{generics}({params}){ret} {{ unimplemented!() }}"


def render_scaffold(env: SigEnv) -> list:
    """Stub definitions that make emitted bodies compile stand-alone: structs,
    opaque nominal types, custom traits with their associated types, declared
    impls, and the callable items with unimplemented bodies."""
    lines: list = []
    struct_names = dict(env.facts.struct_order)
    for name in sorted(b.name for b in env.base_types):
        if name in PRIMITIVES:
            continue
        if name in struct_names:
            fields = ", ".join(
                f"{f}: {render(env.facts.field_lookup(name, f))}" for f in struct_names[name]
            )
            lines.append(f"struct {name} {{ {fields} }}")
        else:
            lines.append(f"struct {name};")

    traits = _trait_table(env)
    for trait, assoc_names in traits.items():
        if assoc_names:
            body = " ".join(f"type {a};" for a in assoc_names)
            lines.append(f"trait {trait} {{ {body} }}")
        else:
            lines.append(f"trait {trait} {{}}")

    prim_subjects = {BaseTy(n) for n in PRIMITIVES}
    for ty, trait in sorted(env.facts.impls, key=lambda p: (render(p[0]), p[1])):
        if ty in prim_subjects or not isinstance(ty, BaseTy):
            continue
        tyname = render(ty)
        if trait == COPY:
            lines.append(f"impl Copy for {tyname} {{}}")
        elif trait == CLONE:
            lines.append(
                f"impl Clone for {tyname} {{ fn clone(&self) -> Self {{ unimplemented!() }} }}"
            )
        else:
            assoc_names = traits.get(trait, [])
            if assoc_names:
                body_items = []
                for a in assoc_names:
                    target = env.facts.assoc_lookup(ty, trait, a)
                    body_items.append(f"type {a} = {render(target) if target is not None else '()'};")
                lines.append(f"impl {trait} for {tyname} {{ {' '.join(body_items)} }}")
            else:
                lines.append(f"impl {trait} for {tyname} {{}}")

    for item in env.items:
        lines.append(_fn_stub(item, env))
    return lines


def emit(net: Net, witness: Witness, header: tuple = ()) -> str:
    """Wrap the witness body in a self-contained compilable file."""
    lines: list = []
    for h in header:
        lines.append(f"// {h}")
    lines.append(
        "#![allow(unused_variables, unused_mut, dead_code, unused_imports, "
        "dropping_references, dropping_copy_types, path_statements, unused_must_use)]"
    )
    lines.append("")
    lines.extend(render_scaffold(net.env))
    lines.append("")
    lines.append("fn main() {")
    for stmt in emit_body(witness):
        lines.append(f"    {stmt}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def emission_kinds_covered(net: Net) -> list:
    """Transitions in the built net with no rendering rule (totality scan)."""
    missing = []
    for t in net.transitions:
        if t.kind == KIND_CALL:
            continue
        if t.kind == K_COPY_USE:
            continue
        if t.kind not in _NAME_PREFIX and t.kind not in _DROP_KINDS:
            missing.append(t.label)
    return missing
