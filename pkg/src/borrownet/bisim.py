"""Differential driver between the net's firing semantics and the independent
statement-semantics oracle.

Both systems start empty and are stepped in lockstep along random
statement-correct traces. At every prefix the sets of enabled actions must
agree (through the maintained binding-to-token correspondence) and the
post-states must stay structurally isomorphic up to renaming of identifiers
and regions. Divergences are report content, and test failures.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import oracle as orc
from .build import CallTransition
from .net import (
    BLK,
    F_FREEZE,
    F_MUT,
    F_SHR,
    FRZ,
    KIND_CALL,
    K_BORROW_MUT,
    K_BORROW_SHR,
    K_BORROW_SHR_AGAIN,
    K_DEREF_COPY,
    K_DROP_OWN,
    K_DUP_CLONE,
    K_DUP_COPY,
    K_FIELD_MOVE,
    K_FIELD_REF,
    K_FIELD_REF_MUT,
    K_MOVE,
    K_REBORROW_MUT,
    K_REBORROW_SHR,
    OWN,
    POP_KINDS,
    Config,
    Firing,
    Net,
    all_enabled,
    fire,
    initial_config,
)
from .typesys import fv_lifetimes, render


class BisimInternalError(Exception):
    pass


def net_abstract_action(f: Firing) -> tuple:
    """Statement-level label of a firing: kind plus operand value ids."""
    t = f.transition
    k = t.kind
    if k == KIND_CALL:
        if not isinstance(t, CallTransition):  # pragma: no cover
            raise BisimInternalError(t.label)
        tsub = tuple((g, render(ty)) for g, ty in t.tsub)
        return ("call", t.item.name, tsub, tuple(tok.vid for tok in f.args))
    if k in (K_BORROW_SHR, K_BORROW_SHR_AGAIN):
        return ("borrow_shr", f.args[0].vid)
    if k == K_BORROW_MUT:
        return ("borrow_mut", f.args[0].vid)
    if k == K_REBORROW_MUT:
        return ("reborrow_mut", f.args[0].vid)
    if k == K_REBORROW_SHR:
        return ("reborrow_shr", f.args[0].vid)
    if k == K_FIELD_MOVE:
        return ("projmove", f.args[0].vid, t.field_name)
    if k in (K_FIELD_REF, K_FIELD_REF_MUT):
        return ("projref", f.args[0].vid, t.field_name)
    if k == K_DEREF_COPY:
        return ("deref", f.args[0].vid)
    if k == K_DUP_COPY:
        return ("dup_copy", f.args[0].vid)
    if k == K_DUP_CLONE:
        return ("dup_clone", f.args[0].vid)
    if k in (K_MOVE, K_DROP_OWN):
        return ("drop", f.args[0].vid)
    if k in POP_KINDS:
        return ("drop", f.args[1].vid)
    raise BisimInternalError(f"no abstraction for kind {k!r}")


def net_enabled_actions(net: Net, cfg: Config) -> dict:
    out: dict = {}
    for f in all_enabled(net, cfg):
        out.setdefault(net_abstract_action(f), []).append(f)
    return out


def map_oracle_action(action: tuple, bij: dict) -> tuple:
    """Rename an oracle action's binding names into net value ids."""
    kind = action[0]
    if kind == "call":
        return (kind, action[1], action[2], tuple(bij[a] for a in action[3]))
    mapped = (kind, bij[action[1]]) + tuple(action[2:])
    return mapped


def correspond(state: orc.OracleState, cfg: Config, bij: dict) -> str | None:
    """Structural isomorphism check between an oracle state and a net
    configuration through the name-to-id map; returns a description of the
    first mismatch, or None."""
    vid_tokens: dict = {}
    total = 0
    for place, tok in cfg.all_tokens():
        vid_tokens[tok.vid] = (place, tok)
        total += 1
    if len(state.bindings) != total:
        return f"{len(state.bindings)} bindings vs {total} tokens"

    region_map: dict = {}
    used_labels: set = set()

    def match_region(oreg, nreg) -> str | None:
        if (oreg is None) != (nreg is None):
            return f"region presence mismatch ({oreg} vs {nreg})"
        if oreg is None:
            return None
        if oreg in region_map:
            if region_map[oreg] != nreg:
                return f"region {oreg} maps to both {region_map[oreg]} and {nreg}"
            return None
        if nreg in used_labels:
            return f"label {nreg} matched twice"
        region_map[oreg] = nreg
        used_labels.add(nreg)
        return None

    frames = [f for f in cfg.stack if f.kind != F_FREEZE]
    if len(frames) != len(state.records):
        return f"{len(state.records)} records vs {len(frames)} frames"
    kind_map = {orc.SHR: F_SHR, orc.MUT: F_MUT}
    for rec, frame in zip(state.records, frames):
        if kind_map[rec.kind] != frame.kind:
            return f"record kind {rec.kind} vs frame {frame.kind}"
        if bij.get(rec.owner) != frame.owner:
            return f"record owner {rec.owner} vs frame owner v{frame.owner}"
        if bij.get(rec.borrower) != frame.borrower:
            return f"record borrower {rec.borrower} vs frame borrower v{frame.borrower}"
        err = match_region(rec.region, frame.region)
        if err:
            return err

    for name, b in state.bindings:
        vid = bij.get(name)
        if vid is None:
            return f"binding {name} has no token image"
        if vid not in vid_tokens:
            return f"binding {name} maps to missing v{vid}"
        place, tok = vid_tokens[vid]
        if place.cap != b.mode:
            return f"{name}: mode {b.mode} vs place {place.cap}"
        if place.ty != b.ty:
            return f"{name}: type {render(b.ty)} vs place {render(place.ty)}"
        oreg = b.region if fv_lifetimes(b.ty) else None
        err = match_region(oreg, tok.region())
        if err:
            return f"{name}: {err}"

    freeze_owners = [f.owner for f in cfg.stack if f.kind == F_FREEZE]
    if len(freeze_owners) != len(set(freeze_owners)):
        return "duplicate freeze sentinel"
    shr_owners = {f.owner for f in cfg.stack if f.kind == F_SHR}
    if set(freeze_owners) != shr_owners:
        return "freeze sentinels do not match shared-borrow owners"
    return None


@dataclass
class Divergence:
    trial: int
    prefix: tuple
    kind: str  # enabled | post
    detail: str

    def render(self) -> str:
        steps = " ; ".join(repr(a) for a in self.prefix) or "<empty>"
        return f"trial {self.trial}: {self.kind} divergence after [{steps}]: {self.detail}"


@dataclass
class BisimReport:
    trials: int = 0
    steps: int = 0
    divergences: list = field(default_factory=list)

    def ok(self) -> bool:
        return not self.divergences

    def render(self) -> str:
        head = f"trials={self.trials} steps={self.steps} divergences={len(self.divergences)}"
        return "\n".join([head] + [d.render() for d in self.divergences])


def bisim_check(net: Net, u: orc.OracleEnv, trace_len: int, n_trials: int, seed: int) -> BisimReport:
    """Run seeded random traces through both systems, comparing enabled
    action sets at every prefix and post-state structure after every step.
    Stops each trial at the first divergence (recorded with its prefix)."""
    rng = random.Random(seed)
    report = BisimReport(trials=n_trials)
    for trial in range(n_trials):
        state = orc.initial_state()
        cfg = initial_config()
        bij: dict = {}
        prefix: list = []
        for _ in range(trace_len):
            o_actions = orc.enabled_actions(u, state)
            n_actions = net_enabled_actions(net, cfg)
            o_mapped = {map_oracle_action(a, bij) for a in o_actions}
            n_set = set(n_actions)
            if o_mapped != n_set:
                only_o = sorted(o_mapped - n_set, key=repr)[:3]
                only_n = sorted(n_set - o_mapped, key=repr)[:3]
                report.divergences.append(
                    Divergence(trial, tuple(prefix), "enabled", f"oracle-only={only_o} net-only={only_n}")
                )
                break
            if not o_actions:
                break
            action = o_actions[rng.randrange(len(o_actions))]
            stmt = orc.action_statement(u, state, action)
            outcome = orc.step(u, state, stmt)
            if not outcome.ok:  # pragma: no cover - enabled implies steppable
                raise BisimInternalError(f"oracle refused its own action: {outcome.reason}")
            matched = None
            for f in n_actions[map_oracle_action(action, bij)]:
                succ = fire(cfg, f)
                bij2 = dict(bij)
                fresh_vid = f.inst.new_vids[0] if f.transition.fresh_vids else None
                if (outcome.new_name is None) != (fresh_vid is None):
                    continue
                if outcome.new_name is not None:
                    bij2[outcome.new_name] = fresh_vid
                if correspond(outcome.state, succ, bij2) is None:
                    matched = (succ, bij2)
                    break
            if matched is None:
                sample = next(iter(n_actions[map_oracle_action(action, bij)]))
                succ = fire(cfg, sample)
                bij2 = dict(bij)
                if outcome.new_name is not None and sample.transition.fresh_vids:
                    bij2[outcome.new_name] = sample.inst.new_vids[0]
                detail = correspond(outcome.state, succ, bij2) or "no matching instantiation"
                report.divergences.append(Divergence(trial, tuple(prefix), "post", detail))
                break
            cfg, bij = matched[0], matched[1]
            state = outcome.state
            prefix.append(action)
            report.steps += 1
    return report
