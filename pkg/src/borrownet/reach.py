"""Bounded canonical reachability: the bound tuple, budget predicate,
configuration canonicalization, and breadth-first worklist saturation with a
parent map for witness extraction.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .net import (
    Config,
    DEAD_LABEL,
    F_FREEZE,
    Firing,
    Frame,
    Multiset,
    Net,
    Place,
    Token,
    all_enabled,
    config_dump,
    fire,
    initial_config,
)

_BIG = 1 << 60


class BudgetExceeded(Exception):
    """The configurable hard cap on node count was hit; distinct from normal
    completion of the saturation loop."""

    def __init__(self, limit: int):
        super().__init__(f"state count exceeded the hard cap of {limit}")
        self.limit = limit


@dataclass(frozen=True)
class Bounds:
    """Per-place token caps and the stack depth cap; the universe (with its
    reference-depth bound) travels with the net itself."""

    token_cap: int = 2
    depth_cap: int = 4
    place_caps: tuple = ()  # ((Place, cap), ...) overrides

    def cap(self, place: Place) -> int:
        return dict(self.place_caps).get(place, self.token_cap)


def budget_ok(cfg: Config, bounds: Bounds) -> bool:
    if len(cfg.stack) > bounds.depth_cap:
        return False
    return all(ms.total() <= bounds.cap(place) for place, ms in cfg.place_items())


# ---------------------------------------------------------------------------
# Canonicalization


def canon_with_maps(cfg: Config):
    """Canonical representative of the renaming-equivalence class, plus the
    value-id and region-label renaming maps that produced it.

    Region labels are numbered by first occurrence scanning the stack top to
    bottom; labels not on the stack are inert (no guard can use them) and all
    collapse to one reserved sink label. Value ids are numbered by first
    occurrence over the marking (places in total order, tokens ordered by a
    renaming-invariant key), then over the stack. Token multisets are sorted
    by the resulting color order.
    """
    label_map: dict = {}
    for f in cfg.stack:
        if f.region is not None and f.region not in label_map:
            label_map[f.region] = len(label_map)
    for _, tok in cfg.all_tokens():
        for _, lab in tok.life:
            if lab not in label_map:
                label_map[lab] = DEAD_LABEL

    stack_pos: dict = {}
    for f in cfg.stack:
        for v in (f.owner, f.borrower):
            if v is not None and v not in stack_pos:
                stack_pos[v] = len(stack_pos)

    def tok_key(tok: Token):
        life = tuple((k, label_map[lab]) for k, lab in tok.life)
        return (stack_pos.get(tok.vid, _BIG), life, tok.tctx)

    vid_map: dict = {}
    for place, ms in cfg.place_items():
        for tok in sorted(ms.support(), key=tok_key):
            if tok.vid not in vid_map:
                vid_map[tok.vid] = len(vid_map)
    for f in cfg.stack:
        for v in (f.owner, f.borrower):
            if v is not None and v not in vid_map:
                vid_map[v] = len(vid_map)

    marking = {}
    for place, ms in cfg.place_items():
        toks = []
        for tok, n in ms.items():
            renamed = Token(
                vid_map[tok.vid],
                tuple(sorted((k, label_map[lab]) for k, lab in tok.life)),
                tok.tctx,
            )
            toks.append((renamed, n))
        marking[place] = Multiset(toks)
    stack = tuple(
        Frame(
            f.kind,
            vid_map[f.owner],
            vid_map[f.borrower] if f.borrower is not None else None,
            label_map[f.region] if f.region is not None else None,
        )
        for f in cfg.stack
    )
    return Config(marking, stack), vid_map, label_map


def canon(cfg: Config) -> Config:
    return canon_with_maps(cfg)[0]


def config_hash(cfg: Config) -> str:
    return hashlib.sha256(config_dump(cfg).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Worklist saturation


@dataclass
class ReachGraph:
    """Canonical nodes in discovery order, labeled edges, and the parent map
    (written exactly once, at first discovery)."""

    configs: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    edges: list = field(default_factory=list)  # (src index, Firing, dst index)
    parent: list = field(default_factory=list)  # None for the root

    def add_node(self, cfg: Config, parent) -> int:
        idx = len(self.configs)
        self.configs.append(cfg)
        self.index[cfg] = idx
        self.parent.append(parent)
        return idx

    def node_hash(self, idx: int) -> str:
        return config_hash(self.configs[idx])

    def __len__(self) -> int:
        return len(self.configs)


def saturate(net: Net, bounds: Bounds, max_states: int | None = None) -> ReachGraph:
    """Breadth-first worklist saturation from the canonical initial
    configuration. Every transition, every valid input choice, and every
    instantiation are explored from each node; successors violating the
    budget are rejected; new canonical nodes get their parent set on first
    discovery. FIFO order makes parent-map witnesses shortest in steps."""
    graph = ReachGraph()
    root = canon(initial_config())
    graph.add_node(root, None)
    queue: deque = deque([0])
    while queue:
        src = queue.popleft()
        cfg = graph.configs[src]
        for firing in all_enabled(net, cfg):
            succ = fire(cfg, firing)
            if not budget_ok(succ, bounds):
                continue
            csucc = canon(succ)
            dst = graph.index.get(csucc)
            if dst is None:
                if max_states is not None and len(graph) >= max_states:
                    raise BudgetExceeded(max_states)
                dst = graph.add_node(csucc, (src, firing))
                queue.append(dst)
            graph.edges.append((src, firing, dst))
    return graph


def export_edges(graph: ReachGraph) -> str:
    """Line-oriented edge list (source hash, firing label, target hash),
    stable across runs given identical inputs."""
    hashes = [graph.node_hash(i) for i in range(len(graph))]
    lines = [f"{hashes[s]} {f.render()} {hashes[d]}" for s, f, d in graph.edges]
    return "\n".join(lines) + ("\n" if lines else "")
