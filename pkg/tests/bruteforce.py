"""Exhaustive depth-first enumerator over the canonical bounded state space.

Written as an explicit-stack depth-first search, independently of the
breadth-first worklist engine, so node and edge counts can be compared
exactly. Deliberately the dumbest correct thing.
"""

from __future__ import annotations

from borrownet.net import Net, all_enabled, fire, initial_config
from borrownet.reach import Bounds, budget_ok, canon


def dfs_enumerate(net: Net, bounds: Bounds):
    """Returns (set of canonical nodes, set of edge keys)."""
    root = canon(initial_config())
    nodes = {root}
    edges = set()
    todo = [root]
    while todo:
        cfg = todo.pop()
        for firing in all_enabled(net, cfg):
            succ = fire(cfg, firing)
            if not budget_ok(succ, bounds):
                continue
            csucc = canon(succ)
            edges.add((cfg, firing.render(), csucc))
            if csucc not in nodes:
                nodes.add(csucc)
                todo.append(csucc)
    return nodes, edges
