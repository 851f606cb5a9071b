"""End-to-end command line driver: load a signature file, build the net,
saturate the bounded reachability graph, synthesize a witness for the goal,
emit a compilable snippet, and optionally run the external compiler on it.

Exit codes: 0 with at least one emitted snippet; 1 when saturation completes
without a goal witness; 2 on input or resource errors (including a missing
compiler under --check).
"""

from __future__ import annotations

import argparse
import os
import shutil
import subprocess
import sys
from pathlib import Path

from .build import build_net
from .net import BLK, FRZ, OWN
from .reach import Bounds, BudgetExceeded, export_edges, saturate
from .sigenv import SigError, load_sigenv
from .synth import Goal, emit, synthesize
from .typesys import TypeError_, hookify, parse_type, render

EXIT_OK = 0
EXIT_NO_WITNESS = 1
EXIT_INPUT = 2


class GoalError(Exception):
    pass


def parse_goal(text: str, universe) -> Goal:
    """Grammar: comma-joined requirements ``<cap>:<type> >= <n>`` with
    capability one of own/frz/blk and the type in the concrete type grammar."""
    requires = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ">=" not in part:
            raise GoalError(f"missing '>=' in {part!r}")
        lhs, _, count_s = part.rpartition(">=")
        try:
            n = int(count_s.strip())
        except ValueError:
            raise GoalError(f"bad count in {part!r}")
        if n < 0:
            raise GoalError(f"negative count in {part!r}")
        cap, sep, tystr = lhs.partition(":")
        if not sep:
            raise GoalError(f"missing ':' in {part!r}")
        cap = cap.strip()
        if cap not in (OWN, FRZ, BLK):
            raise GoalError(f"unknown capability {cap!r} (expected own, frz, or blk)")
        try:
            ty = hookify(parse_type(tystr.strip()))
        except TypeError_ as e:
            raise GoalError(f"bad type in {part!r}: {e}")
        if ty not in universe:
            raise GoalError(f"type {render(ty)} is not in the ground universe")
        requires.append((cap, ty, n))
    if not requires:
        raise GoalError("empty goal")
    return Goal(tuple(requires))


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="borrownet",
        description="Synthesize compilable Rust API call snippets from a signature file.",
    )
    p.add_argument("--sig", required=True, help="signature environment (JSON)")
    p.add_argument("--goal", required=True, help="goal, e.g. \"own:u8>=1, frz:R>=1\"")
    p.add_argument("--bound-tokens", type=int, default=2, metavar="N", help="token cap per place")
    p.add_argument("--bound-depth", type=int, default=4, metavar="D", help="borrow stack depth cap")
    p.add_argument("--ref-depth", type=int, default=2, metavar="K", help="reference nesting in the universe")
    p.add_argument("--max-states", type=int, default=20000, metavar="N", help="hard cap on explored states")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory")
    p.add_argument("--check", action="store_true", help="compile each emitted snippet (RUSTC env var)")
    p.add_argument("--emit-graph", action="store_true", help="also write the reachability edge list")
    p.add_argument("--seed", type=int, default=0, help="seed echoed into snippet headers")
    return p


def compile_snippet(rustc: str, path: Path, outdir: Path) -> bool:
    res = subprocess.run(
        [rustc, "--edition=2021", "--emit=metadata", "--out-dir", str(outdir / "check"), str(path)],
        capture_output=True,
        text=True,
    )
    if res.returncode != 0:
        sys.stderr.write(res.stderr)
        return False
    return True


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    for flag, value in (
        ("--bound-tokens", args.bound_tokens),
        ("--bound-depth", args.bound_depth),
        ("--ref-depth", args.ref_depth),
        ("--max-states", args.max_states),
    ):
        if value < 0:
            sys.stderr.write(f"{flag} must be non-negative\n")
            return EXIT_INPUT

    try:
        env = load_sigenv(args.sig)
    except (SigError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT

    net, report = build_net(env, ref_depth=args.ref_depth)
    sys.stderr.write(report.render() + "\n")

    try:
        goal = parse_goal(args.goal, net.universe)
    except GoalError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_INPUT

    bounds = Bounds(args.bound_tokens, args.bound_depth)
    try:
        graph = saturate(net, bounds, max_states=args.max_states)
    except BudgetExceeded as e:
        sys.stderr.write(f"error: {e} (raise --max-states)\n")
        return EXIT_INPUT
    sys.stderr.write(f"reachability: {len(graph)} nodes, {len(graph.edges)} edges\n")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.emit_graph:
        (outdir / "graph.txt").write_text(export_edges(graph), encoding="utf-8")

    witness = synthesize(net, graph, goal, bounds)
    if witness is None:
        sys.stderr.write("no witness within bounds\n")
        return EXIT_NO_WITNESS

    header = (
        "generated by borrownet",
        f"sig: {os.path.basename(args.sig)}",
        f"goal: {args.goal}",
        f"bounds: tokens={args.bound_tokens} depth={args.bound_depth} ref-depth={args.ref_depth}",
        f"max-states={args.max_states} seed={args.seed}",
    )
    text = emit(net, witness, header)
    snippet = outdir / f"snippet_{witness.node}.rs"
    snippet.write_text(text, encoding="utf-8")
    manifest = f'goal="{args.goal}" witness_len={len(witness)} node={witness.node_hash}'
    (outdir / "manifest.txt").write_text(manifest + "\n", encoding="utf-8")
    print(manifest)
    print(f"wrote {snippet}")

    if args.check:
        rustc = os.environ.get("RUSTC", "rustc")
        if shutil.which(rustc) is None:
            sys.stderr.write(f"error: compiler {rustc!r} not found (set RUSTC)\n")
            return EXIT_INPUT
        if not compile_snippet(rustc, snippet, outdir):
            sys.stderr.write(f"error: {snippet} was rejected by the compiler\n")
            return EXIT_INPUT
        print("compile check passed")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
