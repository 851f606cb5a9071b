"""borrownet: synthesizes compilable safe-Rust API call sequences from public
signatures by exploring a borrow-tracking colored Petri net."""

from .build import build_net, build_universe
from .net import Config, Net, fire, initial_config
from .reach import Bounds, ReachGraph, canon, saturate
from .sigenv import SigEnv, load_sigenv
from .synth import Goal, Witness, emit, synthesize
from .typesys import Ty, Universe, parse_type, render

__all__ = [
    "Bounds",
    "Config",
    "Goal",
    "Net",
    "ReachGraph",
    "SigEnv",
    "Ty",
    "Universe",
    "Witness",
    "build_net",
    "build_universe",
    "canon",
    "emit",
    "fire",
    "initial_config",
    "load_sigenv",
    "parse_type",
    "render",
    "saturate",
    "synthesize",
]
