"""shortvec: cycle-level simulator of a short-vector execution backend.

Element-group scoreboard scheduling, a decoupled-access load/store unit,
a pre-commit frontend, and a banked register file, with a functional
oracle for bit-exact checking and a small service/CLI surface for runs
and parameter sweeps.
"""

from .config import SimConfig, load_config
from .engine import RunResult, latency_bound, run
from .isa import Opcode, VType, VectorInstruction
from .program import Program, gen_kernel, parse, render

__all__ = [
    "SimConfig",
    "load_config",
    "RunResult",
    "latency_bound",
    "run",
    "Opcode",
    "VType",
    "VectorInstruction",
    "Program",
    "gen_kernel",
    "parse",
    "render",
]

__version__ = "0.1.0"
