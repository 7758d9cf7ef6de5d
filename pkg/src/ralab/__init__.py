"""Random-access protocol laboratory.

Implements a two-step contention procedure driven by context ids, the
classic four-step contention procedure, base-station-side traffic
estimation, Markov-chain load analysis with a preamble-pool optimizer, a
slot-driven Monte Carlo simulator, and a command-line front end.
"""

from . import analysis, core, estimator, metrics, protocol, scenario, simulator

__all__ = [
    "analysis",
    "core",
    "estimator",
    "metrics",
    "protocol",
    "scenario",
    "simulator",
]

__version__ = "0.1.0"
