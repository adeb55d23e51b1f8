"""Eventually strong failure detection for mobile ad hoc networks.

The query/response detector lives in :mod:`manetfd.fdcore`, the gossip
heartbeat baseline in :mod:`manetfd.heartbeat`; :mod:`manetfd.simnet` runs
either over a unit-disk network from :mod:`manetfd.topology`, and
:mod:`manetfd.metrics` turns run logs into tables and verdicts.
"""
from .fdcore import (ConfigurationError, FdState, ProtocolError, QueryMsg, ResponseMsg,
                     RoundStatus, TaggedEntry, fd_init)
from .heartbeat import HbState, HeartbeatMsg, NodeIndex, hb_init
from .simnet import Crash, Move, RunResult, SimConfig, Simulation, SuspicionRecord, run
from .topology import GenerationError, Point, Topology, generate_topology, is_f_covering

__all__ = [
    "ConfigurationError", "FdState", "ProtocolError", "QueryMsg", "ResponseMsg", "RoundStatus",
    "TaggedEntry", "fd_init", "HbState", "HeartbeatMsg", "NodeIndex", "hb_init", "Crash",
    "Move", "RunResult", "SimConfig", "Simulation", "SuspicionRecord", "run",
    "GenerationError", "Point", "Topology", "generate_topology", "is_f_covering",
]
__version__ = "0.1.0"
