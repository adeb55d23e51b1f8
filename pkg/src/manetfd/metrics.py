"""Post-processing of simulation logs.

Everything here is a pure function of a run's records: detection-time
statistics, false-suspicion counts, the two failure-detector class properties
checked against a finite horizon, and the behavioural properties the
correctness argument assumes (MP, RP, MobiP, MobiRP).
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .simnet import SUSPECT, UNSUSPECT, Crash, SuspicionRecord, Witness


class CompletenessViolation(RuntimeError):
    def __init__(self, observer, target):
        super().__init__(f"observer {observer} never permanently suspects crashed node {target}")
        self.observer = observer
        self.target = target


@dataclass(frozen=True)
class DetectionStats:
    mean: float
    max: float
    min: float
    count: int

    @classmethod
    def of(cls, delays: Sequence[float]) -> "DetectionStats":
        return cls(sum(delays) / len(delays), max(delays), min(delays), len(delays))


def _crash_times(crashes: Iterable) -> Dict[int, float]:
    out: Dict[int, float] = {}
    for c in crashes:
        node, t = (c.node, c.time) if isinstance(c, Crash) else c
        out[node] = min(t, out.get(node, math.inf))
    return out


def _by_pair(timeline: Iterable[SuspicionRecord]) -> Dict[Tuple[int, int], List[SuspicionRecord]]:
    pairs: Dict[Tuple[int, int], List[SuspicionRecord]] = defaultdict(list)
    for r in sorted(timeline, key=lambda r: r.time):
        pairs[(r.observer, r.target)].append(r)
    return pairs


def _permanent_since(records: Sequence[SuspicionRecord]) -> Optional[float]:
    """Time of the first suspect record that is never revoked, if any."""
    if not records or records[-1].change != SUSPECT:
        return None
    return records[-1].time


def detection_stats(timeline: Iterable[SuspicionRecord], crashes: Iterable,
                    nodes: Iterable[int]) -> Tuple[Dict[int, DetectionStats], DetectionStats]:
    """Per-crash and overall detection delay over the correct observers.

    The delay for one observer is the time of its last, never revoked,
    suspicion of the crashed node minus the crash time.

    Raises
    ------
    CompletenessViolation
        If a correct observer does not end the run suspecting a crashed node.
    """
    crashed = _crash_times(crashes)
    correct = [n for n in sorted(nodes) if n not in crashed]
    pairs = _by_pair(timeline)
    per_crash: Dict[int, DetectionStats] = {}
    every: List[float] = []
    for target, t_crash in sorted(crashed.items()):
        delays = []
        for obs in correct:
            since = _permanent_since(pairs.get((obs, target), ()))
            if since is None:
                raise CompletenessViolation(obs, target)
            delays.append(since - t_crash)
        if delays:
            per_crash[target] = DetectionStats.of(delays)
            every.extend(delays)
    overall = DetectionStats.of(every) if every else DetectionStats(math.nan, math.nan, math.nan, 0)
    return per_crash, overall


def false_suspicion_steps(timeline: Iterable[SuspicionRecord], crashes: Iterable = (),
                          target: Optional[int] = None) -> List[Tuple[float, int]]:
    """Exact step function ``[(time, count), ...]`` of false suspicions.

    A suspicion is false while its target has not crashed; suspicions held by
    crashed observers stop counting at the observer's crash. ``target``
    restricts the count to suspicions of a single node.
    """
    crashed = _crash_times(crashes)
    deltas: Dict[float, int] = defaultdict(int)
    for (obs, tgt), recs in _by_pair(timeline).items():
        if target is not None and tgt != target:
            continue
        end = min(crashed.get(obs, math.inf), crashed.get(tgt, math.inf))
        open_at = None
        for r in recs:
            if r.change == SUSPECT and open_at is None:
                open_at = r.time
            elif r.change == UNSUSPECT and open_at is not None:
                _interval(deltas, open_at, r.time, end)
                open_at = None
        if open_at is not None:
            _interval(deltas, open_at, math.inf, end)
    steps = []
    count = 0
    for t in sorted(deltas):
        if deltas[t] == 0 or math.isinf(t):
            continue
        count += deltas[t]
        steps.append((t, count))
    return steps


def _interval(deltas, start, stop, end) -> None:
    stop = min(stop, end)
    if stop > start:
        deltas[start] += 1
        deltas[stop] -= 1


def false_suspicion_series(timeline: Iterable[SuspicionRecord], crashes: Iterable,
                           sample_step: float, duration: float,
                           target: Optional[int] = None) -> List[Tuple[float, int]]:
    """False-suspicion count sampled every ``sample_step`` seconds over ``[0, duration]``."""
    steps = false_suspicion_steps(timeline, crashes, target)
    series = []
    i, count = 0, 0
    n_samples = int(math.floor(duration / sample_step + 1e-9)) + 1
    for k in range(n_samples):
        t = round(k * sample_step, 9)
        while i < len(steps) and steps[i][0] <= t:
            count = steps[i][1]
            i += 1
        series.append((t, count))
    return series


def peak_false_suspicions(steps: Sequence[Tuple[float, int]], start: float = -math.inf,
                          stop: float = math.inf) -> int:
    level = 0
    peak = 0
    for t, c in steps:
        if t <= start:
            level = c
            continue
        if t > stop:
            break
        peak = max(peak, c)
    return max(peak, level)


def clearance_time(steps: Sequence[Tuple[float, int]]) -> Optional[float]:
    """Time from which the false-suspicion count stays at zero (None if it never does)."""
    if not steps:
        return 0.0
    if steps[-1][1] != 0:
        return None
    return steps[-1][0]


def check_strong_completeness(timeline: Iterable[SuspicionRecord], crashes: Iterable,
                              nodes: Iterable[int], horizon: float,
                              quiet: float) -> Dict[Tuple[int, int], bool]:
    """Verdict per ``(observer, crashed)`` pair.

    A pair passes when the observer's last record about the crashed node is a
    suspicion made no later than ``horizon - quiet``.
    """
    crashed = _crash_times(crashes)
    pairs = _by_pair(timeline)
    verdict = {}
    for target in sorted(crashed):
        for obs in sorted(nodes):
            if obs in crashed:
                continue
            since = _permanent_since(pairs.get((obs, target), ()))
            verdict[(obs, target)] = since is not None and since <= horizon - quiet
    return verdict


def check_eventual_weak_accuracy(timeline: Iterable[SuspicionRecord], rp_node: int,
                                 stabilization: float, crashes: Iterable = ()) -> bool:
    """True iff no correct observer suspects ``rp_node`` at any instant after ``stabilization``."""
    crashed = _crash_times(crashes)
    if rp_node in crashed:
        return False
    for (obs, tgt), recs in _by_pair(timeline).items():
        if tgt != rp_node or obs in crashed:
            continue
        held = False
        for r in recs:
            if r.time > stabilization:
                if r.change == SUSPECT:
                    return False
            else:
                held = r.change == SUSPECT
        if held:
            return False
    return True


def round_completion_time(witness: Witness, node: int, nth: int) -> Optional[float]:
    """Finish time of ``node``'s ``nth`` completed round (1-based)."""
    seen = 0
    for r in witness.rounds:
        if r.node == node:
            seen += 1
            if seen == nth:
                return r.time
    return None


def validate_behavioral(witness: Witness, f: Optional[int] = None,
                        stabilization: float = 0.0) -> Dict[str, Dict[int, bool]]:
    """Evaluate MP, RP, MobiP and MobiRP on a run's witness.

    Set sizes count the node itself, which hears its own query: "more than
    f + 1" therefore means at least one correct process besides the node.

    * MP(i): at some time more than f+1 processes hold i in ``known``.
    * RP(i): after the last neighbour round that missed i, every neighbour
      finished at least one more round, each including i.
    * MobiP(m): after each reconnect, m heard queries from more than f+1
      processes.
    * MobiRP(i): RP(i) and no neighbour left i's range after ``stabilization``.
    """
    f = witness.f if f is None else f
    nodes = witness.nodes

    holders: Dict[int, Set[int]] = {n: {n} for n in nodes}
    for _, holder, member in witness.known_adds:
        holders[member].add(holder)
    mp = {n: len(holders[n]) > f + 1 for n in nodes}

    last_miss: Dict[int, float] = {}
    for r in witness.rounds:
        for i in r.neighbors:
            if i not in r.rec_from:
                last_miss[i] = max(last_miss.get(i, -math.inf), r.time)
    rounds_after: Dict[int, Set[int]] = defaultdict(set)
    neighbors_seen: Dict[int, Set[int]] = defaultdict(set)
    for r in witness.rounds:
        for i in r.neighbors:
            neighbors_seen[i].add(r.node)
            if r.time > last_miss.get(i, -math.inf):
                rounds_after[i].add(r.node)
    final_nbrs = _final_neighbors(witness)
    rp = {}
    for n in nodes:
        expected = final_nbrs.get(n, neighbors_seen[n]) - set(witness.crashed)
        rp[n] = bool(expected) and expected <= rounds_after[n]

    mobip = {}
    reconnect_epochs = [(node, epoch) for _, node, epoch in witness.reconnects]
    for node, epoch in reconnect_epochs:
        senders = {s for _, rcv, s, ep in witness.query_receipts if rcv == node and ep == epoch}
        ok = len(senders | {node}) > f + 1
        mobip[node] = mobip.get(node, True) and ok

    departed_late: Set[int] = set()
    for t, n, _, joined in witness.range_changes:
        if not joined and t > stabilization:
            departed_late.add(n)
    mobirp = {n: rp[n] and n not in departed_late for n in nodes}
    return {"MP": mp, "RP": rp, "MobiP": mobip, "MobiRP": mobirp}


def _final_neighbors(witness: Witness) -> Dict[int, Set[int]]:
    """Neighbour set of each node as recorded in its most recent round."""
    latest: Dict[int, frozenset] = {}
    for r in witness.rounds:
        latest[r.node] = r.neighbors
    out: Dict[int, Set[int]] = defaultdict(set)
    for j, nbrs in latest.items():
        for i in nbrs:
            out[i].add(j)
    return out


# -- tables ----------------------------------------------------------------------

def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    if isinstance(v, bool):
        return "true" if v else "false"
    return v
