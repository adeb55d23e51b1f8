"""Scenario builders and multi-run drivers shared by the CLI and the tests."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import scipy.stats

from . import metrics
from .simnet import ASYNC, HEARTBEAT, Crash, Move, RunResult, SimConfig, run
from .topology import GenerationError, Point, Topology, find_mover, generate_topology, in_range

log = logging.getLogger(__name__)

REGION = 700.0
RADIUS = 100.0


def derive_seed(*parts) -> int:
    """Stable integer seed for a (seed, bin, ...) tuple."""
    return random.Random(":".join(str(p) for p in parts)).getrandbits(32)


def crash_schedule(rng: random.Random, candidates: Sequence[int], count: int,
                   start: float, stop: float) -> List[Crash]:
    victims = rng.sample(sorted(candidates), count)
    return sorted((Crash(v, rng.uniform(start, stop)) for v in victims), key=lambda c: c.time)


# -- density sweep -------------------------------------------------------------------

@dataclass
class SweepRow:
    protocol: str
    density: int
    mean: float
    max: float
    min: float
    runs: int
    measured_density: float
    false_suspicions: int

    HEADER = ("protocol", "density", "mean", "max", "min", "runs", "measured_density",
              "false_suspicions")

    def as_tuple(self):
        return (self.protocol, self.density, self.mean, self.max, self.min, self.runs,
                self.measured_density, self.false_suspicions)


def sweep_run(density: int, seed: int, protocol: str, n: int = 100, f: int = 5,
              crashes: int = 5, duration: float = 60.0, delta_mean: float = 0.001,
              round_delta: float = 1.0, theta: float = 2.0, warmup: float = 5.0,
              tail: float = 15.0) -> Tuple[Topology, List[Crash], RunResult]:
    """One sweep cell: a topology targeting ``density`` and uniformly timed crashes.

    The topology and crash schedule depend only on ``(seed, density, n, f)``,
    so both protocols of one cell see the same network and the same faults.
    """
    rng = random.Random(derive_seed(seed, density, n, f))
    top = generate_topology(REGION, RADIUS, n, f, rng, min_degree=density - 1)
    schedule = crash_schedule(rng, top.nodes, crashes, warmup, duration - tail)
    cfg = SimConfig(protocol=protocol, delta_mean=delta_mean, round_delta=round_delta,
                    theta=theta, duration=duration, seed=rng.getrandbits(32), f=f,
                    d=top.density())
    return top, schedule, run(cfg, top, schedule, record_witness=False)


def density_sweep(densities: Sequence[int], seeds: Sequence[int],
                  protocols: Sequence[str] = (ASYNC, HEARTBEAT), **kw) -> List[SweepRow]:
    """Detection time per (protocol, density bin).

    ``mean`` averages the per-crash mean delay over every crash in the bin;
    ``max``/``min`` are extremes over all (crash, observer) pairs. Bins are
    labelled by targeted density; each generated topology measures at least
    that density and the bin's average measured value is reported. A bin
    whose topologies cannot be generated is left out.
    """
    rows = []
    for protocol in protocols:
        for d in densities:
            crash_stats: List[metrics.DetectionStats] = []
            measured: List[int] = []
            false_peak = 0
            for s in seeds:
                try:
                    top, schedule, res = sweep_run(d, s, protocol, **kw)
                except GenerationError as exc:
                    log.warning("density %d seed %s: %s", d, s, exc)
                    continue
                per_crash, _ = metrics.detection_stats(res.timeline, schedule, res.nodes)
                crash_stats.extend(per_crash.values())
                measured.append(top.density())
                steps = metrics.false_suspicion_steps(res.timeline, schedule)
                false_peak = max(false_peak, metrics.peak_false_suspicions(steps))
            if not crash_stats:
                continue
            rows.append(SweepRow(
                protocol, d,
                mean=sum(st.mean for st in crash_stats) / len(crash_stats),
                max=max(st.max for st in crash_stats),
                min=min(st.min for st in crash_stats),
                runs=len(measured),
                measured_density=sum(measured) / len(measured),
                false_suspicions=false_peak,
            ))
    return rows


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(scipy.stats.spearmanr(xs, ys)[0])


# -- mobility scenario ---------------------------------------------------------------

@dataclass
class MobilityScenario:
    top: Topology
    mover: int
    move: Move
    old_neighbors: List[int]
    new_neighbors: List[int]
    f: int
    d: int


def pick_destination(top: Topology, mover: int, d: int, f: int, rng: random.Random,
                     max_distance: float, draws: int = 4000) -> Optional[Point]:
    """Farthest reattachment point (within ``max_distance``) that keeps the network valid.

    A candidate must see at least ``d - 1`` nodes, none of them an old
    neighbour of the mover, and leave the moved graph f-covering with range
    density ``d``.
    """
    old = top.adjacency[mover] | {mover}
    origin = top.sites[mover]
    others = {k: p for k, p in top.sites.items() if k != mover}
    scored = []
    for _ in range(draws):
        cand = Point(rng.uniform(0.0, top.region), rng.uniform(0.0, top.region))
        dist = math.hypot(cand.x - origin.x, cand.y - origin.y)
        if dist > max_distance:
            continue
        seen = [k for k, p in others.items() if in_range(cand, p, top.radius)]
        if len(seen) < d - 1 or old.intersection(seen):
            continue
        scored.append((dist, cand))
    for _, cand in sorted(scored, reverse=True):
        moved = top.moved(mover, cand)
        if moved.density() == d and moved.is_f_covering(f):
            return cand
    return None


def build_mobility_scenario(seed: int, n: int = 100, f: int = 1, density: int = 7,
                            mover_degree: int = 7, path_length: float = 500.0,
                            speed: float = 2.0, start: float = 100.0,
                            attempts: int = 200) -> MobilityScenario:
    """Network of range density ``density`` with a boundary node that relocates.

    The mover has exactly ``mover_degree`` neighbours, each with at least
    ``density - f + 1`` neighbours so they still gather ``d - f`` responses
    once it leaves. ``path_length`` is the distance travelled: it fixes the
    time spent detached, while the destination is the farthest valid point.
    """
    rng = random.Random(derive_seed("mobility", seed, n, f, density))
    need = density - f + 1
    for _ in range(attempts):
        try:
            top = generate_topology(REGION, RADIUS, n, f, rng, min_degree=density - 1)
        except GenerationError:
            continue
        if top.density() != density:
            continue
        mover = find_mover(top, mover_degree, need)
        if mover is None:
            continue
        rest = top.without([mover])
        if not rest.is_f_covering(f - 1 if f > 0 else 0) or rest.density() < density:
            continue
        dest = pick_destination(top, mover, density, f, rng, path_length)
        if dest is None:
            continue
        end = start + path_length / speed
        moved = top.moved(mover, dest)
        return MobilityScenario(
            top=top, mover=mover, move=Move(mover, start, end, dest),
            old_neighbors=sorted(top.adjacency[mover]),
            new_neighbors=sorted(moved.adjacency[mover]), f=f, d=density)
    raise GenerationError(f"no mobility topology satisfying the constraints in {attempts} attempts")


@dataclass
class MobilityOutcome:
    protocol: str
    seed: int
    reattach: float
    mover_peak: int
    clear_after: Optional[float]
    old_neighbor_peak: int
    mover_suspected_old: List[int]
    steps: List[Tuple[float, int]]
    result: RunResult = field(repr=False)


def mobility_run(scn: MobilityScenario, protocol: str, seed: int, tail: float = 30.0,
                 delta_mean: float = 0.001, round_delta: float = 1.0,
                 theta: float = 2.0) -> MobilityOutcome:
    mv = scn.move
    cfg = SimConfig(protocol=protocol, delta_mean=delta_mean, round_delta=round_delta,
                    theta=theta, duration=mv.end + tail, seed=derive_seed("run", seed, protocol),
                    f=scn.f, d=scn.d, mobility=protocol == ASYNC)
    res = run(cfg, scn.top, [mv])
    steps = metrics.false_suspicion_steps(res.timeline)
    mover_steps = metrics.false_suspicion_steps(res.timeline, target=scn.mover)
    peak = metrics.peak_false_suspicions(mover_steps, mv.start, mv.end)
    clear = metrics.clearance_time(steps)
    old = set(scn.old_neighbors)
    old_records = [r for r in res.timeline if r.target in old and r.time >= mv.end]
    old_steps = metrics.false_suspicion_steps(old_records)
    by_mover = sorted({r.target for r in res.timeline
                       if r.observer == scn.mover and r.time >= mv.end and r.change == "suspect"})
    return MobilityOutcome(
        protocol=protocol, seed=seed, reattach=mv.end, mover_peak=peak,
        clear_after=None if clear is None else max(0.0, clear - mv.end),
        old_neighbor_peak=metrics.peak_false_suspicions(old_steps),
        mover_suspected_old=by_mover, steps=steps, result=res)


# -- property suites -----------------------------------------------------------------

@dataclass
class PropertyOutcome:
    seed: int
    n: int
    f: int
    crashes: List[Crash]
    rp_node: int
    completeness: Dict[Tuple[int, int], bool]
    accuracy: bool
    stabilization: Optional[float]
    result: RunResult = field(repr=False)

    @property
    def completeness_ok(self) -> bool:
        return all(self.completeness.values())


def property_run(seed: int, n: int, f: int, duration: float = 40.0,
                 round_delta: float = 1.0, delta_mean: float = 0.001,
                 crash_window: Tuple[float, float] = (3.0, 20.0)) -> PropertyOutcome:
    """Static run with ``f`` crashes and a responsive node favoured by the delay model."""
    rng = random.Random(derive_seed("property", seed, n, f))
    top = generate_topology(REGION, RADIUS, n, f, rng)
    rp_node = rng.choice(top.nodes)
    schedule = crash_schedule(rng, [k for k in top.nodes if k != rp_node], f, *crash_window)
    cfg = SimConfig(protocol=ASYNC, delta_mean=delta_mean, round_delta=round_delta,
                    duration=duration, seed=rng.getrandbits(32), f=f, d=top.density(),
                    rp_node=rp_node)
    res = run(cfg, top, schedule)
    return _judge(seed, n, f, schedule, rp_node, res, round_delta)


def _judge(seed, n, f, schedule, rp_node, res: RunResult, round_delta: float) -> PropertyOutcome:
    horizon = res.config.duration
    verdict = metrics.check_strong_completeness(res.timeline, schedule, res.nodes, horizon,
                                                10 * round_delta)
    stab = metrics.round_completion_time(res.witness, rp_node, 2)
    acc = stab is not None and metrics.check_eventual_weak_accuracy(
        res.timeline, rp_node, stab, schedule)
    return PropertyOutcome(seed, n, f, schedule, rp_node, verdict, acc, stab, res)


MOBILITY_CASES = ("crash_before_move", "crash_during_move", "crash_after_reattach",
                  "mover_crashes")


@dataclass
class MobileFaultOutcome(PropertyOutcome):
    case: str = ""
    mover: int = -1
    state_preserved: bool = False
    final_false: int = 0


def mobile_fault_run(seed: int, case: str, n: int = 20, f: int = 2, density: int = 6,
                     speed: float = 10.0, path_length: float = 100.0, start: float = 10.0,
                     tail: float = 25.0, round_delta: float = 1.0) -> MobileFaultOutcome:
    """One mover plus one crash, with the crash placed according to ``case``."""
    if case not in MOBILITY_CASES:
        raise ValueError(f"unknown case {case!r}")
    rng = random.Random(derive_seed("mobile-fault", seed, case, n, f))
    for _ in range(200):
        try:
            top = generate_topology(REGION, RADIUS, n, f, rng, min_degree=density - 1)
        except GenerationError:
            continue
        d = top.density()
        movers = [k for k in top.nodes
                  if all(len(top.adjacency[j]) >= d - f + 1 for j in top.adjacency[k])]
        if not movers:
            continue
        mover = rng.choice(movers)
        if not top.without([mover]).is_f_covering(f - 1):
            continue
        dest = pick_destination(top, mover, d, f, rng, path_length * 4)
        if dest is None:
            continue
        moved = top.moved(mover, dest)
        busy = top.adjacency[mover] | moved.adjacency[mover] | {mover}
        calm = [k for k in top.nodes if k not in busy]
        if not calm:
            continue
        rp_node = rng.choice(calm)
        break
    else:
        raise GenerationError("no topology for the mobile fault suite")

    end = start + path_length / speed
    move = Move(mover, start, end, dest)
    if case == "mover_crashes":
        victim, when = mover, rng.uniform(start + 0.5, end - 0.5)
    else:
        pool = [k for k in top.nodes if k not in (mover, rp_node) and k not in top.adjacency[rp_node]]
        victim = rng.choice(pool)
        when = {
            "crash_before_move": rng.uniform(start - 6.0, start - 2.0),
            "crash_during_move": rng.uniform(start + 0.5, end - 0.5),
            "crash_after_reattach": rng.uniform(end + 0.5, end + 3.0),
        }[case]
    crashes = [Crash(victim, when)]
    duration = max(end, when) + tail
    cfg = SimConfig(protocol=ASYNC, round_delta=round_delta, duration=duration,
                    seed=rng.getrandbits(32), f=f, d=d, mobility=True, rp_node=rp_node)
    res = run(cfg, top, [move, *crashes])
    base = _judge(seed, n, f, crashes, rp_node, res, round_delta)
    preserved = all(a == b for a, b in zip(res.detach_states.get(mover, []),
                                           res.reattach_states.get(mover, [])))
    steps = metrics.false_suspicion_steps(res.timeline, crashes)
    return MobileFaultOutcome(
        **{k: getattr(base, k) for k in ("seed", "n", "f", "crashes", "rp_node", "completeness",
                                         "accuracy", "stabilization", "result")},
        case=case, mover=mover, state_preserved=preserved,
        final_false=steps[-1][1] if steps else 0)
