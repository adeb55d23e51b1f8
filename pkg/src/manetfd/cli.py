"""Command-line front end.

Subcommands write every result to files under an output directory, so a
rerun with the same seeds overwrites them with identical bytes.

Scenario files are flat ``key = value`` text; ``#`` starts a comment and
unknown keys are rejected. ``crash`` and ``move`` may repeat::

    # topology: a file written by `generate`, or generation parameters
    topology = net.txt          # relative to the scenario file
    n = 100
    f = 5
    radius = 100
    region = 700
    topology_seed = 0
    min_degree = 6
    # detector and network
    protocol = async            # or heartbeat
    delay_mean = 0.001          # mean one-hop delay (s)
    period = 1.0                # round / gossip period (s)
    theta = 2.0                 # heartbeat timeout (s)
    duration = 60
    seed = 0
    mobility = false
    rp_node = 3
    sample_step = 1.0           # false-suspicion series resolution (s)
    crash = 17 12.5             # node time
    move = 4 100 2 650 300      # node start speed dest_x dest_y [path_length]
"""
from __future__ import annotations

import argparse
import logging
import math
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from . import experiments, metrics
from .fdcore import ConfigurationError
from .simnet import ASYNC, HEARTBEAT, Crash, Move, RunResult, SimConfig, run
from .topology import GenerationError, Point, Topology, generate_topology

log = logging.getLogger("manetfd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_ASSUMPTION = 4
EXIT_PROPERTY = 5


# -- scenario files ------------------------------------------------------------------

@dataclass
class MoveSpec:
    node: int
    start: float
    speed: float
    destination: Point
    path_length: Optional[float] = None

    def resolve(self, top: Topology) -> Move:
        if self.speed <= 0:
            raise ConfigurationError(f"move of node {self.node}: speed must be positive")
        if self.path_length is None:
            return Move.at_speed(top, self.node, self.start, self.speed, self.destination)
        return Move(self.node, self.start, self.start + self.path_length / self.speed,
                    self.destination)


@dataclass
class Scenario:
    topology: Optional[Path] = None
    n: int = 100
    f: int = 5
    radius: float = experiments.RADIUS
    region: float = experiments.REGION
    topology_seed: int = 0
    min_degree: Optional[int] = None
    protocol: str = ASYNC
    delay_mean: float = 0.001
    period: float = 1.0
    theta: float = 2.0
    duration: float = 60.0
    seed: int = 0
    mobility: bool = False
    rp_node: Optional[int] = None
    sample_step: float = 1.0
    crashes: List[Crash] = field(default_factory=list)
    moves: List[MoveSpec] = field(default_factory=list)


_SCALARS = {
    "n": int, "f": int, "radius": float, "region": float, "topology_seed": int,
    "min_degree": int, "protocol": str, "delay_mean": float, "period": float,
    "theta": float, "duration": float, "seed": int, "rp_node": int, "sample_step": float,
}


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_scenario(text: str, base: Optional[Path] = None) -> Scenario:
    """Parse scenario text; raises :class:`ConfigurationError` with the line number."""
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not value:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        try:
            if key in _SCALARS:
                setattr(sc, key, _SCALARS[key](value))
            elif key == "mobility":
                sc.mobility = _bool(value)
            elif key == "topology":
                path = Path(value)
                sc.topology = path if base is None or path.is_absolute() else base / path
            elif key == "crash":
                node, t = value.split()
                sc.crashes.append(Crash(int(node), float(t)))
            elif key == "move":
                parts = value.split()
                if len(parts) not in (5, 6):
                    raise ValueError("move needs: node start speed dest_x dest_y [path_length]")
                sc.moves.append(MoveSpec(
                    int(parts[0]), float(parts[1]), float(parts[2]),
                    Point(float(parts[3]), float(parts[4])),
                    float(parts[5]) if len(parts) == 6 else None))
            else:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        except ConfigurationError:
            raise
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    if sc.protocol not in (ASYNC, HEARTBEAT):
        raise ConfigurationError(f"unknown protocol {sc.protocol!r}")
    return sc


def load_scenario(path: Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from None
    return parse_scenario(text, Path(path).parent)


def scenario_topology(sc: Scenario) -> Topology:
    if sc.topology is not None:
        try:
            return Topology.load(sc.topology)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot load topology {sc.topology}: {exc}") from None
    return generate_topology(sc.region, sc.radius, sc.n, sc.f,
                             random.Random(sc.topology_seed), min_degree=sc.min_degree)


# -- single runs ---------------------------------------------------------------------

def verdict_rows(sc: Scenario, res: RunResult, moves: Sequence[Move]):
    """``(property, subject, holds)`` rows and whether assumptions / properties held.

    Behavioural assumptions are checked where the detector relies on them:
    MP for every crashed node, MobiP for every mover, RP and MobiRP for the
    responsive node. They are only meaningful for the query/response detector.
    """
    rows = []
    assumptions_ok = True
    properties_ok = True
    crashed = sorted({c.node for c in res.crashes})
    stab = None
    if sc.rp_node is not None and sc.protocol == ASYNC:
        stab = metrics.round_completion_time(res.witness, sc.rp_node, 2)
    if sc.protocol == ASYNC:
        beh = metrics.validate_behavioral(res.witness, stabilization=stab or 0.0)
        checks = [("MP", n) for n in crashed]
        checks += [("MobiP", m.node) for m in moves if m.node not in crashed]
        if sc.rp_node is not None:
            checks += [("RP", sc.rp_node)]
            if moves:
                checks += [("MobiRP", sc.rp_node)]
        for prop, node in checks:
            ok = beh[prop].get(node, False)
            rows.append((prop, node, ok))
            assumptions_ok &= ok

    comp = metrics.check_strong_completeness(res.timeline, res.crashes, res.nodes,
                                             sc.duration, 10 * sc.period)
    for target in crashed:
        ok = all(v for (_, t), v in comp.items() if t == target)
        rows.append(("strong_completeness", target, ok))
        properties_ok &= ok
    if sc.rp_node is not None and sc.protocol == ASYNC:
        ok = stab is not None and metrics.check_eventual_weak_accuracy(
            res.timeline, sc.rp_node, stab, res.crashes)
        rows.append(("eventual_weak_accuracy", sc.rp_node, ok))
        properties_ok &= ok
    return rows, assumptions_ok, properties_ok


def detection_rows(res: RunResult):
    rows = []
    crashed = {c.node for c in res.crashes}
    for c in sorted(res.crashes, key=lambda c: (c.time, c.node)):
        observers = [n for n in res.nodes if n not in crashed or n == c.node]
        try:
            per, _ = metrics.detection_stats(res.timeline, [c], observers)
        except metrics.CompletenessViolation:
            rows.append((c.node, c.time, math.nan, math.nan, math.nan, 0))
            continue
        st = per.get(c.node)
        if st is None:
            rows.append((c.node, c.time, math.nan, math.nan, math.nan, 0))
        else:
            rows.append((c.node, c.time, st.mean, st.max, st.min, st.count))
    return rows


def write_run(out: Path, sc: Scenario, res: RunResult, moves: Sequence[Move]) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "timeline.log").write_text("".join(line + "\n" for line in res.log_lines()))
    (out / "detection.csv").write_text(metrics.to_csv(
        ("node", "crash_time", "mean", "max", "min", "observers"), detection_rows(res)))
    series = metrics.false_suspicion_series(res.timeline, res.crashes, sc.sample_step,
                                            sc.duration)
    (out / "false_suspicions.csv").write_text(metrics.to_csv(("time", "count"), series))
    rows, assumptions_ok, properties_ok = verdict_rows(sc, res, moves)
    (out / "verdicts.csv").write_text(metrics.to_csv(("property", "node", "holds"), rows))
    if not assumptions_ok:
        return EXIT_ASSUMPTION
    if not properties_ok:
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    for key in ("n", "f", "delay_mean", "period", "theta", "duration", "protocol"):
        v = getattr(args, key)
        if v is not None:
            setattr(sc, key, v)
    if sc.protocol not in (ASYNC, HEARTBEAT):
        raise ConfigurationError(f"unknown protocol {sc.protocol!r}")
    seeds = args.seeds if args.seeds else [sc.seed]
    top = scenario_topology(sc)
    moves = [m.resolve(top) for m in sc.moves]
    worst = EXIT_OK
    for seed in seeds:
        cfg = SimConfig(protocol=sc.protocol, delta_mean=sc.delay_mean, round_delta=sc.period,
                        theta=sc.theta, duration=sc.duration, seed=seed, f=sc.f,
                        mobility=sc.mobility, rp_node=sc.rp_node)
        res = run(cfg, top, [*sc.crashes, *moves])
        out = Path(args.out) / f"seed-{seed}"
        code = write_run(out, sc, res, moves)
        print(f"seed {seed}: {len(res.timeline)} suspicion changes -> {out}")
        if code != EXIT_OK and (worst == EXIT_OK or code == EXIT_ASSUMPTION):
            worst = code
    return worst


# -- other subcommands ---------------------------------------------------------------

def cmd_generate(args) -> int:
    top = generate_topology(args.region, args.radius, args.n, args.f,
                            random.Random(args.seed), min_degree=args.min_degree)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    top.save(args.out)
    print(f"nodes: {len(top)}")
    print(f"density: {top.density()}")
    print(f"f-covering: {'true' if top.is_f_covering(args.f) else 'false'}")
    return EXIT_OK


def cmd_sweep_density(args) -> int:
    rows = experiments.density_sweep(
        args.densities, args.seeds, args.protocols, n=args.n, f=args.f, crashes=args.crashes,
        duration=args.duration, delta_mean=args.delay_mean, round_delta=args.period,
        theta=args.theta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(metrics.to_csv(
        experiments.SweepRow.HEADER, (r.as_tuple() for r in rows)))
    for r in rows:
        print(f"{r.protocol:9s} d={r.density:3d} mean={r.mean:.4f} max={r.max:.4f} "
              f"min={r.min:.4f} runs={r.runs}")
    missing = [(p, d) for p in args.protocols for d in args.densities
               if not any(r.protocol == p and r.density == d for r in rows)]
    for p, d in missing:
        print(f"{p:9s} d={d:3d} absent (no topology generated)")
    asyn = [r for r in rows if r.protocol == ASYNC]
    if len(asyn) > 1:
        print(f"async spearman: {experiments.spearman([r.density for r in asyn], [r.mean for r in asyn]):.4f}")
    return EXIT_OK


def cmd_mobility(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for seed in args.seeds:
        scn = experiments.build_mobility_scenario(seed, n=args.n, path_length=args.path_length,
                                                  speed=args.speed)
        scn.top.save(out / f"topology-seed{seed}.txt")
        for protocol in args.protocols:
            o = experiments.mobility_run(scn, protocol, seed)
            res = o.result
            series = metrics.false_suspicion_series(res.timeline, [], args.sample_step,
                                                    res.config.duration)
            stem = f"{protocol}-seed{seed}"
            (out / f"series-{stem}.csv").write_text(metrics.to_csv(("time", "count"), series))
            (out / f"timeline-{stem}.log").write_text(
                "".join(line + "\n" for line in res.log_lines()))
            clear = math.nan if o.clear_after is None else o.clear_after
            summary.append((protocol, seed, scn.mover, o.reattach, o.mover_peak, clear,
                            o.old_neighbor_peak, len(o.mover_suspected_old)))
            print(f"{protocol:9s} seed {seed}: mover peak {o.mover_peak}, "
                  f"cleared {clear:.3f}s after reattach")
    (out / "summary.csv").write_text(metrics.to_csv(
        ("protocol", "seed", "mover", "reattach", "mover_peak", "clear_after",
         "old_neighbor_peak", "old_suspected_by_mover"), summary))
    return EXIT_OK


def cmd_validate(args) -> int:
    rows = []
    failed = 0
    if args.suite in ("static", "all"):
        for n in args.sizes:
            for f in args.faults:
                for seed in args.seeds:
                    o = experiments.property_run(seed, n, f)
                    rows.append(("static", seed, n, f, "", o.completeness_ok, o.accuracy, True))
                    failed += not (o.completeness_ok and o.accuracy)
    if args.suite in ("mobile", "all"):
        for case in experiments.MOBILITY_CASES:
            for seed in args.seeds:
                o = experiments.mobile_fault_run(seed, case)
                ok = o.completeness_ok and o.accuracy and o.state_preserved
                rows.append(("mobile", seed, o.n, o.f, case, o.completeness_ok, o.accuracy,
                             o.state_preserved))
                failed += not ok
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "validation.csv").write_text(metrics.to_csv(
        ("suite", "seed", "n", "f", "case", "completeness", "accuracy", "state_preserved"),
        rows))
    print(f"{len(rows) - failed}/{len(rows)} runs passed")
    return EXIT_PROPERTY if failed else EXIT_OK


# -- argument parsing ----------------------------------------------------------------

def _ints(text: str) -> List[int]:
    """``"0-9"`` or ``"1,4,7"`` (ranges inclusive) -> list of ints."""
    out: List[int] = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        if sep and lo:
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _protocols(text: str) -> List[str]:
    out = text.split(",")
    for p in out:
        if p not in (ASYNC, HEARTBEAT):
            raise argparse.ArgumentTypeError(f"unknown protocol {p!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="manetfd", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate an f-covering unit-disk topology")
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--f", type=int, default=5)
    g.add_argument("--radius", type=float, default=experiments.RADIUS)
    g.add_argument("--region", type=float, default=experiments.REGION)
    g.add_argument("--min-degree", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="simulate a scenario file")
    r.add_argument("scenario", type=Path)
    r.add_argument("-o", "--out", required=True)
    r.add_argument("--seeds", type=_ints, default=None)
    r.add_argument("--n", type=int)
    r.add_argument("--f", type=int)
    r.add_argument("--delay-mean", dest="delay_mean", type=float)
    r.add_argument("--period", type=float)
    r.add_argument("--theta", type=float)
    r.add_argument("--duration", type=float)
    r.add_argument("--protocol", choices=(ASYNC, HEARTBEAT))
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-density", help="detection time against range density")
    s.add_argument("-o", "--out", required=True)
    s.add_argument("--densities", type=_ints, default=[7, 10, 14, 18, 22, 30, 40, 50])
    s.add_argument("--seeds", type=_ints, default=list(range(10)))
    s.add_argument("--protocols", type=_protocols, default=[ASYNC, HEARTBEAT])
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--f", type=int, default=5)
    s.add_argument("--crashes", type=int, default=5)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--delay-mean", dest="delay_mean", type=float, default=0.001)
    s.add_argument("--period", type=float, default=1.0)
    s.add_argument("--theta", type=float, default=2.0)
    s.set_defaults(func=cmd_sweep_density)

    m = sub.add_parser("mobility", help="one boundary node relocates in a density-7 network")
    m.add_argument("-o", "--out", required=True)
    m.add_argument("--seeds", type=_ints, default=[0])
    m.add_argument("--protocols", type=_protocols, default=[ASYNC, HEARTBEAT])
    m.add_argument("--n", type=int, default=100)
    m.add_argument("--path-length", dest="path_length", type=float, default=500.0)
    m.add_argument("--speed", type=float, default=2.0)
    m.add_argument("--sample-step", dest="sample_step", type=float, default=0.5)
    m.set_defaults(func=cmd_mobility)

    v = sub.add_parser("validate", help="completeness and accuracy property suites")
    v.add_argument("-o", "--out", required=True)
    v.add_argument("--suite", choices=("static", "mobile", "all"), default="all")
    v.add_argument("--seeds", type=_ints, default=list(range(5)))
    v.add_argument("--sizes", type=_ints, default=[8, 20])
    v.add_argument("--faults", type=_ints, default=[1, 2])
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
