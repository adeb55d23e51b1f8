import subprocess
import sys
from pathlib import Path

import pytest

from manetfd import cli
from manetfd.fdcore import ConfigurationError
from manetfd.simnet import Crash
from manetfd.topology import Point, Topology


def files(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def net(tmp_path):
    assert cli.main(["generate", "-o", str(tmp_path / "net.txt"), "--n", "20", "--f", "2",
                     "--seed", "4"]) == 0
    return tmp_path / "net.txt"


def scenario(tmp_path, body):
    path = tmp_path / "sc.txt"
    path.write_text("topology = net.txt\nf = 2\n" + body)
    return path


def test_parse_scenario_keys():
    sc = cli.parse_scenario("""
        # comment
        n = 40
        protocol = heartbeat   # trailing comment
        mobility = yes
        rp_node = 3
        crash = 4 12.5
        crash = 5 13
        move = 7 100 2 650 300
        move = 8 10 5 1 2 50
    """)
    assert sc.n == 40 and sc.protocol == "heartbeat" and sc.mobility and sc.rp_node == 3
    assert sc.crashes == [Crash(4, 12.5), Crash(5, 13.0)]
    assert sc.moves[0].destination == Point(650, 300) and sc.moves[0].path_length is None
    assert sc.moves[1].path_length == 50


@pytest.mark.parametrize("text", [
    "colour = red", "n = many", "crash = 1", "move = 1 2 3", "protocol = gossip",
    "mobility = perhaps", "justtext",
])
def test_parse_scenario_rejects(text):
    with pytest.raises(ConfigurationError):
        cli.parse_scenario(text)


def test_generate_defaults(tmp_path, capsys):
    out = tmp_path / "t.txt"
    assert cli.main(["generate", "-o", str(out)]) == cli.EXIT_OK
    assert "f-covering: true" in capsys.readouterr().out
    top = Topology.load(out)
    assert len(top) == 100 and top.is_f_covering(5)


def test_generate_seed_clique(tmp_path, capsys):
    out = tmp_path / "t.txt"
    assert cli.main(["generate", "-o", str(out), "--n", "7", "--f", "5"]) == 0
    assert Topology.load(out).density() == 7


def test_generate_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    cli.main(["generate", "-o", str(a), "--n", "30", "--f", "2", "--seed", "8"])
    cli.main(["generate", "-o", str(b), "--n", "30", "--f", "2", "--seed", "8"])
    assert a.read_bytes() == b.read_bytes()


def test_generate_failure_exit_code(tmp_path):
    code = cli.main(["generate", "-o", str(tmp_path / "t.txt"), "--n", "10", "--f", "2",
                     "--region", "1e6"])
    assert code == cli.EXIT_GENERATION


def test_run_crash_only(tmp_path, net):
    sc = scenario(tmp_path, "duration = 30\ncrash = 3 8\ncrash = 9 10\nrp_node = 5\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == cli.EXIT_OK
    out = tmp_path / "out" / "seed-0"
    series = (out / "false_suspicions.csv").read_text().splitlines()
    assert series[0] == "time,count"
    assert all(line.endswith(",0") for line in series[1:])
    det = (out / "detection.csv").read_text().splitlines()
    assert len(det) == 3
    verdicts = (out / "verdicts.csv").read_text()
    assert "false" not in verdicts and "eventual_weak_accuracy,5,true" in verdicts


def test_run_heartbeat_band(tmp_path, net):
    sc = scenario(tmp_path, "duration = 30\nprotocol = heartbeat\ncrash = 3 8\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == 0
    row = (tmp_path / "out" / "seed-0" / "detection.csv").read_text().splitlines()[1]
    mean = float(row.split(",")[2])
    assert 1.0 <= mean <= 2.0


def test_run_zero_duration(tmp_path, net):
    sc = scenario(tmp_path, "duration = 0\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == 0
    out = tmp_path / "out" / "seed-0"
    assert (out / "timeline.log").read_text() == ""
    assert (out / "false_suspicions.csv").read_text() == "time,count\n0.000000,0\n"
    assert (out / "verdicts.csv").read_text() == "property,node,holds\n"


def test_run_zero_length_move(tmp_path, net):
    top = Topology.load(net)
    p = top.sites[6]
    sc = scenario(tmp_path, f"duration = 20\nmobility = true\nmove = 6 5 2 {p.x!r} {p.y!r}\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == 0
    log = (tmp_path / "out" / "seed-0" / "timeline.log").read_text()
    assert log == ""


def test_run_property_violation_exit(tmp_path, net):
    # the crash lands inside the quiet tail, so completeness cannot be witnessed
    sc = scenario(tmp_path, "duration = 15\ncrash = 3 12\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == cli.EXIT_PROPERTY
    assert "strong_completeness,3,false" in (tmp_path / "out/seed-0/verdicts.csv").read_text()


def test_run_assumption_violation_exit(tmp_path, net):
    # a node crashing at time zero never announced itself: nobody holds it in known
    sc = scenario(tmp_path, "duration = 20\ncrash = 3 0\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == cli.EXIT_ASSUMPTION
    assert "MP,3,false" in (tmp_path / "out/seed-0/verdicts.csv").read_text()


def test_run_mobirp_violation_exit(tmp_path, net):
    top = Topology.load(net)
    rp = 0
    nb = sorted(top.adjacency[rp])[0]
    far = max(top.sites.values(), key=lambda q: (q.x - top.sites[rp].x) ** 2
              + (q.y - top.sites[rp].y) ** 2)
    sc = scenario(tmp_path, f"duration = 25\nmobility = true\nrp_node = {rp}\n"
                            f"move = {nb} 6 50 {far.x!r} {far.y!r}\n")
    code = cli.main(["run", str(sc), "-o", str(tmp_path / "out")])
    verdicts = (tmp_path / "out/seed-0/verdicts.csv").read_text()
    assert f"MobiRP,{rp},false" in verdicts
    assert code == cli.EXIT_ASSUMPTION


def test_run_config_errors(tmp_path, net):
    assert cli.main(["run", str(tmp_path / "missing.txt"), "-o", str(tmp_path)]) == 2
    sc = scenario(tmp_path, "crash = 999 3\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == cli.EXIT_CONFIG
    sc = scenario(tmp_path, "f = 9\n")
    assert cli.main(["run", str(sc), "-o", str(tmp_path / "out")]) == cli.EXIT_CONFIG


def test_bad_protocol_flag_is_config_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["sweep-density", "-o", str(tmp_path), "--protocols", "gossip"])
    assert e.value.code == cli.EXIT_CONFIG


def test_run_reproducible_bytes(tmp_path, net):
    sc = scenario(tmp_path, "duration = 20\ncrash = 3 6\nrp_node = 5\n")
    cli.main(["run", str(sc), "-o", str(tmp_path / "a"), "--seeds", "0-1"])
    cli.main(["run", str(sc), "-o", str(tmp_path / "b"), "--seeds", "0-1"])
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and len(a) == 8


def test_sweep_single_bin(tmp_path):
    args = ["sweep-density", "-o", str(tmp_path), "--densities", "7", "--seeds", "0",
            "--n", "30", "--f", "2", "--crashes", "2", "--duration", "20"]
    assert cli.main(args) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("protocol,density,mean,max,min")
    assert len(lines) == 3


def test_validate_suite(tmp_path):
    assert cli.main(["validate", "-o", str(tmp_path), "--suite", "static", "--seeds", "0",
                     "--sizes", "8", "--faults", "1"]) == 0
    assert (tmp_path / "validation.csv").read_text().splitlines()[1] == \
        "static,0,8,1,,true,true,true"


def test_ints():
    assert cli._ints("0-3,7") == [0, 1, 2, 3, 7]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "manetfd", "generate", "-o",
                           str(tmp_path / "t.txt"), "--n", "8", "--f", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "density:" in proc.stdout
