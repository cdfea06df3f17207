import csv
import json
import subprocess
import sys

import pytest

from bidesp import network as netmod
from bidesp.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture()
def net_path(tmp_path, tiny_net):
    p = tmp_path / "net.json"
    netmod.save(tiny_net, p)
    return p


def _instance(tiny_net):
    from bidesp.bench import make_instances
    return make_instances(tiny_net, 1, 3)[0]


def test_gen(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "--out", str(out), "--layers", "3", "--per-layer", "5",
                 "--seed", "4"]) == EXIT_OK
    net = netmod.load(out)
    assert len(net) == 15 and net.meta["seed"] == 4
    out2 = tmp_path / "g2.json"
    assert main(["gen", "--out", str(out2), "--layers", "3", "--per-layer", "5",
                 "--seed", "4"]) == EXIT_OK
    assert out.read_text() == out2.read_text()


def test_gen_with_config(tmp_path, root):
    out = tmp_path / "b.json"
    assert main(["gen", "--config", str(root / "configs" / "gen_bench.json"),
                 "--out", str(out)]) == EXIT_OK
    assert out.read_text() == (root / "fixtures" / "bench_network.json").read_text()


def test_extract(tmp_path, net_path):
    out = tmp_path / "pairs.csv"
    assert main(["extract", "--network", str(net_path), "--out", str(out), "--seed", "2",
                 "--negatives", "1"]) == EXIT_OK
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m", "p_star", "d"]
    assert any(r[2] == "inf" for r in rows[1:])
    meta = json.loads((tmp_path / "pairs.csv.meta.json").read_text())
    assert meta["seed"] == 2 and meta["records"] == len(rows) - 1


def test_plan(tmp_path, net_path, tiny_net):
    inst = _instance(tiny_net)
    out = tmp_path / "route.json"
    trace = tmp_path / "trace.tsv"
    assert main(["plan", "--network", str(net_path), "--target", inst.p_star, "--sm",
                 inst.r_star, "--algo", "desp-f2e", "--out", str(out), "--trace", str(trace),
                 "--seed", "1"]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["solved"] and data["valid"] and data["seed"] == 1
    assert data["route"]["target"] == inst.p_star and data["route"]["sm"] == inst.r_star
    assert "config" in data
    assert len(trace.read_text().splitlines()) == data["expansions_used"]
    # one-sided search without a starting material
    assert main(["plan", "--network", str(net_path), "--target", inst.p_star, "--algo",
                 "retro*", "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["solved"]


def test_plan_errors(net_path, tiny_net):
    inst = _instance(tiny_net)
    assert main(["plan", "--network", str(net_path), "--target", inst.p_star]) == EXIT_USAGE
    assert main(["plan", "--network", str(net_path), "--target", "NOPE", "--algo",
                 "retro*"]) == EXIT_DATA
    assert main(["plan", "--target", inst.p_star, "--algo", "retro*"]) == EXIT_USAGE
    assert main(["plan", "--network", "/nonexistent.json", "--target", "x",
                 "--algo", "retro*"]) == EXIT_DATA


def test_oracle(tmp_path, net_path, tiny_net):
    inst = _instance(tiny_net)
    out = tmp_path / "o.json"
    assert main(["oracle", "--network", str(net_path), "--target", inst.p_star, "--sm",
                 inst.r_star, "--out", str(out)]) == EXIT_OK
    data = json.loads(out.read_text())
    assert data["satisfiable"] and data["cost"] == inst.oracle_constrained_cost + 0.0
    assert main(["oracle", "--network", str(net_path), "--target", inst.p_star, "--sm",
                 inst.p_star, "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["satisfiable"] is False


def test_bench(tmp_path, root, capsys):
    out = tmp_path / "b"
    assert main(["bench", "--config", str(root / "configs" / "tiny.json"), "--out-dir",
                 str(out), "--instances", "3", "--seed", "5"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 5 and len(summary["instances"]) == 3
    assert "solve" in capsys.readouterr().out


def test_usage_and_data_errors(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["gen"]) == EXIT_USAGE
    assert main(["gen", "--out", str(tmp_path / "x.json"), "--layers", "1"]) == EXIT_DATA
    bad = tmp_path / "bad.json"
    bad.write_text('{"instances": -1}')
    assert main(["bench", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_DATA
    bad.write_text('{"meta": {}, "molecules": []}')
    assert main(["oracle", "--network", str(bad), "--target", "x"]) == EXIT_DATA


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "bidesp", "gen", "--layers", "1", "--out",
                          str(tmp_path / "x.json")], capture_output=True, text=True)
    assert out.returncode == EXIT_DATA and "GenerationError" in out.stderr
    out = subprocess.run([sys.executable, "-m", "bidesp", "plan"], capture_output=True,
                         text=True)
    assert out.returncode == EXIT_USAGE
