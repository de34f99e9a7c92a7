import json
from fractions import Fraction

import pytest

from conftest import TT, A, B, BE, build, flow
from tsnprio import io as tio
from tsnprio.adjust import orchestrate
from tsnprio.bench import BenchConfig, nominal_utilization, read_rows, run_bench, summarize, summary_table
from tsnprio.cli import main
from tsnprio.config import ShaperConfig
from tsnprio.topology import gen_flows, gen_topology

MS = 1_000_000


@pytest.mark.parametrize("kind,k,sw,es,links", [
    ("ladder", 2, 4, 4, 16),  # 4 rungs/rails + 4 access links, both directions
    ("ladder", 4, 8, 8, 36),
    ("sae", 4, 5, 15, 44),
    ("afdx", 4, 8, 32, 96),
])
def test_topology_shapes(kind, k, sw, es, links):
    net = gen_topology(kind, k=k)
    assert len(net.switches()) == sw
    assert len(net.end_stations()) == es
    assert len(net.links) == links
    assert net.is_connected()
    for l in net.links.values():
        assert net.link(l.dst, l.src).rate == l.rate


def test_topology_errors():
    with pytest.raises(ValueError):
        gen_topology("mesh")
    with pytest.raises(ValueError):
        gen_topology("ladder", k=0)


def test_gen_flows_reproducible_and_mixed():
    net = gen_topology("sae")
    a = gen_flows(net, 50, seed=3)
    assert a == gen_flows(net, 50, seed=3)
    assert a != gen_flows(net, 50, seed=4)
    only_tt = gen_flows(net, 30, mix=(1, 0, 0, 0), seed=1)
    assert all(f.static_prio == TT for f in only_tt)
    for f in a:
        assert f.ddl <= f.period and f.route[0].src == f.src and f.route[-1].dst == f.dst
    with pytest.raises(ValueError, match="pair budget"):
        gen_flows(gen_topology("ladder", k=2), 10_000, seed=0)
    with pytest.raises(ValueError):
        gen_flows(net, 10, mix=(0.5, 0.5, 0.5, 0))


def test_nominal_utilization_example():
    net = build([0], [], {100: 0, 101: 0})
    cfg = ShaperConfig(include_overhead=False)
    sol = orchestrate(net, [flow(net, 0, 100, 101, MS, MS, A)], cfg, algo="static")
    # 2 hops x 12 us / 1 ms
    assert nominal_utilization(sol) == Fraction(24, 1000)


def test_bench_config_parsing(tmp_path):
    p = tmp_path / "b.toml"
    p.write_text('[bench]\ntopologies = ["sae"]\nflow_counts = [20]\nn_seeds = 2\n'
                 '[bench.shaper]\nidle_a = 0.4\n')
    cfg = BenchConfig.load(p)
    assert cfg.seeds == [0, 1] and cfg.shaper.idle_a == 0.4
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"colour": "red"})
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"algorithms": ["magic"]})


def test_run_bench_single_instance(tmp_path):
    cfg = BenchConfig(topologies=["sae"], flow_counts=[30], seeds=[0], algorithms=["proposed", "static"])
    rows = run_bench(cfg, tmp_path)
    assert len(rows) == 2 and not any(r["error"] for r in rows)
    assert read_rows(tmp_path / "results.csv") == rows
    assert len(read_rows(tmp_path / "timing.csv")) == 2
    summ = summarize(rows)
    table = summary_table(summ)
    assert "gap_pp" in table.splitlines()[0]
    static = next(s for s in summ if s["algorithm"] == "static")
    proposed = next(s for s in summ if s["algorithm"] == "proposed")
    assert proposed["mean_success_rate"] >= static["mean_success_rate"]


def test_bench_records_generation_errors(tmp_path):
    cfg = BenchConfig(topologies=["ladder"], ladder_k=1, flow_counts=[500], seeds=[0], algorithms=["static"])
    rows = run_bench(cfg, tmp_path)
    assert rows[0]["error"] and rows[0]["success_rate"] == ""


# command line

@pytest.fixture
def files(tmp_path):
    net = tmp_path / "net.json"
    flows = tmp_path / "flows.json"
    assert main(["gen-topo", "--kind", "ladder", "--k", "2", "-o", str(net)]) == 0
    assert main(["gen-flows", "--net", str(net), "-n", "20", "--seed", "1", "-o", str(flows)]) == 0
    return tmp_path, net, flows


def test_cli_pipeline(files, capsys):
    d, net, flows = files
    sol = d / "sol.json"
    rc = main(["schedule", "--net", str(net), "--flows", str(flows), "-o", str(sol),
               "--rta", str(d / "rta.csv"), "--dot", str(d / "fg.dot")])
    assert rc == 0
    doc = json.loads(sol.read_text())
    assert doc["algo"] == "proposed" and len(doc["flows"]) == 20
    assert (d / "fg.dot").read_text().startswith("graph")
    assert "success_rate=" in capsys.readouterr().out
    rc = main(["simulate", "--solution", str(sol), "--horizon", "2", "-o", str(d / "sim.csv")])
    assert rc == 0
    header = (d / "sim.csv").read_text().splitlines()[0]
    assert header.startswith("flow,class,frames,max_delay_ns")


def test_cli_invalid_flow_exit_code(files, capsys):
    d, net, flows = files
    doc = json.loads(flows.read_text())
    doc["flows"][0]["ddl_ns"] = doc["flows"][0]["period_ns"] * 2
    doc["flows"][1]["class"] = "gold"
    flows.write_text(json.dumps(doc))
    assert main(["schedule", "--net", str(net), "--flows", str(flows)]) == 2
    err = capsys.readouterr().err
    assert "flow #1" in err and "ddl" in err.lower()


def test_cli_unroutable_exit_code(tmp_path):
    net = build([0, 1], [], {100: 0, 101: 1})
    tio.dump_json(tio.network_to_dict(net), tmp_path / "net.json")
    doc = {"flows": [{"id": 0, "src": 100, "dst": 101, "period_ns": MS, "ddl_ns": MS, "class": "avb_a"}]}
    tio.dump_json(doc, tmp_path / "flows.json")
    assert main(["schedule", "--net", str(tmp_path / "net.json"), "--flows", str(tmp_path / "flows.json")]) == 3


def test_cli_bench_and_report(tmp_path, capsys):
    conf = tmp_path / "b.toml"
    conf.write_text('topologies = ["afdx"]\nflow_counts = [20, 40]\nseeds = [0]\n')
    out = tmp_path / "out"
    assert main(["bench", "--config", str(conf), "-o", str(out)]) == 0
    assert main(["report", "--in", str(out), "--plots"]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"results.csv", "timing.csv", "summary.csv", "success_rate.svg",
            "nominal_utilization.svg", "time_cost.svg"} <= names
    assert "proposed" in capsys.readouterr().out
