import csv
import subprocess
import sys

import numpy as np
import pytest

from sketchcc.cli import main
from sketchcc.graph_engine import GraphSketch
from sketchcc.streamio import AdjacencyOracle, StreamReader, stream_read


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def gen(tmp_path, capsys, name="s.bin", **kw):
    path = tmp_path / name
    args = ["gen", "--stream", path]
    for k, v in kw.items():
        args += [f"--{k.replace('_', '-')}", v]
    code, out, _ = run(capsys, *args)
    assert code == 0
    return path, out


def test_gen_is_deterministic(tmp_path, capsys):
    a, out = gen(tmp_path, capsys, "a.bin", nodes=256, seed=1)
    b, _ = gen(tmp_path, capsys, "b.bin", nodes=256, seed=1)
    assert a.read_bytes() == b.read_bytes()
    V, edges, updates = map(int, out.splitlines()[1].split())
    assert V == 256 and updates >= edges
    assert abs(edges - 256 * 255 / 4) <= 0.1 * 256 * 255 / 4


@pytest.mark.slow
def test_gen_large_density(tmp_path, capsys):
    _, out = gen(tmp_path, capsys, nodes=1 << 13, seed=3, churn=0)
    V, edges, _ = map(int, out.splitlines()[1].split())
    half = V * (V - 1) / 4
    assert abs(edges - half) <= 0.1 * half


def test_gen_text_and_graph(tmp_path, capsys):
    graph = tmp_path / "g.txt"
    path = tmp_path / "s.txt"
    code, _, _ = run(capsys, "gen", "--stream", path, "--nodes", 16, "--graph", graph, "--text")
    assert code == 0
    assert path.read_text().startswith("16 ")
    assert graph.read_text().startswith("# 16 nodes")
    code, out, _ = run(capsys, "ingest", "--stream", path)
    assert code == 0 and "updates=" in out
    assert main(["gen", "--stream", str(tmp_path / "x.bin"), "--disconnect", "150"]) == 2


def test_ingest_empty_stream(tmp_path, capsys):
    path, _ = gen(tmp_path, capsys, nodes=8, edge_prob=0.0)
    snap = tmp_path / "snap.bin"
    code, out, _ = run(capsys, "ingest", "--stream", path, "--snapshot", snap)
    assert code == 0 and "updates=0" in out
    g = GraphSketch.load(snap)
    assert not g.alpha.any() and not g.gamma.any()
    code, out, _ = run(capsys, "query", "--snapshot", snap)
    assert code == 0 and "components=8 " in out


@pytest.mark.parametrize("mode", ["none", "leaf", "tree"])
def test_ingest_workers_give_identical_snapshots(tmp_path, capsys, mode):
    path, _ = gen(tmp_path, capsys, nodes=64, seed=2, churn=0.5)
    snaps = []
    for g in (1, 8):
        snap = tmp_path / f"{mode}-{g}.bin"
        extra = ["--buffer-bytes", 1 << 14, "--block-bytes", 1 << 10] if mode == "tree" else []
        code, out, _ = run(capsys, "ingest", "--stream", path, "--snapshot", snap,
                           "--buffering", mode, "--workers", g, "--seed", 5, *extra)
        assert code == 0
        if mode == "tree":
            assert "blocks_written=" in out
        snaps.append(snap.read_bytes())
    assert snaps[0] == snaps[1]


def test_ingest_query_schedule_and_csv(tmp_path, capsys):
    path, _ = gen(tmp_path, capsys, nodes=64, seed=4)
    out_csv = tmp_path / "ingest.csv"
    code, out, _ = run(capsys, "ingest", "--stream", path, "--query-every", 25, "--csv", out_csv)
    assert code == 0
    assert out.count("components=") == 4
    rows = list(csv.DictReader(out_csv.open()))
    assert rows[0]["mode"] == "leaf" and int(rows[0]["updates"]) == len(StreamReader(path))


def test_query_after_disconnect(tmp_path, capsys):
    path, _ = gen(tmp_path, capsys, nodes=128, seed=6, disconnect=10)
    snap = tmp_path / "snap.bin"
    assert run(capsys, "ingest", "--stream", path, "--snapshot", snap)[0] == 0
    code, out, _ = run(capsys, "query", "--snapshot", snap)
    comps = int(out.split("components=")[1].split()[0])
    assert code == 0 and comps >= 11
    code, out, _ = run(capsys, "verify", "--stream", path, "--snapshot", snap)
    assert code == 0 and "failures=0" in out


def test_verify_stream_and_trials(tmp_path, capsys):
    path, _ = gen(tmp_path, capsys, nodes=64, seed=7, churn=0.3)
    code, out, _ = run(capsys, "verify", "--stream", path, "--checks", 5)
    assert code == 0 and "checks=5 failures=0" in out
    code, out, _ = run(capsys, "verify", "--trials", 100, "--nodes", 64, "--checks", 1)
    assert code == 0 and "checks=100 failures=0" in out


def test_verify_detects_corrupted_snapshot(tmp_path, capsys):
    path, _ = gen(tmp_path, capsys, nodes=64, seed=8, disconnect=3)
    snap = tmp_path / "snap.bin"
    run(capsys, "ingest", "--stream", path, "--snapshot", snap)
    g = GraphSketch.load(snap)
    oracle = AdjacencyOracle(64)
    oracle.apply_stream(stream_read(path))
    labels = oracle.components()
    # fold in a phantom edge joining two distinct components
    u = int(np.flatnonzero(labels != labels[0])[0])
    g.apply_update(0, u)
    g.save(snap)
    code, out, _ = run(capsys, "verify", "--stream", path, "--snapshot", snap)
    assert code == 1 and "MISMATCH" in out


def test_verify_edge_list_input(tmp_path, capsys):
    edges = tmp_path / "edges.txt"
    rng = np.random.default_rng(0)
    pairs = {tuple(sorted(rng.choice(500, 2, replace=False).tolist())) for _ in range(800)}
    edges.write_text("\n".join(f"{u + 1000} {v + 1000}" for u, v in pairs))
    code, out, _ = run(capsys, "verify", "--edges", edges, "--checks", 2)
    assert code == 0 and "failures=0" in out


def test_bench_l0_csv(tmp_path, capsys):
    out_csv = tmp_path / "l0.csv"
    code, out, _ = run(capsys, "bench-l0", "--lengths", "1e6,1e12", "--duration", 0.05,
                       "--csv", out_csv)
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 4
    by = {(int(r["vector_length"]), r["sampler"]): r for r in rows}
    for n, ratio in ((10**6, 2.0), (10**12, 4.0)):
        std = next(r for (m, s), r in by.items() if m == n and s != "cubesketch")
        assert int(std["payload_bytes"]) / int(by[(n, "cubesketch")]["payload_bytes"]) == ratio


def test_usage_errors(tmp_path, capsys):
    assert main(["ingest"]) == 2
    assert main(["query"]) == 2
    assert main(["verify"]) == 2
    assert main(["ingest", "--stream", str(tmp_path / "missing.bin")]) == 2
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a stream at all, sorry")
    assert main(["ingest", "--stream", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["ingest", "--buffering", "bogus"])


def test_env_override(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SKETCHCC_NODES", "32")
    path, out = gen(tmp_path, capsys)
    assert out.splitlines()[1].split()[0] == "32"


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "sketchcc.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "bench-l0" in res.stdout and "Exit codes" in res.stdout
