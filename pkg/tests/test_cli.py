import json

from hsdtile.cli import main
from hsdtile.kernels import fixture_path


def test_validate_rex_ok(capsys):
    code = main(["validate", "--benchmark", "rex2d",
                 "--param", "M_b=4", "--param", "N_b=4"])
    out = capsys.readouterr().out
    assert code == 0
    assert "legal, deadlock-free, 2 residual edge(s)" in out


def test_validate_reports_violation(tmp_path, capsys):
    bad = tmp_path / "bad.sched.json"
    bad.write_text(json.dumps({
        "n": 2, "k": 1,
        "maps": {"S": {"rows": ["i_b", "0 - j_b"]},
                 "In": {"rows": ["i_b", "0 - j_b"]}},
    }))
    report = tmp_path / "report.json"
    code = main(["validate", fixture_path("rex2d.prdg.json"), str(bad),
                 "--param", "M_b=4", "--param", "N_b=4",
                 "--report", str(report)])
    assert code == 1
    doc = json.loads(report.read_text())
    assert doc["result"]["legality"]["status"] == "violations"
    assert doc["result"]["legality"]["violations"][0]["witness"]


def test_missing_schedule_is_usage_error(capsys):
    code = main(["validate", fixture_path("rex2d.prdg.json"),
                 "/nonexistent/sched.json", "--param", "M_b=2", "--param", "N_b=2"])
    assert code == 2


def test_run_verify_ok(capsys):
    code = main(["run", "--benchmark", "rex2d", "--param", "M_b=5",
                 "--param", "N_b=5", "--workers", "4", "--verify"])
    assert code == 0
    assert "trace clean" in capsys.readouterr().out


def test_run_drop_clause_fails_verification(capsys):
    code = main(["run", "--benchmark", "rex2d", "--param", "M_b=4",
                 "--param", "N_b=4", "--workers", "2", "--verify",
                 "--drop-clause", "S:0", "--drop-clause", "S:1"])
    assert code == 1
    assert "verify:" in capsys.readouterr().out


def test_run_workers_zero_usage_error():
    assert main(["run", "--benchmark", "rex2d", "--workers", "0"]) == 2


def test_run_illegal_schedule_rejected(tmp_path, capsys):
    bad = tmp_path / "bad.sched.json"
    bad.write_text(json.dumps({
        "n": 2, "k": 1,
        "maps": {"S": {"rows": ["i_b", "0 - j_b"]},
                 "In": {"rows": ["i_b", "0 - j_b"]}},
    }))
    code = main(["run", fixture_path("rex2d.prdg.json"), str(bad),
                 "--param", "M_b=3", "--param", "N_b=3", "--kernel", "rex2d"])
    assert code == 1
    assert "rejected" in capsys.readouterr().out


def test_run_writes_trace_and_metrics(tmp_path):
    trace = tmp_path / "trace.csv"
    metrics = tmp_path / "metrics.json"
    code = main(["run", "--benchmark", "ltmi", "--param", "N_b=4",
                 "--workers", "2", "--trace-out", str(trace),
                 "--metrics-out", str(metrics)])
    assert code == 0
    assert trace.read_text().startswith("seq,worker,node")
    doc = json.loads(metrics.read_text())
    assert doc["status"] == "completed"
    assert doc["checksum"]
    assert "wall_time" in doc["meta"] and "wall_time" not in doc["metrics"]


def test_verify_trace_roundtrip(tmp_path):
    trace = tmp_path / "trace.csv"
    assert main(["run", "--benchmark", "rex2d", "--param", "M_b=3",
                 "--param", "N_b=3", "--workers", "2",
                 "--trace-out", str(trace)]) == 0
    assert main(["verify-trace", str(trace), "--benchmark", "rex2d",
                 "--param", "M_b=3", "--param", "N_b=3"]) == 0


def test_bench_outputs_and_determinism(tmp_path):
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    for out in (out1, out2):
        code = main(["bench", "--benchmark", "rex2d", "--factors", "1",
                     "--workers", "1,2,4", "--out-dir", str(out)])
        assert code == 0
        for name in ("bench.csv", "timing.csv", "formulas.json", "meta.json",
                     "timing-summary.txt"):
            assert (out / name).exists()
        assert (out / "figures" / "tasks.png").stat().st_size > 0
        assert (out / "figures" / "time.png").stat().st_size > 0
    # Deterministic payload: identical bytes across invocations.
    assert (out1 / "bench.csv").read_bytes() == (out2 / "bench.csv").read_bytes()
    # Checksum column identical across the workers sweep.
    rows = (out1 / "bench.csv").read_text().strip().splitlines()[1:]
    sums = {line.rsplit(",", 1)[1] for line in rows}
    assert len(sums) == 1


def test_bench_rex3d_checks_per_tile_column(tmp_path):
    out = tmp_path / "b3"
    code = main(["bench", "--benchmark", "rex3d", "--mapping", "1",
                 "--factors", "1,2,4", "--workers", "2",
                 "--out-dir", str(out)])
    assert code == 0
    import csv
    with open(out / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    hsd_rows = [r for r in rows if r["mode"] == "hsd"]
    assert len(hsd_rows) == 3
    # checks per interior tile is 1 for the line mapping at every size.
    assert all(r["checks_interior"] == "1" for r in hsd_rows)


def test_emit_writes_file(tmp_path):
    out = tmp_path / "rex.c"
    code = main(["emit", "--benchmark", "rex2d", "--target", "pthreads",
                 "-o", str(out)])
    assert code == 0
    assert "pthread_cond_broadcast" in out.read_text()


def test_emit_cuda_documented_only(capsys):
    code = main(["emit", "--benchmark", "rex2d", "--target", "cuda"])
    assert code == 2
    assert "documented" in capsys.readouterr().err


def test_emit_unwritable_output(tmp_path):
    code = main(["emit", "--benchmark", "rex2d", "--target", "pthreads",
                 "-o", str(tmp_path / "nosuchdir" / "o.c")])
    assert code == 2


def test_residual_subcommand(tmp_path, capsys):
    out = tmp_path / "residual.json"
    code = main(["residual", "--benchmark", "rex2d", "-o", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert [e["name"] for e in doc["edges"]] == ["e1", "e2"]
    assert doc["edges"][0]["deps"][0]["provenance"] == ["e1", 0, 0]


def test_catalog_lists_benchmarks(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    for bid in ("rex2d", "rex3d", "jacobi1d", "jacobi2d", "ltmi"):
        assert bid in out


def test_unknown_benchmark_usage_error(capsys):
    assert main(["run", "--benchmark", "nope"]) == 2
