from __future__ import annotations

import csv
import io
import json

import pytest

from qenergy.cli import PREDICT_COLUMNS, UsageError, main, parse_grid, parse_ints
from qenergy.model import WorkloadPoint, predict_power_and_energy
from qenergy.records import parse_measurements
from qenergy.synth import default_plant, movidius_runs
from qenergy.model import MovidiusModel
from qenergy.constants import MYRIAD1_P_ACT, MYRIAD1_P_STAT, MYRIAD1_UNITS


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_grid_forms():
    assert parse_grid("0:100:50") == [0.0, 50.0, 100.0]
    assert parse_grid("0:90:50") == [0.0, 50.0]
    assert parse_grid("1.2, 3.4") == [1.2, 3.4]
    assert parse_ints("1:8:1") == list(range(1, 9))
    for bad in ("5:1:1", "0:10:0", "1:2", "a,b"):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_movidius_anchor(capsys):
    code, out, _ = run(capsys, "movidius", "--units", "SauXor", "--shaves", "8")
    assert code == 0 and out.strip() == "498.23 mW"
    code, out, _ = run(capsys, "movidius", "--units", "SauXor,IauXor", "--shaves", "1")
    assert out.strip() == "122.76 mW"


def test_movidius_fit_from_csv(capsys, tmp_path):
    table = MovidiusModel(MYRIAD1_P_STAT, MYRIAD1_P_ACT, MYRIAD1_UNITS)
    path = tmp_path / "runs.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["benchmark", "shaves", "power_mw"])
        for bench, by_k in movidius_runs(table).items():
            for k, mw in by_k.items():
                w.writerow([bench, k, repr(mw)])
    code, out, _ = run(capsys, "movidius", "--fit", str(path))
    assert code == 0
    doc = json.loads(out)
    assert doc["p_stat_mw"] == pytest.approx(MYRIAD1_P_STAT, abs=1e-9)
    assert doc["units"]["SauXor"]["p_dyn_mw"] == pytest.approx(MYRIAD1_UNITS["SauXor"][0], abs=1e-9)


def test_predict_sweep_rows_and_monotone_tail(capsys):
    code, out, _ = run(capsys, "predict", "--pairs", "4", "--freq", "3.4", "--pw", "0:2000:50")
    assert code == 0
    table = rows(out)
    assert tuple(table[0]) == PREDICT_COLUMNS
    impls = sorted({r["impl"] for r in table})
    for impl in impls:
        series = [r for r in table if r["impl"] == impl]
        assert [float(r["pw"]) for r in series] == [50.0 * i for i in range(41)]
        tail = [float(r["throughput_ops_per_s"]) for r in series if r["regime"] == "non-congested"]
        assert tail and all(b <= a for a, b in zip(tail, tail[1:]))


def test_calibrate_then_predict_reproduces_plant(capsys, tmp_path):
    plant = default_plant()
    data, bundle_path = tmp_path / "synth.csv", tmp_path / "bundle.json"
    assert run(capsys, "synth", "--out", str(data))[0] == 0
    code, out, _ = run(capsys, "calibrate", str(data), "--out", str(bundle_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["n_records"] == len(parse_measurements(str(data)))
    assert summary["measurement_budget"] > 0
    code, out, _ = run(
        capsys, "predict", "--bundle", str(bundle_path), "--pairs", "1,4,8", "--freq", "1.2,3.4", "--pw", "0:3000:750"
    )
    assert code == 0
    for r in rows(out):
        point = WorkloadPoint(r["impl"], int(r["n"]), float(r["f_ghz"]), float(r["pw"]))
        want = predict_power_and_energy(
            point, plant.throughput_model(point.impl), plant.power_model(point.impl), plant.cas, plant.topology
        )
        assert float(r["throughput_ops_per_s"]) == pytest.approx(want.throughput, rel=1e-9)
        assert float(r["power_w"]) == pytest.approx(want.breakdown.total, rel=1e-9)
        assert float(r["energy_per_op_j"]) == pytest.approx(want.energy_per_op, rel=1e-9)


def test_predict_json_output(capsys, tmp_path):
    dest = tmp_path / "report.json"
    code, _, _ = run(capsys, "predict", "--pairs", "2", "--pw", "0,100", "--json", str(dest))
    assert code == 0
    doc = json.loads(dest.read_text())
    assert doc["rows"] and set(doc["rows"][0]) == set(PREDICT_COLUMNS)


def test_bench_appends_records(capsys, tmp_path):
    dest = tmp_path / "bench.csv"
    args = ["bench", "--pw", "0", "--duration", "0.05", "--warmup", "0", "--pinning", "none", "--freq", "2.0"]
    assert run(capsys, *args, "--out", str(dest))[0] == 0
    assert run(capsys, *args, "--out", str(dest), "--variant", "a2")[0] == 0
    recs = parse_measurements(str(dest))
    assert [r.impl for r in recs] == ["a0", "a2"]
    assert all(r.source == "bench" and r.ops_ok > 0 for r in recs)


def test_topology_from_environment(capsys, tmp_path, monkeypatch):
    topo = tmp_path / "topo.json"
    topo.write_text(json.dumps({"sockets": 1, "cores_per_socket": 2}))
    monkeypatch.setenv("QENERGY_TOPOLOGY", str(topo))
    code, _, err = run(capsys, "bench", "--pairs", "2", "--pw", "0", "--duration", "0.05")
    assert code == 1
    assert json.loads(err)["error"] == "DomainError"


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    doc = json.loads(out)
    assert code == 0 and doc["ok"] and all(doc["checks"].values())


@pytest.mark.parametrize(
    "argv,code,error",
    [
        (["frobnicate"], 2, "UsageError"),
        (["movidius"], 2, "UsageError"),
        (["predict", "--pw", "9:1:1"], 2, "UsageError"),
        (["calibrate", "/nonexistent/records.csv"], 1, "FileNotFoundError"),
        (["predict", "--bundle", "/nonexistent/bundle.json"], 1, "FileNotFoundError"),
        (["bench", "--variant", "a1", "--duration", "0.05"], 1, "UnknownVariantError"),
    ],
)
def test_errors_are_json(capsys, argv, code, error):
    got, out, err = run(capsys, *argv)
    assert got == code and out == ""
    doc = json.loads(err)
    assert doc["error"] == error and doc["message"]


def test_schema_error_reports_location(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("impl,n,f,pw,duration,sockets_active\na0,1,2.0,0,1.0,1\n")
    code, _, err = run(capsys, "calibrate", str(bad))
    doc = json.loads(err)
    assert code == 1 and doc["error"] == "SchemaError"
    assert doc["column"] == "ops_ok"
