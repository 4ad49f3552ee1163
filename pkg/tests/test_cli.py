import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from multicore_gap.cli import GAP_COLUMNS, ENSEMBLE_COLUMNS, main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# multicore-gap ")
    return lines[1].split(","), [line.split(",") for line in lines[2:]]


def test_topology_commands(capsys):
    code, out, _ = run(["topology", "--kind", "star", "--cores", 4], capsys)
    assert code == 0 and "n_links=3" in out and "hub=0" in out
    code, out, _ = run(["topology", "--kind", "full", "--cores", 3], capsys)
    assert code == 0 and "n_links=3" in out
    code, _, err = run(["topology", "--kind", "ring", "--cores", 2], capsys)
    assert code == 1 and "duplicate" in err


GAP_ARGS = ["gap-scan", "--topology", "linear", "--cores", 2, "--qubits-per-core", 2,
            "--c-rand", "1/3", "--i-min", 1, "--i-max", 8]


def test_gap_scan_output(tmp_path, capsys):
    out = tmp_path / "gap.csv"
    code, stdout, _ = run(GAP_ARGS + ["--out", out], capsys)
    assert code == 0
    header, rows = data_rows(out)
    assert tuple(header) == GAP_COLUMNS
    assert len(rows) == 8
    delta = np.array([float(r[header.index("delta")]) for r in rows])
    assert 0 < int(np.argmax(delta)) < 7
    assert "interior=True" in stdout
    manifest = json.loads((tmp_path / "gap.csv.manifest.json").read_text())
    assert manifest["command"] == "gap-scan" and manifest["config"]["n_cores"] == 2
    assert set(manifest["audit"]) == {str(i) for i in range(1, 9)}
    assert b"\r" not in out.read_bytes()


def test_gap_scan_missing_key_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gap-scan", "--topology", "linear", "--qubits-per-core", "2", "--out", str(tmp_path / "x.csv")])
    assert exc.value.code == 2
    assert "n_cores" in capsys.readouterr().err


def test_gap_scan_reruns_and_replay_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(GAP_ARGS + ["--out", a], capsys)
    run(GAP_ARGS + ["--out", b, "--threads", 2], capsys)
    assert a.read_bytes() == b.read_bytes()
    code, out, _ = run(["replay", tmp_path / "a.csv.manifest.json", "--out", tmp_path / "c.csv"], capsys)
    assert code == 0 and "matches" in out
    assert (tmp_path / "c.csv").read_bytes() == a.read_bytes()


def test_replay_detects_tampering(tmp_path, capsys):
    out = tmp_path / "g.csv"
    run(GAP_ARGS + ["--out", out, "--i-max", 3], capsys)
    path = tmp_path / "g.csv.manifest.json"
    manifest = json.loads(path.read_text())
    manifest["outputs"] = {str(out): "0" * 64}
    path.write_text(json.dumps(manifest))
    code, stdout, _ = run(["replay", path, "--out", tmp_path / "r.csv"], capsys)
    assert code == 1 and "DIFFERS" in stdout


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "arch.cfg"
    cfg.write_text("# arch\ntopology = ring\nn_cores = 3\nn_qubits_per_core = 1\np_single = 1.0\n")
    out = tmp_path / "g.csv"
    code, _, _ = run(["gap-scan", "--config", cfg, "--topology", "full", "--i-max", 3, "--out", out], capsys)
    assert code == 0
    _, rows = data_rows(out)
    assert rows[0][0] == "full" and rows[0][1] == "3"


ENS_ARGS = ["ensemble-scan", "--topology", "linear", "--cores", 2, "--qubits-per-core", 2,
            "--samples", 300, "--i-min", 1, "--i-max", 3]


def test_ensemble_scan_and_cache(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MULTICORE_GAP_CACHE", str(tmp_path / "cache"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    t0 = time.perf_counter()
    assert run(ENS_ARGS + ["--out", a], capsys)[0] == 0
    cold = time.perf_counter() - t0
    assert list((tmp_path / "cache").iterdir())
    t0 = time.perf_counter()
    assert run(ENS_ARGS + ["--out", b, "--threads", 2], capsys)[0] == 0
    warm = time.perf_counter() - t0
    assert a.read_bytes() == b.read_bytes()
    assert warm < cold
    header, rows = data_rows(a)
    assert tuple(header) == ENSEMBLE_COLUMNS and len(rows) == 3
    assert all(np.isfinite(float(r[header.index("idh")])) for r in rows)
    c = tmp_path / "c.csv"
    assert run(ENS_ARGS + ["--out", c, "--no-cache"], capsys)[0] == 0
    assert c.read_bytes() == a.read_bytes()


def test_ensemble_scan_one_sample(tmp_path, capsys):
    args = [x if x != 300 else 1 for x in ENS_ARGS]
    code, _, err = run(args + ["--out", tmp_path / "e.csv"], capsys)
    assert code == 1 and "at least 2" in err


def _write_gap_csv(path, lams, a=2, b=1):
    lines = ["# multicore-gap gap-scan v1", ",".join(GAP_COLUMNS)]
    for I, lam in enumerate(lams, start=1):
        D = a * I + b
        delta = 1 - lam ** (1 / D)
        lines.append(f"linear,{a},2,0.5,0.3333333333333333,{I},{D},{lam!r},{delta!r},{1 - delta!r}")
    path.write_text("\n".join(lines) + "\n")


def test_analyze_synthetic_exponential(tmp_path, capsys):
    gap = tmp_path / "gap.csv"
    _write_gap_csv(gap, [0.9 * math.exp(-0.5 * I) for I in range(1, 9)])
    code, out, _ = run(["analyze", "--gap", gap], capsys)
    report = json.loads(out)
    assert code == 0 and report["gap_is_interior"] is False
    assert report["decay_fit"]["max_abs_residual"] < 1e-12


def test_analyze_with_ensemble(tmp_path, capsys):
    gap, ens, rep = tmp_path / "g.csv", tmp_path / "e.csv", tmp_path / "r.json"
    run(GAP_ARGS + ["--out", gap, "--i-max", 3], capsys)
    run(ENS_ARGS + ["--out", ens], capsys)
    code, _, _ = run(["analyze", "--gap", gap, "--ensemble", ens, "--out", rep], capsys)
    report = json.loads(rep.read_text())
    assert code == 0
    assert report["i_star_difference"] == abs(report["i_star_gap"] - report["i_star_idh"])


def test_analyze_malformed_csv_names_line(tmp_path, capsys):
    gap = tmp_path / "gap.csv"
    _write_gap_csv(gap, [0.5, 0.4, 0.3])
    lines = gap.read_text().splitlines()
    lines[3] = lines[3].replace("0.4", "oops", 1)
    gap.write_text("\n".join(lines) + "\n")
    code, _, err = run(["analyze", "--gap", gap], capsys)
    assert code == 1 and ":4:" in err


def test_dump_operator(tmp_path, capsys):
    out = tmp_path / "op.txt"
    code, _, _ = run(["dump-operator", "--topology", "linear", "--cores", 2, "--qubits-per-core", 1,
                      "--p-single", 1, "--steps", 1, "--out", out], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# dim=9 ")
    cols = {}
    for line in lines[1:]:
        _, c, v = line.split()
        cols[c] = cols.get(c, 0.0) + float(v)
    assert all(abs(s - 1) < 1e-12 for s in cols.values())


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "multicore_gap.cli", "topology", "--kind", "linear",
                          "--cores", "4"], capture_output=True, text=True, check=True)
    assert "n_links=3" in res.stdout
