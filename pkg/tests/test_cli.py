import csv
import json
import math
import subprocess
import sys

import pytest

from encx import bundled_model_path
from encx.cli import run
from encx.model_format import model_to_dict

TOY = str(bundled_model_path("toy.json"))
RADES = str(bundled_model_path("toy_rades.json"))

TRAJECTORY_HEADER = (
    "trajectory_id,time_s,north_ft,east_ft,altitude_ft_agl,velocity_kt,heading_deg,"
    "acceleration_kt_s,vertical_rate_ft_min,turn_rate_deg_s,clamped"
)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_validate(capsys):
    assert run(["validate", TOY]) == 0
    assert "toy_rotorcraft_1200" in capsys.readouterr().out


def test_validate_invalid_model(tmp_path, capsys, toy_model):
    d = model_to_dict(toy_model)
    d["variables"][2]["edges"] = [50, 500, 500, 3000, 5000]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert run(["validate", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "encx validate" in err and "'L'" in err


def test_usage_errors(tmp_path):
    assert run([]) == 2
    assert run(["validate", str(tmp_path / "missing.json")]) == 2
    assert run(["generate", TOY, "-n", "3"]) == 2  # seed required
    assert run(["compare", TOY, TOY, "-n", "10"]) == 2  # sampled mode needs a seed
    assert run(["compare", TOY, TOY, "-pairs", "Q:L", "-mode", "exact"]) == 2
    assert run(["generate", TOY, "-n", "1", "-seed", "1", "-duration", "10", "-dt", "3"]) == 2


def test_generate_csv_shape_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["generate", TOY, "-n", "100", "-duration", "180", "-dt", "1", "-seed", "7"]
    assert run(args + ["-o", str(a)]) == 0
    assert run(args + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0].startswith("# tool=encx version=") and "seed=7" in lines[0] and "toy_rotorcraft_1200" in lines[0]
    assert lines[1] == TRAJECTORY_HEADER
    table = rows(a)[1:]
    assert len(table) == 100 * 181
    assert [float(r[1]) for r in table[:181]] == list(range(181))


def test_generate_worker_invariance(tmp_path, monkeypatch):
    outs = []
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}.csv"
        assert run(["generate", TOY, "-n", "600", "-duration", "20", "-seed", "11", "-workers", str(w), "-o", str(out)]) == 0
        outs.append(out.read_bytes())
    monkeypatch.setenv("ENCX_WORKERS", "3")
    env_out = tmp_path / "env.csv"
    assert run(["generate", TOY, "-n", "600", "-duration", "20", "-seed", "11", "-o", str(env_out)]) == 0
    outs.append(env_out.read_bytes())
    assert len(set(outs)) == 1


def test_sample_constraints(tmp_path):
    out = tmp_path / "s.csv"
    assert run(["sample", TOY, "-n", "500", "-seed", "3", "-min-alt", "50", "-max-alt", "1200",
                "-min-speed", "40", "-max-speed", "120", "-o", str(out)]) == 0
    table = rows(out)
    header, body = table[0], table[1:]
    assert header[:2] == ["sample_id", "north_ft"] and header[-1] == "bin_DPSI"
    alt, vel = header.index("altitude_ft_agl"), header.index("velocity_kt")
    assert len(body) == 500
    assert all(50 <= float(r[alt]) <= 1200 and 40 <= float(r[vel]) <= 120 for r in body)


def test_sample_disjoint_exits_3(tmp_path, capsys):
    assert run(["sample", TOY, "-n", "5", "-seed", "1", "-min-alt", "10000", "-max-alt", "20000",
                "-o", str(tmp_path / "x.csv")]) == 3
    assert "rejection" in capsys.readouterr().err


def test_marginal_sums_to_one(tmp_path):
    out = tmp_path / "m.csv"
    assert run(["marginal", TOY, "-var", "all", "-o", str(out)]) == 0
    table = rows(out)[1:]
    by_var = {}
    for var, _, _, p in table:
        by_var.setdefault(var, []).append(float(p))
    assert set(by_var) == {"G", "A", "L", "V", "DH", "DZ", "DPSI"}
    for ps in by_var.values():
        assert math.fsum(ps) == pytest.approx(1.0, abs=1e-9)


def test_compare_self_exact_all_pairs(tmp_path):
    out = tmp_path / "r.json"
    assert run(["compare", TOY, TOY, "-pairs", "all", "-mode", "exact", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["metadata"]["mode"] == "exact" and doc["metadata"]["version"]
    assert len(doc["results"]) == 7 + 21
    assert all(abs(r["overlap_pct"] - 100) < 1e-9 for r in doc["results"])


def test_compare_csv_and_explicit_pairs(tmp_path):
    out = tmp_path / "r.csv"
    assert run(["compare", TOY, RADES, "-pairs", "L:G,V:L,L", "-mode", "exact", "-format", "csv", "-o", str(out)]) == 0
    table = rows(out)
    assert table[0] == ["Dependent Variable", "Independent Variable", "Overlap Percentage", "Classification"]
    assert [r[:2] for r in table[1:]] == [["L", "G"], ["V", "L"], ["L", "marginal"]]


def test_compare_sampled_and_transition_deterministic(tmp_path):
    outs = []
    for w in (1, 4):
        out = tmp_path / f"c{w}.json"
        assert run(["compare", TOY, RADES, "-pairs", "V:L", "-transition", "-n", "20000", "-trajectories", "50",
                    "-duration", "10", "-seed", "5", "-workers", str(w), "-o", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    results = json.loads(outs[0])["results"]
    assert [r["independent"] for r in results] == ["L", "transition", "transition", "transition"]


def test_blend_descriptor_acts_as_model(tmp_path):
    desc = tmp_path / "mix.json"
    assert run(["blend", TOY, RADES, "-weights", "0.25,0.75", "-o", str(desc)]) == 0
    doc = json.loads(desc.read_text())
    assert [c["weight"] for c in doc["blend"]["components"]] == [0.25, 0.75]
    assert run(["validate", str(desc)]) == 0
    assert run(["generate", str(desc), "-n", "5", "-duration", "5", "-seed", "1", "-o", str(tmp_path / "g.csv")]) == 0
    out = tmp_path / "r.json"
    assert run(["compare", str(desc), TOY, "-pairs", "L", "-mode", "exact", "-o", str(out)]) == 0
    assert json.loads(out.read_text())["results"][0]["overlap_pct"] < 100
    assert run(["blend", TOY, RADES, "-weights", "0.5,0.6", "-o", str(tmp_path / "bad.json")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "encx", "validate", TOY], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ok" in proc.stdout
