import csv
import json

import numpy as np
import pytest

from gfloquet.cli import main


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def _read_json(out_dir, name):
    return json.loads((out_dir / name).read_text())


def test_analyze_scalar_cosine(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "scalar_cosine", "params": {"alpha": 0.3}},
        "grid": {"samples_per_period": 128}, "modes": 2,
    })
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    spec = _read_json(out, "spectrum.json")
    mu = complex(*spec["multipliers"][0])
    assert abs(mu - np.exp(0.3)) < 1e-6
    assert spec["converged"][0] is True
    assert len(spec["config_fingerprint"]) == 64
    ver = _read_json(out, "verify.json")
    assert ver["max_residual"] < 1e-6
    with open(out / "modes.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "sigma"
    assert len(rows) == 1 + 128 + 1


def test_analyze_delay_dominant_pair(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "delay_pi_over_2"},
        "grid": {"samples_per_period": 96}, "modes": 4,
    })
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    spec = _read_json(out, "spectrum.json")
    mus = np.array([complex(*m) for m in spec["multipliers"][:2]])
    assert np.min(np.abs(mus - 1j)) < 1e-3
    assert np.min(np.abs(mus + 1j)) < 1e-3


def test_analyze_table_system(tmp_path):
    ts = np.linspace(0.0, 1.0, 64, endpoint=False)
    cfg = _write(tmp_path / "c.json", {
        "system": {"dimension": 1, "period": 1.0,
                   "coefficient": (0.2 + np.cos(2 * np.pi * ts)).tolist()},
        "grid": {"samples_per_period": 64}, "modes": 1,
    })
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
    mu = complex(*_read_json(out, "spectrum.json")["multipliers"][0])
    assert abs(mu - np.exp(0.2)) < 1e-4


def test_analyze_invalid_configs(tmp_path):
    bad_period = _write(tmp_path / "p.json", {
        "system": {"dimension": 1, "period": -2.0, "coefficient": [1, 2, 3, 4]}})
    assert main(["analyze", "--config", bad_period, "--out", str(tmp_path / "o1")]) == 2
    missing = _write(tmp_path / "m.json", {"grid": {}})
    assert main(["analyze", "--config", missing, "--out", str(tmp_path / "o2")]) == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert main(["analyze", "--config", str(tmp_path / "junk.json"),
                 "--out", str(tmp_path / "o3")]) == 2
    assert main(["analyze", "--config", str(tmp_path / "absent.json"),
                 "--out", str(tmp_path / "o4")]) == 2


def _cycle_csv(path, period, samples):
    ts = np.linspace(0.0, period, len(samples))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"y{i+1}" for i in range(samples.shape[1])])
        for t, row in zip(ts, samples):
            writer.writerow([f"{t:.12g}"] + [f"{v:.12g}" for v in row])


def test_stability_van_der_pol(tmp_path, vdp_cycle):
    period, samples = vdp_cycle
    _cycle_csv(tmp_path / "cycle.csv", period, samples)
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "van_der_pol"},
        "cycle_file": str(tmp_path / "cycle.csv"),
        "period": period, "autonomous": True,
        "grid": {"samples_per_period": 192},
    })
    out = tmp_path / "out"
    assert main(["stability", "--config", cfg, "--out", str(out)]) == 0
    rep = _read_json(out, "stability.json")
    assert rep["verdict"] == "STABLE"
    assert abs(complex(*rep["trivial_multiplier"]) - 1.0) < 1e-3
    assert rep["decisive_magnitude"] < 1.0


def test_stability_dimension_mismatch(tmp_path, vdp_cycle):
    period, samples = vdp_cycle
    _cycle_csv(tmp_path / "cycle.csv", period, samples[:, :1])  # drop a column
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "van_der_pol"},
        "cycle_file": str(tmp_path / "cycle.csv"), "period": period,
    })
    assert main(["stability", "--config", cfg, "--out", str(tmp_path / "out")]) == 2


def test_stability_broken_cycle(tmp_path, vdp_cycle):
    period, samples = vdp_cycle
    broken = samples.copy()
    broken[-1] += 0.5  # wrap residual far above threshold
    _cycle_csv(tmp_path / "cycle.csv", period, broken)
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "van_der_pol"},
        "cycle_file": str(tmp_path / "cycle.csv"), "period": period,
    })
    assert main(["stability", "--config", cfg, "--out", str(tmp_path / "out")]) == 2


def test_bands_free_particle(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "potential": {"builtin": "kronig_penney", "params": {"strength": 0.0}},
        "energies": {"min": 0.5, "max": 4.0, "count": 8},
        "grid": {"samples_per_period": 64},
    })
    out = tmp_path / "out"
    assert main(["bands", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "bands.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        energy, p = float(row[0]), int(row[1])
        assert p == 2
        kmax = max(float(v) for v in row[2:2 + p])
        assert abs(kmax - np.sqrt(energy)) < 1e-6


def test_bands_nonlocal_extrema(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "potential": {"builtin": "separable_nonlocal"},
        "energies": {"min": -13.0, "max": 2.0, "count": 70},
        "grid": {"samples_per_period": 64},
    })
    out = tmp_path / "out"
    assert main(["bands", "--config", cfg, "--out", str(out)]) == 0
    ext = _read_json(out, "extrema.json")
    assert len(ext["extrema"]) >= 1
    diag = _read_json(out, "diagnostics.json")
    assert diag["failures"] == 0
    assert len(diag["records"]) == 70


def test_bands_empty_range_rejected(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "potential": {"builtin": "kronig_penney"},
        "energies": {"min": 1.0, "max": 2.0, "count": 0},
    })
    assert main(["bands", "--config", cfg, "--out", str(tmp_path / "out")]) == 2


def test_determinism_byte_identical(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "scalar_cosine"},
        "grid": {"samples_per_period": 64}, "modes": 2,
    })
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["analyze", "--config", cfg, "--out", str(out)]) == 0
        outs.append({f.name: f.read_bytes() for f in out.iterdir()})
    assert outs[0] == outs[1]


def test_grid_and_tol_overrides(tmp_path):
    cfg = _write(tmp_path / "c.json", {
        "system": {"builtin": "scalar_cosine"}, "modes": 1,
    })
    out = tmp_path / "out"
    assert main(["analyze", "--config", cfg, "--out", str(out),
                 "--grid", "64", "--tol", "1e-3"]) == 0
    assert _read_json(out, "spectrum.json")["grid"]["samples_per_period"] == 64
