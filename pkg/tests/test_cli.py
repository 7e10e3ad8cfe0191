import csv

import numpy as np
import pytest
import yaml

from dscmplan.cli import EXIT_CODES, main
from dscmplan.lut import load_lut
from dscmplan.noise_model import load_noise_model
from dscmplan.simulator import read_waveform

# a small, fast configuration: two leaves, short blocks, coarse grids
SMALL = {
    "profile": {"losses": [1.0, 1.5]},
    "waveform": {"symbols_per_block": 1024, "blocks": 2},
    "optimization": {
        "baseline_ses": [4.0, 3.6],
        "harvest_blocks": 8,
        "refit_iterations": 0,
        "delta_se": 0.1,
        "loss_step": 0.5,
    },
    "sweep": {"ratio_step_db": 0.5},
    "validation": {"ratios_db": [6.0, 12.0]},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def read_csv(path):
    raw = open(path, "rb").read()
    assert b"\r" not in raw and raw.endswith(b"\n")
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_capacity_sweep(tmp_path, capsys, small_config):
    out = tmp_path / "o"
    assert main(["--config", small_config, "--out", str(out), "--mode", "theory", "capacity-sweep"]) == 0
    rows = read_csv(out / "capacity_sweep.csv")
    assert rows[0][:3] == ["ratio_db", "capacity_bps", "is_optimum"]
    assert len(rows[0]) == 3 + 2
    assert sum(r[2] == "1" for r in rows[1:]) == 1
    meta = yaml.safe_load((out / "capacity_sweep.meta.yaml").read_text())
    assert meta["config"]["profile"]["losses"] == [1.0, 1.5]
    assert str(out / "capacity_sweep.csv") in capsys.readouterr().out


def test_esnr_validate(tmp_path, small_config):
    out = tmp_path / "o"
    assert main(["--config", small_config, "--out", str(out), "esnr-validate"]) == 0
    rows = read_csv(out / "esnr_validation.csv")
    assert rows[0] == ["ratio_db", "subcarrier", "esnr_theory_db", "esnr_sim_db", "delta_db"]
    assert len(rows) == 1 + 2 * 2


def test_fit_build_and_simulate(tmp_path, small_config):
    out = tmp_path / "o"
    base = ["--config", small_config, "--out", str(out), "--seed", "5"]
    assert main(base + ["fit-noise", "--ratio-db", "7", "--ses", "5.5,5"]) == 0
    model = load_noise_model(out / "noise_model.txt")
    assert model.clip_ratio_db == 7.0 and model.metadata["seed"] == "5"
    assert len(read_csv(out / "noise_fit.csv")) == 1 + 8
    assert main(base + ["build-lut", "--noise-model", str(out / "noise_model.txt")]) == 0
    lut = load_lut(out / "lut_piecewise.bin")
    assert lut.provenance == model.content_hash()
    assert np.array_equal(load_lut(out / "lut_piecewise.txt").ber, lut.ber)
    assert main(base + ["--lut-model", "gaussian", "build-lut"]) == 0
    assert load_lut(out / "lut_gaussian.txt").model_mode == "gaussian"
    assert main(base + ["simulate", "--ses", "5.5,5", "--ratio-db", "7", "--dump-waveform"]) == 0
    rows = read_csv(out / "simulation.csv")
    assert {r[0] for r in rows[1:]} == {"no-clipping", "clipping"}
    assert rows[0][-1] == "theory_ber" and all(r[-1] for r in rows[1:])
    w, n, _ = read_waveform(out / "waveform_block0.dscm")
    assert n == 2 and w.size > 0


def test_optimize_theory_only(tmp_path, small_config):
    out = tmp_path / "o"
    code = main(["--config", small_config, "--out", str(out), "--mode", "theory", "--lut-model", "gaussian", "optimize"])
    assert code == 0
    rows = read_csv(out / "optimization.csv")
    assert {r[0] for r in rows[1:]} == {"baseline", "gaussian"}
    summary = (out / "summary.txt").read_text()
    assert "selected_lut = gaussian" in summary
    assert "piecewise" not in summary
    assert not (out / "noise_model.txt").exists()


@pytest.mark.parametrize(
    "argv,category",
    [
        (["--mode", "wrong", "capacity-sweep"], "usage"),
        (["frobnicate"], "usage"),
        (["--config", "/nonexistent/c.yaml", "capacity-sweep"], "configuration"),
        (["--mode", "theory", "esnr-validate"], "configuration"),
        (["simulate", "--ses", "5.5,5"], "configuration"),
        (["build-lut", "--noise-model", "/nonexistent/m.txt"], "io"),
    ],
)
def test_failures_report_category(tmp_path, capsys, argv, category):
    with pytest.raises(SystemExit) if category == "usage" else _nullcontext() as info:
        code = main(["--out", str(tmp_path / "o")] + argv)
    if category == "usage":
        code = info.value.code
    assert code == EXIT_CODES[category] != 0
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith(f"error: {category}: ")


def test_bad_number_list(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--ses", "4,x"])
    assert info.value.code == EXIT_CODES["usage"]


class _nullcontext:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False
