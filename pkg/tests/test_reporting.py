import csv

import numpy as np
import pytest
import yaml

from dscmplan.cli import EXIT_CODES, main
from dscmplan.config import resolve
from dscmplan.errors import ArtifactIOError
from dscmplan.lut import gross_capacity
from dscmplan.reporting import run_capacity_sweep, sweep_ratios, write_csv

from conftest import REFERENCE_SES


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_sweep_grid():
    cfg = resolve()
    r = sweep_ratios(cfg)
    assert r[0] == 0.0 and r[-1] == 16.0 and r.size == 161


def test_reference_sweep_flags_optimum(tmp_path):
    cfg = resolve(output_dir=str(tmp_path), mode="theory")
    path, meta = run_capacity_sweep(cfg)
    rows = _rows(path)[1:]
    best = [r for r in rows if r[2] == "1"]
    assert len(best) == 1 and 6.0 <= float(best[0][0]) <= 8.0
    caps = [float(r[1]) for r in rows]
    assert float(best[0][1]) == max(caps)
    doc = yaml.safe_load(open(meta))
    assert doc["summary"]["optimal_ratio_db"] == pytest.approx(float(best[0][0]))


def test_single_leaf_sweep_strictly_unimodal(tmp_path):
    cfg = resolve({"profile": {"losses": [1.0]}, "optimization": {"baseline_ses": [4.0]}}, output_dir=str(tmp_path))
    path, _ = run_capacity_sweep(cfg)
    rows = [r for r in _rows(path)[1:] if r[2] == "0"]
    d = np.diff([float(r[1]) for r in rows])
    assert np.all(d != 0)
    assert np.count_nonzero(np.diff(np.sign(d))) == 1


def test_baseline_gross_capacity():
    assert gross_capacity(REFERENCE_SES, 8e9) == pytest.approx(217.6e9, rel=1e-12)


def test_csv_dialect(tmp_path):
    path = write_csv(str(tmp_path / "t.csv"), ["a", "b"], [[1, 0.1], [True, float("nan")], [None, "x"]])
    assert open(path, "rb").read() == b"a,b\n1,0.1\n1,nan\n,x\n"


def test_io_errors_carry_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(ArtifactIOError, match="file"):
        run_capacity_sweep(resolve(output_dir=str(blocker / "sub")))
    code = main(["--out", str(blocker / "sub"), "--mode", "theory", "capacity-sweep"])
    assert code == EXIT_CODES["io"]
    assert capsys.readouterr().err.startswith("error: io: ")
