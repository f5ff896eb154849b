import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from u1qa.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main
from u1qa.manifest import ManifestError, load_manifest
from u1qa.observables import read_timeseries_csv

BASE = """
[experiment]
name = {name}
observable = {observable}

[model]
kind = {kind}
L = {L}
L_A = {L_A}
boundary = periodic
p_u = 0.5
p = {p}

[sector]
kind = fixed
nu = 1/3

[initial]
kind = {initial}

[run]
t_max = {t_max}
realizations = {R}
pairs = {M}
seed = 424242
record_stride = 1
{extra}
"""


def write_manifest(tmp_path, **kw):
    defaults = dict(name="t", observable="entropy", kind="fredkin_swap", L=12,
                    L_A=6, p=0.2, initial="standard_pair", t_max=6, R=4, M=128,
                    extra="")
    defaults.update(kw)
    p = tmp_path / "m.ini"
    p.write_text(BASE.format(**defaults))
    return p


def test_manifest_parse_and_point_expansion(tmp_path):
    p = write_manifest(tmp_path, extra="[sweep]\np = 0.0, 0.1, 0.3")
    # section order: [sweep] must be its own section, fix formatting
    man = load_manifest(p)
    assert len(man.points) == 3
    labels = [pt.label for pt in man.points]
    assert labels == ["t__p0p0", "t__p0p1", "t__p0p3"]
    seeds = {pt.config.seed for pt in man.points}
    assert len(seeds) == 3  # independent substreams per point


def test_manifest_missing_field(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[experiment]\nname = x\nobservable = entropy\n")
    with pytest.raises(ManifestError, match=r"\[model\] kind"):
        load_manifest(p)


def test_manifest_bad_observable(tmp_path):
    p = write_manifest(tmp_path, observable="banana")
    with pytest.raises(ManifestError, match="observable"):
        load_manifest(p)


def test_manifest_bad_divisibility(tmp_path):
    p = write_manifest(tmp_path, L=10, L_A=5)
    with pytest.raises(ManifestError, match="fredkin"):
        load_manifest(p)


def test_cli_config_error_exit_code(tmp_path):
    p = write_manifest(tmp_path, L=10, L_A=5)
    rc = main(["entropy", "--manifest", str(p), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG


def test_cli_observable_mismatch(tmp_path):
    p = write_manifest(tmp_path)
    rc = main(["density", "--manifest", str(p), "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG


def test_cli_run_and_rerun_identical(tmp_path):
    p = write_manifest(tmp_path, t_max=5, R=3, M=64)
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["entropy", "--manifest", str(p), "--out", str(out1)]) == EXIT_OK
    assert main(["entropy", "--manifest", str(p), "--out", str(out2)]) == EXIT_OK
    a = (out1 / "t.csv").read_text()
    b = (out2 / "t.csv").read_text()
    assert a == b
    echo = json.loads((out1 / "t__manifest.json").read_text())
    assert echo["observable"] == "entropy"
    assert "wall_seconds" in echo


def test_cli_worker_count_invariance(tmp_path):
    p = write_manifest(tmp_path, t_max=5, R=4, M=64)
    out1 = tmp_path / "w1"
    out2 = tmp_path / "w2"
    assert main(["entropy", "--manifest", str(p), "--out", str(out1),
                 "--workers", "1"]) == EXIT_OK
    assert main(["entropy", "--manifest", str(p), "--out", str(out2),
                 "--workers", "4"]) == EXIT_OK
    a = read_timeseries_csv(out1 / "t.csv")
    b = read_timeseries_csv(out2 / "t.csv")
    assert np.array_equal(np.nan_to_num(a.mean, nan=-7), np.nan_to_num(b.mean, nan=-7))
    assert np.array_equal(a.n_valid, b.n_valid)


def test_cli_seed_override_changes_results(tmp_path):
    p = write_manifest(tmp_path, t_max=5, R=3, M=64)
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    main(["entropy", "--manifest", str(p), "--out", str(out1)])
    main(["entropy", "--manifest", str(p), "--out", str(out2), "--seed", "1"])
    assert (out1 / "t.csv").read_text() != (out2 / "t.csv").read_text()


def test_cli_correlation_offsets(tmp_path):
    p = write_manifest(tmp_path, observable="correlation", initial="single_string",
                       t_max=4, R=2, M=200,
                       extra="[correlation]\noffsets = 0, 2\n")
    out = tmp_path / "c"
    assert main(["correlation", "--manifest", str(p), "--out", str(out)]) == EXIT_OK
    assert (out / "t_x0.csv").exists()
    assert (out / "t_x2.csv").exists()


def test_cli_qdecay_and_displacement(tmp_path):
    p = write_manifest(tmp_path, observable="qdecay", kind="cswap4", L=16, L_A=8,
                       p=0.0, t_max=5, R=2, M=128,
                       extra="")
    # nu must give integer charge: 1/3 of 16 is not integral -> config error
    rc = main(["qdecay", "--manifest", str(p), "--out", str(tmp_path / "q")])
    assert rc == EXIT_CONFIG

    p2 = tmp_path / "m2.ini"
    p2.write_text(BASE.format(name="q", observable="qdecay", kind="cswap4", L=12,
                              L_A=6, p=0.0, initial="standard_pair", t_max=5,
                              R=2, M=128, extra="").replace("nu = 1/3", "nu = 1/2"))
    assert main(["qdecay", "--manifest", str(p2), "--out", str(tmp_path / "q2")]) == EXIT_OK


def test_cli_oracle_check_passes():
    rc = main(["oracle-check", "--t-max", "4", "--realizations", "1",
               "--p", "0.5", "--tol", "1e-9"])
    assert rc == EXIT_OK


def test_cli_fit_subcommand(tmp_path):
    p = write_manifest(tmp_path, t_max=20, R=6, M=2048, L=24, L_A=12, p=0.0)
    out = tmp_path / "fit"
    main(["entropy", "--manifest", str(p), "--out", str(out)])
    rc = main(["fit", "--form", "sqrt_tlnt", "--csv", str(out / "t.csv"),
               "--window", "2", "20"])
    assert rc == EXIT_OK
    assert (out / "t.fit.json").exists()
    blob = json.loads((out / "t.fit.json").read_text())
    assert blob["form"] == "sqrt_tlnt"
    rc = main(["fit", "--form", "power", "--csv", str(out / "nonexistent*.csv")])
    assert rc == EXIT_CONFIG


def test_cli_psapprox():
    assert main(["psapprox", "--L", "1000", "--dl", "20", "--nu", "0.05"]) == EXIT_OK


def test_console_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "u1qa.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip()
