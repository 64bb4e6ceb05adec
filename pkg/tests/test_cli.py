"""Command-line pipeline: generate, sense, reconstruct, and friends."""

import subprocess
import sys

import numpy as np
import pytest

from fracwave.cli import main
from fracwave.fileio import read_grid, read_slopes_csv
from fracwave.metrics import residual_stats
from fracwave.sensor import make_pupil


@pytest.fixture()
def pipeline(tmp_path):
    screen = tmp_path / "screen.bin"
    slopes = tmp_path / "slopes.csv"
    assert main(["generate", "--p", "3", "--seed", "4", "--out", str(screen)]) == 0
    assert (
        main(
            [
                "sense",
                str(screen),
                "--noise-std",
                "0.5",
                "--seed",
                "5",
                "--out",
                str(slopes),
            ]
        )
        == 0
    )
    return tmp_path, screen, slopes


def test_generate_writes_valid_grid(pipeline):
    _, screen, _ = pipeline
    w = read_grid(screen)
    assert w.shape == (9, 9)
    assert np.all(np.isfinite(w))


def test_generate_is_deterministic(tmp_path):
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    assert main(["generate", "--p", "3", "--seed", "11", "--out", str(a)]) == 0
    assert main(["generate", "--p", "3", "--seed", "11", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.bin"
    assert main(["generate", "--p", "3", "--seed", "12", "--out", str(c)]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_sense_records_layout_and_noise(pipeline):
    _, _, slopes = pipeline
    loaded, meta = read_slopes_csv(slopes)
    assert loaded.nsub == make_pupil(9).nsub
    assert meta["p"] == "3"
    assert meta["noise_std"] == "0.5"
    np.testing.assert_allclose(loaded.var, 0.25)


def test_reconstruct_recovers_wavefront(pipeline):
    tmp_path, screen, slopes = pipeline
    out = tmp_path / "estimate.bin"
    trace = tmp_path / "trace.csv"
    rc = main(
        [
            "reconstruct",
            str(slopes),
            "--method",
            "u-pcg-opt",
            "--max-iter",
            "20",
            "--tol",
            "1e-8",
            "--out",
            str(out),
            "--trace",
            str(trace),
        ]
    )
    assert rc == 0
    w_true = read_grid(screen)
    w_hat = read_grid(out)
    pup = make_pupil(9)
    _, var_in = residual_stats(np.zeros((9, 9)), w_true, pup)
    _, var_out = residual_stats(w_hat, w_true, pup)
    assert var_out < var_in  # estimate beats doing nothing
    lines = trace.read_text().splitlines()
    assert lines[1].startswith("iter,")
    assert len(lines) >= 4


def test_reconstruct_infers_grid_from_slope_comment(pipeline):
    tmp_path, _, slopes = pipeline
    out = tmp_path / "estimate.bin"
    assert main(["reconstruct", str(slopes), "--method", "w-cg", "--out", str(out)]) == 0
    assert read_grid(out).shape == (9, 9)


def test_simulate_writes_all_method_curves(tmp_path):
    out = tmp_path / "curves.csv"
    rc = main(
        [
            "simulate",
            "--p",
            "3",
            "--trials",
            "2",
            "--max-iter",
            "3",
            "--method",
            "all",
            "--seed",
            "1",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    lines = out.read_text().splitlines()
    methods = {line.split(",")[0] for line in lines[2:]}
    assert methods == {"w-cg", "w-pcg-jac", "w-pcg-opt", "u-cg", "u-pcg-jac", "u-pcg-opt"}


def test_validate_sf_writes_profile_and_map(tmp_path):
    out = tmp_path / "sf.csv"
    map_path = tmp_path / "sf_map.bin"
    rc = main(
        [
            "validate-sf",
            "--p",
            "3",
            "--trials",
            "5",
            "--seed",
            "0",
            "--out",
            str(out),
            "--map",
            str(map_path),
        ]
    )
    assert rc == 0
    assert out.read_text().splitlines()[1] == "r,D_measured,D_theory"
    assert read_grid(map_path).shape == (17, 17)


def test_bench_writes_rows(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--p", "3", "--max-iter", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "p,n,samples,op,flops,flops_per_sample,seconds"
    assert len(lines) > 2


def test_validation_failures_exit_2(tmp_path):
    assert main(["generate", "--p", "0", "--seed", "1", "--out", str(tmp_path / "x.bin")]) == 2
    assert (
        main(
            [
                "reconstruct",
                str(tmp_path / "missing.csv"),
                "--out",
                str(tmp_path / "y.bin"),
            ]
        )
        == 2
    )


def test_mismatched_grid_flag_exits_2(pipeline):
    tmp_path, _, slopes = pipeline
    rc = main(
        ["reconstruct", str(slopes), "--p", "4", "--out", str(tmp_path / "z.bin")]
    )
    assert rc == 2


def test_help_exits_cleanly():
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0


def test_console_entry_point(tmp_path):
    out = tmp_path / "cli.bin"
    proc = subprocess.run(
        [sys.executable, "-m", "fracwave.cli", "generate", "--p", "3", "--seed", "2", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert read_grid(out).shape == (9, 9)
