import os

import numpy as np
import pytest

from cpl.cli import main, METRICS_HEADER


FAST_TRAIN = ["--problem", "advection1d", "--method", "sdifp", "--epochs", "4",
              "--batch-n", "12", "--cloud-m", "256", "--n-time-slices", "2",
              "--width", "6", "--hidden-layers", "2", "--n-ic", "8", "--n-bc", "8",
              "--eval-every", "2", "--eval-cloud", "256", "--ref-nx", "128",
              "--seed", "7"]


def _run_train(out):
    return main(["train", "--out", str(out)] + FAST_TRAIN)


def test_train_writes_artifacts(tmp_path):
    assert _run_train(tmp_path / "a") == 0
    base = tmp_path / "a"
    metrics = (base / "metrics.csv").read_text().splitlines()
    assert metrics[0] == METRICS_HEADER
    assert len(metrics) == 1 + 2 + 1  # header + cadence rows + final epoch
    assert (base / "config.resolved").exists()
    assert (base / "checkpoint.bin").exists()
    affine = (base / "affine_table.csv").read_text().splitlines()
    assert affine[0] == "t,alpha,beta"
    assert len(affine) == 65


def test_train_determinism_byte_identical(tmp_path):
    assert _run_train(tmp_path / "a") == 0
    assert _run_train(tmp_path / "b") == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b


def test_env_var_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CPL_OUT_DIR", str(tmp_path / "env"))
    assert main(["train"] + FAST_TRAIN) == 0
    assert (tmp_path / "env" / "metrics.csv").exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[train]\nproblem = advection1d\nmethod = vanilla\n"
                   "epochs = 3\nbatch_n = 10\nwidth = 6\nhidden_layers = 2\n"
                   "n_time_slices = 2\nn_ic = 4\nn_bc = 4\neval_every = 1\n"
                   "eval_cloud = 128\nref_nx = 128\nseed = 1\n")
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--out", str(out),
                 "--epochs", "2"]) == 0
    resolved = (out / "config.resolved").read_text()
    assert "epochs = 2" in resolved       # flag beats file
    assert "method = vanilla" in resolved  # file beats default


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[train]\nwarp_speed = 9\n")
    assert main(["train", "--config", str(cfg)]) == 2


def test_bad_method_exit_code(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--method", "warp"]) == 2


def test_grid_preflight_refusal(tmp_path):
    args = ["train", "--out", str(tmp_path), "--problem", "advection1d",
            "--method", "discrete_proj", "--proj-mode", "grid",
            "--proj-support", str(2 ** 21), "--epochs", "1", "--batch-n", "8",
            "--width", "6", "--hidden-layers", "2", "--ref-nx", "128"]
    assert main(args) == 2


def test_reference_command_and_cache_hit(tmp_path, capsys):
    args = ["reference", "--problem", "advection1d", "--nx", "128",
            "--out", str(tmp_path)]
    assert main(args) == 0
    csv = (tmp_path / "invariants_advection1d.csv").read_text().splitlines()
    assert csv[0] == "t,c1,c2"
    c1 = np.array([float(line.split(",")[1]) for line in csv[1:]])
    assert np.max(np.abs(c1 - c1[0])) / abs(c1[0]) <= 1e-3
    capsys.readouterr()
    assert main(args) == 0
    err = capsys.readouterr().err
    assert "cache hit" in err


def test_reference_cfl_refused(tmp_path):
    args = ["reference", "--problem", "kdv1d", "--nx", "128", "--dt", "0.01",
            "--out", str(tmp_path)]
    assert main(args) == 2


def test_sweep_subset_size_monotone(tmp_path):
    args = ["sweep", "--axis", "subset_size", "--values", "1,2,4",
            "--out", str(tmp_path), "--problem", "fokker_planck_linear_nd",
            "--dim", "2", "--method", "sdifp", "--estimator", "ds_uge",
            "--batch-n", "8", "--cloud-m", "128", "--n-time-slices", "1",
            "--width", "6", "--hidden-layers", "2", "--n-ic", "4", "--n-bc", "4"]
    assert main(args) == 0
    lines = (tmp_path / "sweep_subset_size.csv").read_text().splitlines()
    assert lines[0].startswith("axis,value")
    nodes = [int(line.split(",")[4]) for line in lines[1:]]
    assert nodes[0] < nodes[1] < nodes[2]


def test_sweep_dimension_refuses_above_cap(tmp_path):
    args = ["sweep", "--axis", "dimension", "--values", "2,100",
            "--out", str(tmp_path), "--problem", "sine_gordon_nd",
            "--method", "sdifp", "--epochs", "2", "--batch-n", "8",
            "--cloud-m", "128", "--n-time-slices", "1", "--width", "6",
            "--hidden-layers", "2", "--n-ic", "4", "--n-bc", "4",
            "--eval-cloud", "128"]
    assert main(args) == 0
    lines = (tmp_path / "sweep_dimension.csv").read_text().splitlines()
    assert "refused" in lines[2]
    assert "refused" not in lines[1]


def test_sweep_cloud_size_error_decreases(tmp_path):
    args = ["sweep", "--axis", "cloud_size", "--values", "100,10000",
            "--out", str(tmp_path), "--problem", "sine_gordon_nd", "--dim", "1",
            "--method", "sdifp", "--width", "8", "--hidden-layers", "2",
            "--eval-cloud", "4096", "--seed", "2"]
    assert main(args) == 0
    lines = (tmp_path / "sweep_cloud_size.csv").read_text().splitlines()
    errs = [float(line.split(",")[2]) for line in lines[1:]]
    assert errs[-1] < errs[0]


def test_verify_command_passes():
    assert main(["verify"]) == 0


def test_numerical_abort_exit_code(monkeypatch, tmp_path):
    import cpl.cli as climod
    from cpl.errors import NumericalAbort

    def exploding(*a, **k):
        raise NumericalAbort("injected divergence")

    monkeypatch.setattr(climod, "run_training", exploding)
    assert main(["train", "--out", str(tmp_path)] + FAST_TRAIN) == 3


def test_sweep_dimension_conservation_column(tmp_path):
    # desk-scale slice of the dimension-scaling study: held-out conservation
    # error stays small as d grows
    args = ["sweep", "--axis", "dimension", "--values", "2,4,8",
            "--out", str(tmp_path), "--problem", "sine_gordon_nd",
            "--method", "sdifp", "--epochs", "3", "--batch-n", "16",
            "--cloud-m", "4096", "--n-time-slices", "2", "--width", "8",
            "--hidden-layers", "2", "--n-ic", "8", "--n-bc", "8",
            "--eval-cloud", "4096", "--seed", "3"]
    assert main(args) == 0
    lines = (tmp_path / "sweep_dimension.csv").read_text().splitlines()
    rel_errs = []
    for line in lines[1:]:
        parts = line.split(",")
        d = int(float(parts[1]))
        from cpl.pde import make_problem
        c1 = make_problem("sine_gordon_nd", dim=d).invariant_targets(0.0)[0]
        rel_errs.append(float(parts[2]) / (1 + abs(c1)))
    assert all(e <= 1e-2 for e in rel_errs)


def test_verify_reports_at_least_25_checks(capsys):
    from cpl import checks
    results = checks.run_all(log=None)
    assert len(results) >= 25
