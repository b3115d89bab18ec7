import json

import numpy as np
import pytest

from randkrylov.cli import (
    CSV_COLUMNS,
    ConfigError,
    build_problem,
    load_bundle,
    main,
    parse_config,
    read_trace,
    write_bundle,
)

TINY = """
# tiny end-to-end experiment
problem.generator = subset_selection
problem.m = 40
problem.n = 12
problem.seed = 3
problem.nl = 0.02
problem.noise_seed = 5

solver.irn-lsqr.family = irn
solver.irn-lsqr.seed = 1
solver.irn-lsqr.lambda = 0.5
solver.irn-lsqr.outer_max = 3
solver.irn-lsqr.tau = 1e-4

solver.sns-irw-flsqr.family = flex
solver.sns-irw-flsqr.seed = 2
solver.sns-irw-flsqr.mode = irw
solver.sns-irw-flsqr.scheme = sketch_and_solve
solver.sns-irw-flsqr.k_max = 5
solver.sns-irw-flsqr.lambda = 0.5
solver.sns-irw-flsqr.tau = 1e-4
"""


def _write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_parse_config(tmp_path):
    path = _write(tmp_path, "a.b = 1  # comment\n\n# full comment\nc = x y\n")
    cfg = parse_config(path)
    assert cfg == {"a.b": "1", "c": "x y"}
    bad = _write(tmp_path, "just a line\n", "bad.cfg")
    with pytest.raises(ConfigError):
        parse_config(bad)
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.cfg"))


def test_run_writes_schema_and_is_deterministic(tmp_path):
    cfg = _write(tmp_path, TINY)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--out", str(out2)]) == 0
    for name in ("irn-lsqr", "sns-irw-flsqr"):
        t1 = (out1 / f"{name}.trace.csv").read_bytes()
        t2 = (out2 / f"{name}.trace.csv").read_bytes()
        assert t1 == t2
        header = t1.decode().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert (out1 / f"{name}.x.f64").exists()
        meta = json.loads((out1 / f"{name}.x.json").read_text())
        assert meta["solver"] == name
    assert (out1 / "summary.csv").exists()
    assert (out1 / "summary.txt").exists()


def test_run_threads_matches_serial(tmp_path):
    cfg = _write(tmp_path, TINY)
    out1, out2 = tmp_path / "s", tmp_path / "t"
    assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--out", str(out2),
                 "--threads", "2"]) == 0
    for name in ("irn-lsqr", "sns-irw-flsqr"):
        assert (out1 / f"{name}.trace.csv").read_bytes() == \
            (out2 / f"{name}.trace.csv").read_bytes()


def test_seed_override_changes_problem(tmp_path):
    cfg = _write(tmp_path, TINY)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["run", "--config", cfg, "--out", str(out2),
                 "--seed-override", "99"]) == 0
    assert (out1 / "irn-lsqr.trace.csv").read_bytes() != \
        (out2 / "irn-lsqr.trace.csv").read_bytes()


def test_exit_code_2_on_config_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2
    missing_seed = _write(tmp_path, (
        "problem.generator = subset_selection\nproblem.m = 10\n"
        "problem.n = 4\nproblem.seed = 1\nsolver.a.family = irn\n"
    ), "noseed.cfg")
    assert main(["run", "--config", missing_seed,
                 "--out", str(tmp_path / "x")]) == 2
    no_solver = _write(tmp_path, (
        "problem.generator = subset_selection\nproblem.m = 10\n"
        "problem.n = 4\nproblem.seed = 1\n"
    ), "nosolver.cfg")
    assert main(["run", "--config", no_solver,
                 "--out", str(tmp_path / "y")]) == 2
    bad_gen = _write(tmp_path, (
        "problem.generator = mystery\nproblem.seed = 1\n"
        "solver.a.family = irn\nsolver.a.seed = 1\n"
    ), "badgen.cfg")
    assert main(["run", "--config", bad_gen,
                 "--out", str(tmp_path / "z")]) == 2


def test_exit_code_3_on_solver_failure(tmp_path):
    # dp policy with zero noise level: the discrepancy target is invalid
    cfg = _write(tmp_path, (
        "problem.generator = subset_selection\nproblem.m = 20\n"
        "problem.n = 6\nproblem.seed = 1\n"
        "solver.a.family = irn\nsolver.a.seed = 1\n"
        "solver.a.lambda_policy = dp\nsolver.a.nl = 0\n"
    ), "fail.cfg")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "f")]) == 3


def test_gen_and_bundle_roundtrip(tmp_path):
    cfg = _write(tmp_path, (
        "problem.generator = subset_selection\nproblem.m = 30\n"
        "problem.n = 8\nproblem.seed = 11\nproblem.nl = 0.01\n"
        "problem.noise_seed = 12\n"
    ), "gen.cfg")
    bundle = tmp_path / "bundle"
    assert main(["gen", "--config", cfg, "--out", str(bundle)]) == 0
    names = {p.name for p in bundle.iterdir()}
    assert {"A.meta.json", "x_true.f64", "b.f64", "b_exact.f64",
            "A.f64"} <= names
    inst = load_bundle(str(bundle))
    direct = build_problem(parse_config(cfg))
    np.testing.assert_array_equal(inst.b, direct.b)
    np.testing.assert_array_equal(inst.x_true, direct.x_true)
    np.testing.assert_array_equal(inst.A.matrix, direct.A.materialize())
    # little-endian float64 on disk
    raw = np.fromfile(bundle / "b.f64", dtype="<f8")
    np.testing.assert_array_equal(raw, direct.b)


def test_report_from_traces(tmp_path, capsys):
    cfg = _write(tmp_path, TINY)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    rep = tmp_path / "rep"
    assert main(["report", str(out / "irn-lsqr.trace.csv"),
                 str(out / "sns-irw-flsqr.trace.csv"),
                 "--out", str(rep)]) == 0
    text = capsys.readouterr().out
    assert "irn-lsqr" in text and "sns-irw-flsqr" in text
    assert (rep / "summary.csv").exists()
    assert main(["report"]) == 2


def test_read_trace_rejects_bad_schema(tmp_path):
    bad = tmp_path / "bad.trace.csv"
    bad.write_text("solver,outer_iter\nfoo,1\n")
    with pytest.raises(ConfigError):
        read_trace(str(bad))


def test_bundle_roundtrip_helpers(tmp_path):
    inst = build_problem({
        "problem.generator": "identity", "problem.n": "6",
        "problem.seed": "2",
    })
    write_bundle(inst, str(tmp_path / "idb"))
    back = load_bundle(str(tmp_path / "idb"))
    np.testing.assert_array_equal(back.x_true, inst.x_true)
