"""Config-driven experiment runner.

Subcommands:
  gen     write a problem bundle directory from the [problem] keys
  run     solve the configured problem with every configured solver and write
          one trace CSV per solver, the solution vectors, and a summary
  report  tabulate one or more trace CSVs

Config files are flat ``key = value`` lines with dotted section keys, e.g.::

    problem.generator = subset_selection
    problem.m = 2000
    problem.n = 400
    problem.seed = 7
    problem.nl = 0.05
    problem.noise_seed = 11
    solver.irn-lsqr.family = irn
    solver.irn-lsqr.seed = 1
    solver.irn-lsqr.lambda = 100.0
    output.dir = out

Exit codes: 0 success, 2 config/validation error, 3 solver error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import os
import sys

import numpy as np

from . import problems as prob_mod
from .baselines import fista_solve
from .flex import (
    FlexSolverConfig,
    exact_flex_solve,
    s2p_flex_solve,
    sns_flex_solve,
)
from .irn import IRNConfig, SolveResult, TraceRow, irn_s2p_solve, irn_solve
from .krylov import gmres_solve, lsqr_solve
from .operators import DenseOperator, IdentityOperator
from .regparam import LambdaPolicy
from .sketching import build_leverage_sketch, estimate_leverage_scores
from .weights import WeightSpec

CSV_COLUMNS = [
    "solver", "outer_iter", "cum_inner_iter", "rel_error", "objective_mm",
    "objective_literal", "lambda", "eps_hat", "mono_cond_satisfied",
    "breakdown_flag",
]


class ConfigError(Exception):
    pass


class SolverError(Exception):
    pass


def parse_config(path):
    """Flat key-value config with dotted keys; '#' starts a comment."""
    cfg = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            cfg[key.strip()] = value.strip()
    return cfg


def _section(cfg, prefix):
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in cfg.items() if k.startswith(prefix + ".")}


def _solver_names(cfg):
    names = []
    for key in cfg:
        if key.startswith("solver."):
            name = key.split(".")[1]
            if name not in names:
                names.append(name)
    return names


def _get(sec, key, cast, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return cast(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {sec[key]!r}") from exc


# ---------------------------------------------------------------------------
# problem construction and bundles

def build_problem(cfg, seed_override=None):
    sec = _section(cfg, "problem")
    gen = _get(sec, "generator", str, required=True)
    if gen == "bundle":
        return load_bundle(_get(sec, "bundle", str, required=True))
    seed = _get(sec, "seed", int, required=True)
    if seed_override is not None:
        seed = seed_override
    if gen == "subset_selection":
        inst = prob_mod.gen_subset_selection(
            _get(sec, "m", int, required=True),
            _get(sec, "n", int, required=True),
            _get(sec, "rho", float, 0.95),
            _get(sec, "bern_p", float, 0.1),
            seed,
        )
    elif gen == "starfield":
        inst = prob_mod.gen_starfield_deblur(
            _get(sec, "nx", int, required=True),
            _get(sec, "density", float, 0.072),
            _get(sec, "sigma_blur", float, 2.0),
            seed,
        )
    elif gen == "tomo":
        inst = prob_mod.gen_tomo(
            _get(sec, "nx", int, required=True),
            _get(sec, "n_angles", int, 18),
            _get(sec, "n_rays", int, None),
            seed,
        )
    elif gen == "identity":
        n = _get(sec, "n", int, required=True)
        rng = np.random.Generator(np.random.Philox(seed))
        x_true = rng.standard_normal(n)
        op = IdentityOperator(n)
        inst = prob_mod.ProblemInstance(
            A=op, psi=IdentityOperator(n), b=x_true.copy(),
            b_exact=x_true.copy(), x_true=x_true, nl=0.0, seed=seed,
            descriptor=f"identity n={n}",
        )
    else:
        raise ConfigError(f"unknown problem generator {gen!r}")
    nl = _get(sec, "nl", float, 0.0)
    if nl > 0.0:
        inst = prob_mod.add_noise(inst, nl, _get(sec, "noise_seed", int, seed + 1))
    return inst


def write_bundle(inst, outdir):
    os.makedirs(outdir, exist_ok=True)
    meta = {
        "descriptor": inst.descriptor,
        "nrows": inst.A.nrows,
        "ncols": inst.A.ncols,
        "kind": inst.A.kind,
        "nl": inst.nl,
        "seed": inst.seed,
    }
    for name, vec in (("x_true", inst.x_true), ("b", inst.b),
                      ("b_exact", inst.b_exact)):
        vec.astype("<f8").tofile(os.path.join(outdir, f"{name}.f64"))
    if inst.A.kind in ("dense", "radon", "convolution2d", "identity"):
        inst.A.materialize().astype("<f8").tofile(
            os.path.join(outdir, "A.f64")
        )
    with open(os.path.join(outdir, "A.meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(path):
    with open(os.path.join(path, "A.meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    m, n = meta["nrows"], meta["ncols"]
    vecs = {}
    for name in ("x_true", "b", "b_exact"):
        vecs[name] = np.fromfile(os.path.join(path, f"{name}.f64"),
                                 dtype="<f8")
    Af = os.path.join(path, "A.f64")
    if not os.path.exists(Af):
        raise ConfigError(f"bundle {path} has no materialized operator")
    A = DenseOperator(np.fromfile(Af, dtype="<f8").reshape(m, n))
    return prob_mod.ProblemInstance(
        A=A, psi=IdentityOperator(n), b=vecs["b"], b_exact=vecs["b_exact"],
        x_true=vecs["x_true"], nl=meta["nl"], seed=meta["seed"],
        descriptor=meta["descriptor"],
    )


# ---------------------------------------------------------------------------
# solver dispatch

def _lambda_policy(sec, inst):
    kind = _get(sec, "lambda_policy", str, "fixed")
    lam = _get(sec, "lambda", float, 1.0)
    tau_lambda = _get(sec, "tau_lambda", float, 1.01)
    nl = _get(sec, "nl", float, inst.nl)
    x_true = inst.x_true if kind == "optimal" else None
    return LambdaPolicy(kind=kind, lam=lam, nl=nl, tau_lambda=tau_lambda,
                        x_true=x_true)


def _weight_spec(sec):
    return WeightSpec(p=_get(sec, "p", float, 1.0),
                      tau=_get(sec, "tau", float, 1e-10))


def _pilot_krylov_bases(A, b, depth):
    """Standard Golub-Kahan pilot bases: left vectors (data space, includes
    the b direction) and right vectors (solution space)."""
    us = [b / np.linalg.norm(b)]
    vs = []
    v = None
    for _ in range(depth):
        vhat = A.apply_adjoint(us[-1])
        for w in vs:
            vhat = vhat - (w @ vhat) * w
        nv = np.linalg.norm(vhat)
        if nv < 1e-14:
            break
        v = vhat / nv
        vs.append(v)
        uhat = A.apply(v)
        for w in us:
            uhat = uhat - (w @ uhat) * w
        nu = np.linalg.norm(uhat)
        if nu < 1e-14:
            break
        us.append(uhat / nu)
    return np.stack(us, axis=1), (np.stack(vs, axis=1) if vs else None)


def build_flex_sketches(A, b, k_max, multiplier, seed):
    """Frozen leverage-score sketches for the flexible solvers, sampled
    against a pilot Krylov subspace."""
    depth = min(k_max, 20)
    U, V = _pilot_krylov_bases(A, b, depth)
    s = max(multiplier * k_max, U.shape[1] + 1)
    p1 = estimate_leverage_scores(U)
    S1 = build_leverage_sketch(p1, s, seed)
    if V is None:
        V = np.eye(A.ncols)
    p2 = estimate_leverage_scores(V)
    S2 = build_leverage_sketch(p2, s, seed + 1)
    return S1, S2


def _result_from_history(xs, A, b, weight, lam, x_true):
    from .irn import _objectives, _rel_error

    trace = []
    for it, x in enumerate(xs, 1):
        obj_mm, obj_lit = _objectives(A, b, x, weight, lam, None)
        trace.append(TraceRow(
            outer=it, cum_inner=it, rel_error=_rel_error(x, x_true),
            objective_mm=obj_mm, objective_literal=obj_lit, lam=lam,
        ))
    return SolveResult(list(xs), trace)


def run_solver(name, cfg, inst):
    sec = _section(cfg, f"solver.{name}")
    family = _get(sec, "family", str, required=True)
    if "seed" not in sec:
        raise ConfigError(f"solver {name!r} is missing a seed")
    seed = _get(sec, "seed", int, required=True)
    weight = _weight_spec(sec)
    policy = _lambda_policy(sec, inst)
    k_max = _get(sec, "k_max", int, 50)
    x_true = inst.x_true

    if family in ("irn", "irn_s2p"):
        config = IRNConfig(
            weight=weight,
            outer_max=_get(sec, "outer_max", int, k_max),
            inner_tol=_get(sec, "inner_tol", float, 1e-8),
            inner_max=_get(sec, "inner_max", int, None),
            lambda_policy=policy,
            seed=seed,
        )
        if family == "irn":
            return irn_solve(inst.A, inst.psi, inst.b, config, x_true)
        mult = _get(sec, "sketch_multiplier", int, 4)
        M = inst.A.matrix if hasattr(inst.A, "matrix") else inst.A.materialize()
        p = estimate_leverage_scores(M)
        S = build_leverage_sketch(p, mult * inst.A.ncols, seed)
        return irn_s2p_solve(inst.A, inst.psi, inst.b, config, S, x_true)

    if family == "flex":
        ell_raw = _get(sec, "ell", str, "4")
        ell = None if ell_raw == "full" else int(ell_raw)
        config = FlexSolverConfig(
            basis=_get(sec, "basis", str, "golub_kahan"),
            mode=_get(sec, "mode", str, "irw"),
            scheme=_get(sec, "scheme", str, "sketch_and_solve"),
            ell=ell,
            k_max=k_max,
            weight=weight,
            lambda_policy=policy,
            inner_tol=_get(sec, "inner_tol", float, 1e-10),
            seed=seed,
        )
        if config.scheme == "exact":
            return exact_flex_solve(inst.A, inst.psi, inst.b, config, x_true)
        mult = _get(sec, "sketch_multiplier", int, 4)
        S1, S2 = build_flex_sketches(inst.A, inst.b, k_max, mult, seed)
        solver = (sns_flex_solve if config.scheme == "sketch_and_solve"
                  else s2p_flex_solve)
        return solver(inst.A, inst.psi, inst.b, config, S1, S2, x_true)

    if family == "lsqr":
        xs = []
        lsqr_solve(inst.A, inst.b, lam=_get(sec, "lambda", float, 0.0),
                   tol=_get(sec, "tol", float, 1e-12), maxit=k_max,
                   callback=lambda x: xs.append(x.copy()))
        return _result_from_history(xs, inst.A, inst.b, weight,
                                    _get(sec, "lambda", float, 0.0), x_true)
    if family == "gmres":
        xs = []
        gmres_solve(inst.A, inst.b, tol=_get(sec, "tol", float, 1e-12),
                    maxit=k_max, callback=lambda x: xs.append(x.copy()))
        return _result_from_history(xs, inst.A, inst.b, weight, 0.0, x_true)
    if family == "fista":
        return fista_solve(inst.A, inst.b, _get(sec, "lambda", float, 1.0),
                           n_iter=k_max, weight=weight, x_true=x_true)
    raise ConfigError(f"unknown solver family {family!r} for {name!r}")


# ---------------------------------------------------------------------------
# output

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    return str(v)


def trace_to_csv(name, result):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in result.trace:
        writer.writerow([
            name, row.outer, row.cum_inner, _fmt(row.rel_error),
            _fmt(row.objective_mm), _fmt(row.objective_literal),
            _fmt(row.lam), _fmt(row.eps_hat), _fmt(row.mono_satisfied),
            _fmt(row.breakdown),
        ])
    return buf.getvalue()


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def summarize_traces(rows_by_solver, threshold=None):
    """Per-solver summary: best relative error, iterations to threshold,
    final mm objective, and monotonicity-violation count."""
    out = []
    for name, rows in rows_by_solver.items():
        errs = [r["rel_error"] for r in rows if not np.isnan(r["rel_error"])]
        objs = [r["objective_mm"] for r in rows]
        best = min(errs) if errs else float("nan")
        thr = threshold if threshold is not None else (
            1.05 * best if errs else float("nan")
        )
        to_thr = ""
        for r in rows:
            if not np.isnan(r["rel_error"]) and r["rel_error"] <= thr:
                to_thr = r["cum_inner_iter"]
                break
        viol = 0
        if objs:
            slack = 1e-8 * objs[0]
            viol = sum(1 for a, c in zip(objs, objs[1:]) if c > a + slack)
        out.append({
            "solver": name,
            "best_rel_error": best,
            "iters_to_threshold": to_thr,
            "final_objective_mm": objs[-1] if objs else float("nan"),
            "monotonicity_violations": viol,
        })
    return out


def read_trace(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            missing = set(CSV_COLUMNS) - set(reader.fieldnames or [])
            raise ConfigError(
                f"{path}: trace schema mismatch, missing column(s) "
                f"{sorted(missing)}"
            )
        rows = []
        for rec in reader:
            rows.append({
                "solver": rec["solver"],
                "outer_iter": int(rec["outer_iter"]),
                "cum_inner_iter": int(rec["cum_inner_iter"]),
                "rel_error": float(rec["rel_error"]) if rec["rel_error"]
                else float("nan"),
                "objective_mm": float(rec["objective_mm"]),
                "objective_literal": float(rec["objective_literal"]),
                "lambda": float(rec["lambda"]),
            })
    return rows


def _write_summary(outdir, summaries):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["solver", "best_rel_error", "iters_to_threshold",
              "final_objective_mm", "monotonicity_violations"]
    writer.writerow(header)
    lines = ["{:<28} {:>14} {:>10} {:>16} {:>6}".format(
        "solver", "best_rel_err", "to_thr", "final_F", "viol")]
    for s in summaries:
        writer.writerow([s["solver"], _fmt(s["best_rel_error"]),
                         s["iters_to_threshold"],
                         _fmt(s["final_objective_mm"]),
                         s["monotonicity_violations"]])
        lines.append("{:<28} {:>14.6g} {:>10} {:>16.8g} {:>6}".format(
            s["solver"], s["best_rel_error"], str(s["iters_to_threshold"]),
            s["final_objective_mm"], s["monotonicity_violations"]))
    _atomic_write(os.path.join(outdir, "summary.csv"), buf.getvalue())
    text = "\n".join(lines) + "\n"
    _atomic_write(os.path.join(outdir, "summary.txt"), text)
    return text


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args):
    cfg = parse_config(args.config)
    inst = build_problem(cfg, args.seed_override)
    outdir = args.out or _get(_section(cfg, "output"), "dir", str, "out")
    write_bundle(inst, outdir)
    print(f"wrote bundle to {outdir} ({inst.descriptor})")
    return 0


def cmd_run(args):
    cfg = parse_config(args.config)
    names = _solver_names(cfg)
    if not names:
        raise ConfigError("no solvers configured")
    inst = build_problem(cfg, args.seed_override)
    outdir = args.out or _get(_section(cfg, "output"), "dir", str, "out")
    os.makedirs(outdir, exist_ok=True)

    # validate before any solver runs
    for name in names:
        sec = _section(cfg, f"solver.{name}")
        if "family" not in sec:
            raise ConfigError(f"solver {name!r} is missing a family")
        if "seed" not in sec:
            raise ConfigError(f"solver {name!r} is missing a seed")

    def _one(name):
        return name, run_solver(name, cfg, inst)

    results = {}
    try:
        if args.threads > 1:
            with concurrent.futures.ThreadPoolExecutor(args.threads) as pool:
                for name, result in pool.map(_one, names):
                    results[name] = result
        else:
            for name in names:
                results[name] = run_solver(name, cfg, inst)
    except ConfigError:
        raise
    except Exception as exc:
        raise SolverError(str(exc)) from exc

    rows_by_solver = {}
    for name in names:
        result = results[name]
        _atomic_write(os.path.join(outdir, f"{name}.trace.csv"),
                      trace_to_csv(name, result))
        result.x.astype("<f8").tofile(os.path.join(outdir, f"{name}.x.f64"))
        sidecar = {"solver": name, "n": int(result.x.size),
                   "descriptor": inst.descriptor, "seed": inst.seed}
        _atomic_write(os.path.join(outdir, f"{name}.x.json"),
                      json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        rows_by_solver[name] = read_trace(
            os.path.join(outdir, f"{name}.trace.csv")
        )
    text = _write_summary(outdir, summarize_traces(rows_by_solver))
    print(text, end="")
    return 0


def cmd_report(args):
    if not args.traces:
        raise ConfigError("report needs at least one trace file")
    rows_by_solver = {}
    for path in args.traces:
        rows = read_trace(path)
        name = rows[0]["solver"] if rows else os.path.basename(path)
        rows_by_solver[name] = rows
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    text = _write_summary(outdir, summarize_traces(
        rows_by_solver, threshold=args.threshold))
    print(text, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="randkrylov",
        description="Randomized flexible Krylov experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write a problem bundle")
    p_gen.add_argument("--config", required=True)
    p_gen.add_argument("--out")
    p_gen.add_argument("--seed-override", type=int, default=None)
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run the configured solvers")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out")
    p_run.add_argument("--seed-override", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="summarize trace files")
    p_rep.add_argument("traces", nargs="*")
    p_rep.add_argument("--out")
    p_rep.add_argument("--threshold", type=float, default=None)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
