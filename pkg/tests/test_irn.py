import numpy as np
import pytest

from randkrylov.irn import (
    IRNConfig,
    build_partly_exact_preconditioner,
    irn_s2p_solve,
    irn_solve,
)
from randkrylov.problems import add_noise, gen_subset_selection
from randkrylov.regparam import LambdaPolicy
from randkrylov.sketching import (
    apply_sketch,
    build_leverage_sketch,
    estimate_leverage_scores,
    identity_sketch,
)
from randkrylov.weights import WeightSpec


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def _instance(m=60, n=20, seed=1, nl=0.02):
    inst = gen_subset_selection(m, n, bern_p=0.3, seed=seed)
    return add_noise(inst, nl, seed + 100)


def test_irn_p2_collapses_to_tikhonov():
    inst = _instance()
    lam = 0.8
    cfg = IRNConfig(weight=WeightSpec(p=2.0, tau=1e-10), outer_max=3,
                    inner_tol=1e-14,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=lam))
    res = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    M = inst.A.matrix
    ref = np.linalg.solve(M.T @ M + lam * np.eye(M.shape[1]), M.T @ inst.b)
    for x in res.iterates:
        np.testing.assert_allclose(x, ref, rtol=1e-8, atol=1e-10)


def test_irn_objective_monotone_fixed_lambda():
    inst = _instance(m=80, n=30)
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-6), outer_max=12,
                    inner_tol=1e-12,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=1.0))
    res = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    F = res.column("objective_mm")
    slack = 1e-8 * F[0]
    assert all(b <= a + slack for a, b in zip(F, F[1:]))


def test_irn_trace_invariants():
    inst = _instance()
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=4,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=0.5))
    res = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    assert res.column("outer") == [1, 2, 3, 4]
    inner = res.column("cum_inner")
    assert all(b >= a for a, b in zip(inner, inner[1:]))
    assert np.all(np.isfinite(res.column("rel_error")))
    assert res.x is res.iterates[-1]


def test_preconditioner_factor_identity():
    # [TRIVIAL] R^T R = W^{-1} C0 W^{-1} + lam I
    rng = _rng(2)
    Y = rng.standard_normal((50, 8))
    C0 = Y.T @ Y
    w = rng.random(8) + 0.5
    lam = 0.3
    R = build_partly_exact_preconditioner(C0, w, lam)
    expect = C0 * np.outer(1 / w, 1 / w) + lam * np.eye(8)
    np.testing.assert_allclose(R.T @ R, expect, rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(np.tril(R, -1))) == 0.0
    with pytest.raises(ValueError):
        build_partly_exact_preconditioner(C0, w, 0.0)


def test_preconditioner_drives_condition_down():
    rng = _rng(3)
    M = rng.standard_normal((400, 30)) * np.geomspace(1, 1e-3, 30)[None, :]
    lam = 1e-2
    p = estimate_leverage_scores(M)
    S = build_leverage_sketch(p, 120, seed=5)
    Y = apply_sketch(S, M)
    R = build_partly_exact_preconditioner(Y.T @ Y, np.ones(30), lam)
    stacked = np.vstack([M, np.sqrt(lam) * np.eye(30)])
    cond = np.linalg.cond(stacked @ np.linalg.inv(R))
    assert cond < 10.0
    assert cond < np.linalg.cond(stacked)


def test_irn_s2p_matches_plain_irn():
    inst = _instance(m=100, n=25)
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=5,
                    inner_tol=1e-12,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=1.0))
    plain = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    S = identity_sketch(100)
    prec = irn_s2p_solve(inst.A, inst.psi, inst.b, cfg, S, inst.x_true)
    for xp, xs in zip(plain.iterates, prec.iterates):
        np.testing.assert_allclose(xs, xp, rtol=1e-6, atol=1e-8)


def test_irn_s2p_saves_inner_iterations():
    inst = _instance(m=150, n=40)
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=6,
                    inner_tol=1e-10,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=1.0))
    plain = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    p = estimate_leverage_scores(inst.A.matrix)
    S = build_leverage_sketch(p, 160, seed=7)
    prec = irn_s2p_solve(inst.A, inst.psi, inst.b, cfg, S, inst.x_true)
    assert prec.trace[-1].cum_inner < plain.trace[-1].cum_inner


def test_irn_dp_policy_meets_discrepancy():
    inst = _instance(m=120, n=30, nl=0.05)
    pol = LambdaPolicy(kind="dp", nl=0.05, tau_lambda=1.01)
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=5,
                    inner_tol=1e-12, lambda_policy=pol)
    res = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    r = inst.A.apply(res.x) - inst.b
    target = 1.01 * 0.05 * np.linalg.norm(inst.b)
    assert np.linalg.norm(r) <= 1.5 * target


def test_irn_optimal_policy_beats_fixed_guess():
    inst = _instance(m=120, n=30, nl=0.05)
    pol = LambdaPolicy(kind="optimal", x_true=inst.x_true)
    cfg = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=5,
                    inner_tol=1e-12, lambda_policy=pol)
    res = irn_solve(inst.A, inst.psi, inst.b, cfg, inst.x_true)
    bad = IRNConfig(weight=WeightSpec(p=1.0, tau=1e-4), outer_max=5,
                    inner_tol=1e-12,
                    lambda_policy=LambdaPolicy(kind="fixed", lam=1e3))
    res_bad = irn_solve(inst.A, inst.psi, inst.b, bad, inst.x_true)
    assert res.trace[-1].rel_error <= res_bad.trace[-1].rel_error


def test_irn_rejects_wgcv():
    inst = _instance()
    cfg = IRNConfig(lambda_policy=LambdaPolicy(kind="wgcv"))
    with pytest.raises(ValueError):
        irn_solve(inst.A, inst.psi, inst.b, cfg)


def test_irn_config_validation():
    with pytest.raises(ValueError):
        IRNConfig(outer_max=0)
