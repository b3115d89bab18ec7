"""Iteratively reweighted norm (majorization-minimization) outer loops, with
plain LSQR inner solves or the randomized partly-exact-sketch preconditioned
variant.

Each outer step rebuilds the diagonal weights at the current iterate and
solves the standard-form reweighted least-squares subproblem in the scaled
variable s = W_k Psi x, with cold inner restarts (s0 = 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .krylov import lsqr_solve
from .operators import CompositeOperator, DiagonalOperator
from .sketching import apply_sketch
from .weights import ObjectiveSpec, WeightSpec, compute_weights


from .regparam import LambdaPolicy


@dataclass(frozen=True)
class IRNConfig:
    weight: WeightSpec = WeightSpec()
    outer_max: int = 20
    inner_tol: float = 1e-8
    inner_max: int | None = None  # defaults to 2n
    lambda_policy: LambdaPolicy = LambdaPolicy()
    seed: int = 0

    def __post_init__(self):
        if self.outer_max < 1:
            raise ValueError("need at least one outer iteration")


@dataclass
class TraceRow:
    outer: int
    cum_inner: int
    rel_error: float  # nan when x_true unknown
    objective_mm: float
    objective_literal: float
    lam: float
    eps_hat: float = float("nan")
    mono_satisfied: bool | None = None
    breakdown: bool = False
    stagnated: bool = False


@dataclass
class SolveResult:
    iterates: list
    trace: list

    @property
    def x(self):
        return self.iterates[-1]

    def column(self, name):
        return [getattr(row, name) for row in self.trace]


def _rel_error(x, x_true):
    if x_true is None:
        return float("nan")
    return float(np.linalg.norm(x - x_true) / np.linalg.norm(x_true))


def _objectives(A, b, x, weight, lam, psi):
    mm = ObjectiveSpec(weight, lam, psi, "mm_consistent")
    lit = ObjectiveSpec(weight, lam, psi, "paper_literal")
    from .weights import objective_value

    return objective_value(A, b, x, mm), objective_value(A, b, x, lit)


def _dense_system_matrix(A, psi_inv, w_inv):
    """Materialized A Psi^{-1} W^{-1}; desk-scale only, used by the dp/gcv/
    optimal policies which need the residual as a cheap function of lambda."""
    M = A.matrix if hasattr(A, "matrix") else A.materialize()
    if psi_inv is not None:
        M = M @ psi_inv.materialize()
    return M * w_inv[None, :]


def _select_lambda(policy, A, psi_inv, w_inv, b, x_true):
    """One lambda update per outer iteration, via an SVD of the current
    reweighted system matrix (desk scale)."""
    from . import regparam

    if policy.kind == "fixed":
        return policy.lam
    if policy.kind == "wgcv":
        raise ValueError("wgcv is a projected-problem policy; IRN supports "
                         "fixed, dp, gcv and optimal")
    M = _dense_system_matrix(A, psi_inv, w_inv)
    U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    beta = U.T @ b
    perp2 = max(float(b @ b - beta @ beta), 0.0)

    if policy.kind == "dp":
        def residual(lam):
            filt = lam / (sv**2 + lam) if lam > 0 else np.where(sv > 0, 0.0, 1.0)
            return float(np.sqrt(np.sum((filt * beta) ** 2) + perp2))

        target = policy.tau_lambda * policy.nl * float(np.linalg.norm(b))
        return regparam.dp_select(residual, target, scale=float(sv[0] ** 2))
    if policy.kind == "gcv":
        return regparam.gcv_full_select(M, b)
    # optimal
    def solution_map(lam):
        y = Vt.T @ (sv / (sv**2 + lam) * beta)
        x = w_inv * y
        return x if psi_inv is None else psi_inv.apply(x)

    return regparam.optimal_select(solution_map, x_true)


def irn_solve(A, psi, b, config, x_true=None):
    """Majorization-minimization with unpreconditioned LSQR inner solves."""
    return _irn_loop(A, psi, b, config, x_true, sketch=None)


def build_partly_exact_preconditioner(C0, w, lam):
    """Upper-triangular R with R^T R = W^{-1} C0 W^{-1} + lam I.

    C0 is the Gram matrix of the sketched system matrix; W = diag(w) holds
    the current weights. Raises on Cholesky failure with advice to raise lam.
    """
    if lam <= 0.0:
        raise ValueError("preconditioner needs lambda > 0")
    w = np.asarray(w, dtype=np.float64)
    w_inv = 1.0 / w
    C = C0 * np.outer(w_inv, w_inv)
    C[np.diag_indices_from(C)] += lam
    try:
        return scipy.linalg.cholesky(C, lower=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "Cholesky of the sketched Gram matrix failed; increase lambda "
            "above the rounding floor of the sketched system norm"
        ) from exc


def irn_s2p_solve(A, psi, b, config, sketch, x_true=None):
    """IRN with every inner LSQR right-preconditioned by the Cholesky factor
    of the sketched Gram matrix; the sketch of A Psi^{-1} is computed once."""
    return _irn_loop(A, psi, b, config, x_true, sketch=sketch)


def _irn_loop(A, psi, b, config, x_true, sketch):
    b = np.asarray(b, dtype=np.float64)
    n = A.ncols
    psi_inv = None if psi is None or psi.kind == "identity" else psi.inverse()
    inner_max = config.inner_max if config.inner_max is not None else 2 * n
    policy = config.lambda_policy
    weight = config.weight

    C0 = None
    if sketch is not None:
        # Y0 = S A Psi^{-1}, materialized column-wise through the sketch.
        M = A.matrix if hasattr(A, "matrix") else A.materialize()
        if psi_inv is not None:
            M = M @ psi_inv.materialize()
        Y0 = apply_sketch(sketch, M)
        C0 = Y0.T @ Y0

    x = np.zeros(n)
    iterates = []
    trace = []
    cum_inner = 0
    for k in range(1, config.outer_max + 1):
        z = x if psi is None or psi.kind == "identity" else psi.apply(x)
        w = compute_weights(z, weight)
        w_inv = 1.0 / w
        lam = _select_lambda(policy, A, psi_inv, w_inv, b, x_true)

        ops = [A]
        if psi_inv is not None:
            ops.append(psi_inv)
        ops.append(DiagonalOperator(w_inv))
        op_k = CompositeOperator(ops)

        right_precond = None
        if sketch is not None:
            R = build_partly_exact_preconditioner(C0, w, lam)
            right_precond = (
                lambda v, R=R: scipy.linalg.solve_triangular(R, v, lower=False),
                lambda v, R=R: scipy.linalg.solve_triangular(
                    R, v, lower=False, trans="T"
                ),
            )

        res = lsqr_solve(
            op_k, b, lam=lam, right_precond=right_precond,
            tol=config.inner_tol, maxit=inner_max,
        )
        s = res.x
        x = w_inv * s
        if psi_inv is not None:
            x = psi_inv.apply(x)
        cum_inner += res.n_iter
        obj_mm, obj_lit = _objectives(A, b, x, weight, lam, psi)
        iterates.append(x.copy())
        trace.append(
            TraceRow(
                outer=k,
                cum_inner=cum_inner,
                rel_error=_rel_error(x, x_true),
                objective_mm=obj_mm,
                objective_literal=obj_lit,
                lam=lam,
                stagnated=res.stagnated,
            )
        )
    return SolveResult(iterates, trace)
