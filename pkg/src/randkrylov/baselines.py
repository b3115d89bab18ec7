"""Plain proximal-gradient (FISTA) baseline for the l1-regularized problem
min |Ax-b|^2 + 2*lam*|x|_1, with fixed step 1/|A|_2^2."""

from __future__ import annotations

import numpy as np

from .irn import SolveResult, TraceRow, _objectives, _rel_error
from .weights import WeightSpec


def fista_solve(A, b, lam, n_iter=200, weight=None, x_true=None):
    b = np.asarray(b, dtype=np.float64)
    if weight is None:
        weight = WeightSpec(p=1.0, tau=1e-10)
    L = A.norm_estimate() ** 2
    if L == 0.0:
        raise ValueError("zero operator")
    step = 1.0 / (2.0 * L)
    thresh = 2.0 * lam * step

    x = np.zeros(A.ncols)
    v = x.copy()
    t = 1.0
    iterates, trace = [], []
    for it in range(1, n_iter + 1):
        grad = 2.0 * A.apply_adjoint(A.apply(v) - b)
        u = v - step * grad
        x_new = np.sign(u) * np.maximum(np.abs(u) - thresh, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        v = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        obj_mm, obj_lit = _objectives(A, b, x, weight, lam, None)
        iterates.append(x.copy())
        trace.append(
            TraceRow(
                outer=it,
                cum_inner=it,
                rel_error=_rel_error(x, x_true),
                objective_mm=obj_mm,
                objective_literal=obj_lit,
                lam=lam,
            )
        )
    return SolveResult(iterates, trace)
