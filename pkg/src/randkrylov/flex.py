"""Flexible Krylov solvers on ell-truncated bases: sketch-and-solve,
sketch-to-precondition, and the exact (dense projected) reference scheme.

All three share the same basis-growth loop: each iteration rebuilds the
diagonal weights at the current iterate, expands the flexible factorization
with the inverse weights as preconditioner, and solves a small regularized
projected problem. They differ only in how that projected problem is posed
and solved:

* ``exact``: dense QR of the unsketched projected matrices.
* ``sketch_and_solve``: QR of the sketched matrices; the projected problem is
  itself sketched.
* ``sketch_to_precondition``: the unsketched projected problem is solved by
  right-preconditioned LSQR, with the preconditioner from the Cholesky factor
  of the sketched Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .krylov import FlexibleFactorization, lsqr_solve
from .irn import SolveResult, TraceRow, _objectives, _rel_error
from .operators import LinearOperator
from .regparam import LambdaPolicy, dp_select, optimal_select, wgcv_select
from .sketching import (
    apply_sketch,
    commute_diagonal,
    measure_distortion,
)
from .weights import WeightSpec, compute_weights, sketched_majorant_value


@dataclass
class ProjectedProblem:
    """Small triangular pair for fast lambda sweeps: the data-fit QR factor
    R1 with projected right-hand side beta (and out-of-range residual
    beta_perp), and the regularization QR factor R2."""

    R1: np.ndarray
    beta: np.ndarray
    beta_perp: float
    R2: np.ndarray
    k: int


def solve_projected_tikhonov(pp, lam):
    """Minimizer of |R1 y - beta|^2 + lam |R2 y|^2 via a stacked QR (never
    explicit normal equations)."""
    if lam < 0.0:
        raise ValueError("lambda must be non-negative")
    k = pp.k
    if lam == 0.0:
        stacked = pp.R1
        rhs = pp.beta
    else:
        stacked = np.vstack([pp.R1, np.sqrt(lam) * pp.R2])
        rhs = np.concatenate([pp.beta, np.zeros(k)])
    q, r = np.linalg.qr(stacked)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-14 * max(diag.max(), 1.0):
        if lam == 0.0:
            raise np.linalg.LinAlgError("singular projected problem")
        # shared null direction of R1 and R2
        raise np.linalg.LinAlgError("singular regularized pencil")
    return scipy.linalg.solve_triangular(r, q.T @ rhs, lower=False)


def check_monotonicity_condition(qhat_prev, qhat_curr, eps_k):
    """Sufficient-decrease test on the sketched functional: satisfied when
    (qhat_prev - qhat_curr)/qhat_curr >= 2*eps/(1-eps). Returns the flag and
    the margin (lhs - rhs)."""
    if not (0.0 <= eps_k < 1.0):
        raise ValueError("distortion must lie in [0, 1)")
    if qhat_curr < 0.0:
        raise ValueError("sketched functional must be non-negative")
    rhs = 2.0 * eps_k / (1.0 - eps_k)
    if qhat_curr == 0.0:
        return True, np.inf
    lhs = (qhat_prev - qhat_curr) / qhat_curr
    return lhs >= rhs, lhs - rhs


@dataclass(frozen=True)
class FlexSolverConfig:
    basis: str = "golub_kahan"  # "arnoldi" | "golub_kahan"
    mode: str = "irw"  # "none" | "hybrid" | "irw"
    scheme: str = "sketch_and_solve"  # | "sketch_to_precondition" | "exact"
    ell: int | None = 4
    k_max: int = 50
    weight: WeightSpec = WeightSpec()
    lambda_policy: LambdaPolicy = LambdaPolicy()
    inner_tol: float = 1e-10
    eps_refresh: int = 5
    distortion_trials: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.basis not in ("arnoldi", "golub_kahan"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.mode not in ("none", "hybrid", "irw"):
            raise ValueError(f"unknown regularization mode {self.mode!r}")
        if self.scheme not in ("sketch_and_solve", "sketch_to_precondition",
                               "exact"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


class _StackedProjected(LinearOperator):
    """[A Psi^{-1} Zbar; sqrt(lam) W Zbar] acting on projected coefficients.

    Zbar = None means the identity basis (post-breakdown classic-IRN phase).
    """

    kind = "stacked_projected"

    def __init__(self, A, psi_inv, Z, w, lam):
        k = A.ncols if Z is None else Z.shape[1]
        n = w.shape[0]
        nrows = A.nrows + (n if lam > 0.0 else 0)
        super().__init__(nrows, k)
        self.A, self.psi_inv, self.Z, self.w = A, psi_inv, Z, w
        self.lam = lam
        self.sqlam = np.sqrt(lam)

    def _basis_apply(self, y):
        return y if self.Z is None else self.Z @ y

    def _basis_adjoint(self, t):
        return t if self.Z is None else self.Z.T @ t

    def _apply(self, y):
        t = self._basis_apply(y)
        top = self.A.apply(t if self.psi_inv is None else self.psi_inv.apply(t))
        if self.lam == 0.0:
            return top
        return np.concatenate([top, self.sqlam * (self.w * t)])

    def _apply_adjoint(self, r):
        top = self.A.apply_adjoint(r[: self.A.nrows])
        if self.psi_inv is not None:
            top = self.psi_inv.apply_adjoint(top)
        out = self._basis_adjoint(top)
        if self.lam > 0.0:
            out = out + self.sqlam * self._basis_adjoint(
                self.w * r[self.A.nrows:]
            )
        return out


class _IncrementalQR:
    """Gram-Schmidt (with one reorthogonalization pass) column-appending QR."""

    def __init__(self, nrows):
        self.Q = np.empty((nrows, 0))
        self.R = np.empty((0, 0))

    def append(self, col):
        k = self.Q.shape[1]
        h = np.zeros(k)
        q = col.astype(np.float64, copy=True)
        for _ in range(2):
            proj = self.Q.T @ q
            h += proj
            q = q - self.Q @ proj
        rho = np.linalg.norm(q)
        newR = np.zeros((k + 1, k + 1))
        newR[:k, :k] = self.R
        newR[:k, k] = h
        newR[k, k] = rho
        qcol = q / rho if rho > 0 else q
        self.Q = np.hstack([self.Q, qcol[:, None]])
        self.R = newR


def _select_projected_lambda(policy, pp, config, b_norm, sketch_rows,
                             solution_map):
    """One lambda choice per iteration on the (possibly sketched) projected
    problem."""
    if policy.kind == "fixed":
        return policy.lam
    sv = np.linalg.svd(pp.R1, compute_uv=False)
    smax_sq = float(sv[0] ** 2) if sv.size else 1.0
    if policy.kind == "dp":
        def residual(lam):
            y = solve_projected_tikhonov(pp, lam)
            r = pp.R1 @ y - pp.beta
            return float(np.sqrt(r @ r + pp.beta_perp**2))

        target = policy.tau_lambda * policy.nl * b_norm
        return dp_select(residual, target, scale=smax_sq)
    if policy.kind in ("gcv", "wgcv"):
        omega = 1.0 if policy.kind == "gcv" else None
        return wgcv_select(pp, sketch_rows, k=pp.k, omega=omega)
    # optimal
    return optimal_select(
        lambda lam: solution_map(solve_projected_tikhonov(pp, lam)),
        policy.x_true,
        scale=smax_sq,
    )


def _distortion_pair(S1, S2, AZ, b, WZ, config, it):
    """Measured distortion of S1 over span([A Psi^{-1} Zbar, b]) and of S2
    over span(W Zbar); returns the maximum."""
    basis1 = np.hstack([AZ, b[:, None]])
    eps1 = measure_distortion(S1, basis1, config.distortion_trials,
                              seed=config.seed + 1000 + it)
    eps2 = 0.0
    if WZ is not None and WZ.size:
        eps2 = measure_distortion(S2, WZ, config.distortion_trials,
                                  seed=config.seed + 2000 + it)
    return max(eps1, eps2)


def sns_flex_solve(A, psi, b, config, S1, S2, x_true=None):
    """Sketch-and-solve flexible Krylov iteration (Arnoldi or Golub-Kahan
    basis), with the regularization parameter chosen on the sketched
    projected problem."""
    if config.scheme != "sketch_and_solve":
        raise ValueError("config.scheme must be 'sketch_and_solve'")
    return _flex_loop(A, psi, b, config, S1, S2, x_true)


def exact_flex_solve(A, psi, b, config, x_true=None):
    """Reference scheme: identical basis growth, dense QR of the unsketched
    projected matrices."""
    if config.scheme != "exact":
        raise ValueError("config.scheme must be 'exact'")
    return _flex_loop(A, psi, b, config, None, None, x_true)


def _flex_loop(A, psi, b, config, S1, S2, x_true):
    b = np.asarray(b, dtype=np.float64)
    n = A.ncols
    m = A.nrows
    psi_inv = None if psi is None or psi.kind == "identity" else psi.inverse()
    weight = config.weight
    policy = config.lambda_policy
    sketched = S1 is not None
    b_norm = float(np.linalg.norm(b))

    fact = FlexibleFactorization(config.basis, A, psi_inv, b, ell=config.ell)
    qr1 = _IncrementalQR(S1.s if sketched else m)
    s1b = apply_sketch(S1, b) if sketched else b
    G2raw = np.empty((S2.s if sketched else 0, 0))  # gathered rows of Zbar

    x = np.zeros(n)
    iterates, trace = [], []
    eps_hat = float("nan")
    qhat_prev_x = None
    for it in range(1, config.k_max + 1):
        z_prev = x if psi is None or psi.kind == "identity" else psi.apply(x)
        w = compute_weights(z_prev, weight)

        if not fact.breakdown and fact.k < min(m, n):
            col = fact.expand(1.0 / w)
            if col is not None:
                qr1.append(apply_sketch(S1, col) if sketched else col)
                if sketched:
                    G2raw = np.hstack(
                        [G2raw, fact.Z[:, -1][S2.selected_rows][:, None]]
                    )
        k = fact.k
        Z = fact.Z

        R1 = qr1.R
        beta = qr1.Q.T @ s1b
        beta_perp = float(np.linalg.norm(s1b - qr1.Q @ beta))

        WZ = None
        if config.mode == "irw":
            if sketched:
                wbar = commute_diagonal(S2, w)
                M2 = (wbar[:, None] * G2raw) * S2.scales[:, None]
            else:
                M2 = w[:, None] * Z
            WZ = w[:, None] * Z
            R2 = np.linalg.qr(M2, mode="r")
        else:
            R2 = np.eye(k)

        pp = ProjectedProblem(R1, beta, beta_perp, R2, k)

        def solution_map(y):
            t = Z @ y
            return t if psi_inv is None else psi_inv.apply(t)

        if config.mode == "none":
            lam = 0.0
        else:
            lam = _select_projected_lambda(
                policy, pp, config, b_norm,
                S1.s if sketched else m, solution_map,
            )
        try:
            y = solve_projected_tikhonov(pp, lam)
        except np.linalg.LinAlgError:
            # rank-deficient R2 with lam ~ 0: apply the floor and retry
            y = solve_projected_tikhonov(pp, max(lam, 1e-14))
        x_new = solution_map(y)

        mono = None
        qhat_curr = float("nan")
        if sketched:
            if (it - 1) % config.eps_refresh == 0:
                eps_hat = _distortion_pair(S1, S2, fact.AZ, b, WZ, config, it)
            qhat_curr = sketched_majorant_value(S1, S2, A, b, w, x_new, lam)
            qhat_prev_x = sketched_majorant_value(S1, S2, A, b, w, x, lam)
            if eps_hat < 1.0:
                mono, _margin = check_monotonicity_condition(
                    qhat_prev_x, qhat_curr, eps_hat
                )
        x = x_new
        obj_mm, obj_lit = _objectives(A, b, x, weight, lam, psi)
        iterates.append(x.copy())
        trace.append(
            TraceRow(
                outer=it,
                cum_inner=it,
                rel_error=_rel_error(x, x_true),
                objective_mm=obj_mm,
                objective_literal=obj_lit,
                lam=lam,
                eps_hat=eps_hat,
                mono_satisfied=mono,
                breakdown=fact.breakdown,
            )
        )
    return SolveResult(iterates, trace)


def s2p_flex_solve(A, psi, b, config, S1, S2, x_true=None):
    """Sketch-to-precondition flexible Krylov iteration: the unsketched
    projected problem is solved by LSQR, right-preconditioned with the
    Cholesky factor of the sketched k-by-k Gram matrix."""
    if config.scheme != "sketch_to_precondition":
        raise ValueError("config.scheme must be 'sketch_to_precondition'")
    b = np.asarray(b, dtype=np.float64)
    n, m = A.ncols, A.nrows
    psi_inv = None if psi is None or psi.kind == "identity" else psi.inverse()
    weight = config.weight
    policy = config.lambda_policy
    if policy.kind in ("gcv", "wgcv"):
        raise ValueError("sketch-to-precondition supports fixed, dp and "
                         "optimal policies only")
    b_norm = float(np.linalg.norm(b))

    fact = FlexibleFactorization(config.basis, A, psi_inv, b, ell=config.ell)
    Y = np.empty((S1.s, 0))
    C = np.empty((0, 0))
    G2raw = np.empty((S2.s, 0))
    identity_phase = False
    C_full = None

    x = np.zeros(n)
    iterates, trace = [], []
    cum_inner = 0
    for it in range(1, config.k_max + 1):
        z_prev = x if psi is None or psi.kind == "identity" else psi.apply(x)
        w = compute_weights(z_prev, weight)

        if not identity_phase and not fact.breakdown and fact.k < min(m, n):
            col = fact.expand(1.0 / w)
            if col is not None:
                ynew = apply_sketch(S1, col)
                # bordered Gram update
                cross = Y.T @ ynew
                k0 = C.shape[0]
                Cn = np.empty((k0 + 1, k0 + 1))
                Cn[:k0, :k0] = C
                Cn[:k0, k0] = cross
                Cn[k0, :k0] = cross
                Cn[k0, k0] = ynew @ ynew
                C = Cn
                Y = np.hstack([Y, ynew[:, None]])
                G2raw = np.hstack(
                    [G2raw, fact.Z[:, -1][S2.selected_rows][:, None]]
                )
        elif not identity_phase and (fact.breakdown or fact.k >= min(m, n)):
            identity_phase = True
            C_full = _sketched_gram_full(A, psi_inv, S1)

        Z = None if identity_phase else fact.Z
        k = n if identity_phase else fact.k

        # Gram matrices of the sketched projected pair
        if identity_phase:
            Ck = C_full
            wbar = commute_diagonal(S2, w)
            dvals = np.zeros(n)
            np.add.at(dvals, S2.selected_rows, (S2.scales * wbar) ** 2)
            Dk = np.diag(dvals)
        else:
            Ck = C
            if config.mode == "irw":
                wbar = commute_diagonal(S2, w)
                M2 = (wbar[:, None] * G2raw) * S2.scales[:, None]
                Dk = M2.T @ M2
            elif config.mode == "hybrid":
                Dk = np.eye(k)
            else:
                Dk = np.zeros((k, k))

        lam = _select_s2p_lambda(policy, A, psi_inv, fact, Z, w, b, b_norm,
                                 config, identity_phase)

        R = _chol_with_jitter(Ck + lam * Dk, lam)
        right_precond = (
            lambda v, R=R: scipy.linalg.solve_triangular(R, v, lower=False),
            lambda v, R=R: scipy.linalg.solve_triangular(R, v, lower=False,
                                                         trans="T"),
        )
        op = _StackedProjected(A, psi_inv, Z, w, lam)
        rhs = np.concatenate([b, np.zeros(n)]) if lam > 0.0 else b
        res = lsqr_solve(op, rhs, lam=0.0, right_precond=right_precond,
                         tol=config.inner_tol, maxit=max(4 * k, 8))
        y = res.x
        t = y if Z is None else Z @ y
        x = t if psi_inv is None else psi_inv.apply(t)
        cum_inner += res.n_iter

        obj_mm, obj_lit = _objectives(A, b, x, weight, lam, psi)
        iterates.append(x.copy())
        trace.append(
            TraceRow(
                outer=it,
                cum_inner=cum_inner,
                rel_error=_rel_error(x, x_true),
                objective_mm=obj_mm,
                objective_literal=obj_lit,
                lam=lam,
                breakdown=fact.breakdown,
                stagnated=res.stagnated,
            )
        )
    return SolveResult(iterates, trace)


def _sketched_gram_full(A, psi_inv, S1):
    """(S1 A Psi^{-1})^T (S1 A Psi^{-1}) for the identity-basis phase."""
    rows = []
    m = A.nrows
    for j, scale in zip(S1.selected_rows, S1.scales):
        e = np.zeros(m)
        e[j] = scale
        r = A.apply_adjoint(e)
        if psi_inv is not None:
            r = psi_inv.apply_adjoint(r)
        rows.append(r)
    Y0 = np.stack(rows, axis=0)
    return Y0.T @ Y0


def _chol_with_jitter(M, lam):
    try:
        return scipy.linalg.cholesky(M, lower=False)
    except np.linalg.LinAlgError:
        jitter = max(lam, 1.0) * 1e-8 * max(np.trace(M), 1.0)
        try:
            return scipy.linalg.cholesky(
                M + jitter * np.eye(M.shape[0]), lower=False
            )
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(
                "projected Gram matrix is numerically indefinite"
            ) from exc


def _select_s2p_lambda(policy, A, psi_inv, fact, Z, w, b, b_norm, config,
                       identity_phase):
    """Lambda for the sketch-to-precondition step, using the exact projected
    Gram matrices (cheap at desk scale) for the dp and optimal rules."""
    if config.mode == "none":
        return 0.0
    if policy.kind == "fixed":
        return policy.lam
    if identity_phase or Z is None:
        AZ = (A.matrix if hasattr(A, "matrix") else A.materialize())
        if psi_inv is not None:
            AZ = AZ @ psi_inv.materialize()
        WZ = np.diag(w)
        Zb = None
    else:
        AZ = fact.AZ
        WZ = w[:, None] * Z
        Zb = Z
    G_A = AZ.T @ AZ
    G_W = WZ.T @ WZ if config.mode == "irw" else np.eye(AZ.shape[1])
    c_A = AZ.T @ b
    bb = float(b @ b)

    def y_of(lam):
        return np.linalg.solve(G_A + lam * G_W, c_A)

    if policy.kind == "dp":
        def residual(lam):
            y = y_of(lam)
            return float(np.sqrt(max(y @ (G_A @ y) - 2.0 * (y @ c_A) + bb,
                                     0.0)))

        target = policy.tau_lambda * policy.nl * b_norm
        smax = float(np.linalg.norm(G_A, 2))
        return dp_select(residual, target, scale=smax)
    # optimal
    def solution_map(lam):
        y = y_of(lam)
        t = y if Zb is None else Zb @ y
        return t if psi_inv is None else psi_inv.apply(t)

    smax = float(np.linalg.norm(G_A, 2))
    return optimal_select(solution_map, policy.x_true, scale=smax)
