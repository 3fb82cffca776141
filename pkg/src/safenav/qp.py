"""Exact dense solver for the velocity-filter QP.

Decision vector ``z = (v_x, v_y, d1, d2)``; objective
``0.5*|v - v_des|^2 + 0.5*lam*(d1^2 + d2^2)``; linear rows ``G z <= h``; an
optional ball ``|v| <= v_max``.

Linear rows are handled by the Goldfarb-Idnani dual active-set method, which
starts from the unconstrained minimum and only ever adds violated rows, so
infeasibility is detected exactly. The ball is approximated from outside by
tangent cuts; once the cuts have converged the ball-active KKT system is
polished with a few Newton steps so the returned point satisfies the true
(nonlinear) optimality conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_VARS = 4
MAX_CUTS = 100
MAX_PIVOTS = 100


@dataclass
class QpProblem:
    v_des: np.ndarray
    lam: float
    G: np.ndarray = field(default_factory=lambda: np.zeros((0, N_VARS)))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v_max: float | None = None
    labels: list[str] = field(default_factory=list)
    hard: list[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.v_des = np.asarray(self.v_des, dtype=float).reshape(2)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, N_VARS)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.lam <= 0:
            raise ValueError("slack penalty must be positive")
        if self.G.shape[0] != self.h.shape[0]:
            raise ValueError("row count mismatch between G and h")
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.h))):
            raise ValueError("constraint rows must be finite")
        if not self.labels:
            self.labels = [f"row{i}" for i in range(len(self.h))]
        if not self.hard:
            self.hard = [False] * len(self.h)

    def add_le(self, coeffs, rhs: float, label: str, hard: bool = False) -> None:
        """Append ``coeffs . z <= rhs``."""
        self.G = np.vstack([self.G, np.asarray(coeffs, dtype=float).reshape(1, N_VARS)])
        self.h = np.append(self.h, float(rhs))
        self.labels.append(label)
        self.hard.append(hard)

    def add_ge(self, coeffs, rhs: float, label: str, hard: bool = False) -> None:
        """Append ``coeffs . z >= rhs``."""
        self.add_le(-np.asarray(coeffs, dtype=float), -float(rhs), label, hard)

    @property
    def hessian_diag(self) -> np.ndarray:
        return np.array([1.0, 1.0, self.lam, self.lam])

    @property
    def linear_term(self) -> np.ndarray:
        return np.array([self.v_des[0], self.v_des[1], 0.0, 0.0])

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        dv = z[:2] - self.v_des
        return 0.5 * float(dv @ dv) + 0.5 * self.lam * float(z[2] ** 2 + z[3] ** 2)

    def violation(self, z) -> float:
        """Largest constraint violation at ``z`` (0 when feasible)."""
        z = np.asarray(z, dtype=float)
        worst = 0.0
        if len(self.h):
            worst = max(worst, float(np.max(self.G @ z - self.h)))
        if self.v_max is not None:
            worst = max(worst, float(np.hypot(z[0], z[1]) - self.v_max))
        return worst


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str  # optimal | infeasible | max_iter
    active: list[int]
    iterations: int
    ball_active: bool = False
    multipliers: dict[int, float] = field(default_factory=dict)
    ball_multiplier: float = 0.0
    kkt: dict[str, float] = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return self.z[:2]


class _Infeasible(Exception):
    pass


class _PivotLimit(Exception):
    pass


def _dual_active_set(u0: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float, budget: list[int]):
    """Project ``u0`` onto ``{u : A u >= b}``; returns (u, active indices, multipliers)."""
    n = u0.shape[0]
    u = u0.copy()
    active: list[int] = []
    mult: list[float] = []
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    pivots = 0
    while True:
        slack = (A @ u - b) / scale
        if active:
            slack[active] = np.inf
        p = int(np.argmin(slack)) if len(slack) else -1
        if p < 0 or slack[p] >= -tol:
            return u, active, np.array(mult)
        mult_plus = 0.0
        while True:
            budget[0] += 1
            pivots += 1
            if pivots > MAX_PIVOTS:
                raise _PivotLimit
            a_p = A[p]
            if active:
                N = A[active].T  # (n, q)
                NtN = N.T @ N
                r = np.linalg.solve(NtN, N.T @ a_p)
                z = a_p - N @ r
            else:
                r = np.zeros(0)
                z = a_p.copy()
            t1, k = np.inf, -1
            for j, rj in enumerate(r):
                if rj > 1e-14:
                    ratio = mult[j] / rj
                    if ratio < t1:
                        t1, k = ratio, j
            zz = float(z @ a_p)
            t2 = -float(a_p @ u - b[p]) / zz if zz > 1e-10 * float(a_p @ a_p) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise _Infeasible
            if np.isfinite(t2):
                u = u + t * z
            mult = [m - t * rj for m, rj in zip(mult, r)]
            mult_plus += t
            if t == t2:
                active.append(p)
                mult.append(mult_plus)
                break
            del active[k]
            del mult[k]
    # unreachable


def _solve_linear(problem: QpProblem, G: np.ndarray, h: np.ndarray, tol: float, budget: list[int],
                  warm: list[int] | None):
    d = np.sqrt(problem.hessian_diag)
    u0 = problem.linear_term / d
    # G z <= h  <=>  (-G / d) u >= -h
    A = -G / d
    b = -h
    if warm:
        res = _try_warm(u0, A, b, warm, tol)
        if res is not None:
            u, act, mult = res
            return u / d, act, mult
    u, act, mult = _dual_active_set(u0, A, b, tol, budget)
    return u / d, act, mult


def _try_warm(u0, A, b, warm, tol):
    """Accept a previous active set if it yields a KKT point outright."""
    idx = [i for i in warm if i < len(b)]
    if not idx:
        return None
    N = A[idx].T
    try:
        NtN = N.T @ N
        # u = u0 + N mu, N^T u = b  =>  NtN mu = b - N^T u0
        mu = np.linalg.solve(NtN, b[idx] - N.T @ u0)
    except np.linalg.LinAlgError:
        return None
    if np.linalg.cond(NtN) > 1e12 or np.any(mu < -tol):
        return None
    u = u0 + N @ mu
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    if np.any((A @ u - b) / scale < -tol):
        return None
    return u, list(idx), mu


def _polish_ball(problem: QpProblem, G, h, z, active, v_max, tol):
    """Newton steps on the KKT system with the ball as an equality."""
    H = problem.hessian_diag
    c = problem.linear_term
    Ga = G[active] if active else np.zeros((0, N_VARS))
    q = Ga.shape[0]
    grad_ball = np.array([z[0], z[1], 0.0, 0.0])
    M = np.column_stack([Ga.T, grad_ball]) if q else grad_ball[:, None]
    rhs = -(H * z - c)
    mu, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    mu_lin, mu_b = mu[:q], float(mu[q])
    for _ in range(20):
        gb = np.array([z[0], z[1], 0.0, 0.0])
        r_stat = H * z - c + Ga.T @ mu_lin + mu_b * gb
        r_lin = Ga @ z - h[active] if q else np.zeros(0)
        r_ball = 0.5 * (z[0] ** 2 + z[1] ** 2 - v_max**2)
        res = np.concatenate([r_stat, r_lin, [r_ball]])
        if np.max(np.abs(res)) < 1e-15 * max(1.0, v_max**2):
            break
        K = np.zeros((N_VARS + q + 1, N_VARS + q + 1))
        K[:N_VARS, :N_VARS] = np.diag(H + mu_b * np.array([1.0, 1.0, 0.0, 0.0]))
        K[:N_VARS, N_VARS:N_VARS + q] = Ga.T
        K[:N_VARS, -1] = gb
        K[N_VARS:N_VARS + q, :N_VARS] = Ga
        K[-1, :N_VARS] = gb
        try:
            step = np.linalg.solve(K, -res)
        except np.linalg.LinAlgError:
            return None
        z = z + step[:N_VARS]
        mu_lin = mu_lin + step[N_VARS:N_VARS + q]
        mu_b += float(step[-1])
    if mu_b < -tol or np.any(mu_lin < -tol):
        return None
    return z, mu_lin, mu_b


def kkt_residuals(problem: QpProblem, z, active, mult, ball_mult: float) -> dict[str, float]:
    G, h = problem.G, problem.h
    H, c = problem.hessian_diag, problem.linear_term
    grad = H * z - c
    for i, m in zip(active, mult):
        grad = grad + m * G[i]
    if ball_mult:
        nv = float(np.hypot(z[0], z[1]))
        grad = grad + ball_mult * np.array([z[0], z[1], 0.0, 0.0]) / max(nv, 1e-300)
    primal = problem.violation(z)
    # rows carrying a positive multiplier must hold with equality
    comp = 0.0
    for i, m in zip(active, mult):
        if m > 0.0:
            comp = max(comp, abs(float(G[i] @ z - h[i])))
    if ball_mult > 0.0 and problem.v_max is not None:
        comp = max(comp, abs(float(np.hypot(z[0], z[1]) - problem.v_max)))
    dual = min([0.0] + [float(m) for m in mult] + [ball_mult])
    return {"stationarity": float(np.max(np.abs(grad))), "primal": max(primal, 0.0),
            "complementarity": float(comp), "dual": -dual}


def solve(problem: QpProblem, tol: float = 1e-8, warm_start: list[int] | None = None) -> QpSolution:
    """Minimise the filter objective subject to the rows and the speed ball."""
    m = len(problem.h)
    G, h = problem.G.copy(), problem.h.copy()
    budget = [0]
    cuts = 0
    status = "optimal"
    try:
        z, act, mult = _solve_linear(problem, G, h, 1e-12, budget, warm_start)
        if problem.v_max is not None:
            v_max = problem.v_max
            while np.hypot(z[0], z[1]) > v_max * (1.0 + tol):
                if cuts >= MAX_CUTS:
                    raise _PivotLimit
                direction = z[:2] / np.hypot(z[0], z[1])
                G = np.vstack([G, [direction[0], direction[1], 0.0, 0.0]])
                h = np.append(h, v_max)
                cuts += 1
                z, act, mult = _solve_linear(problem, G, h, 1e-12, budget, None)
    except _Infeasible:
        return QpSolution(np.full(N_VARS, np.nan), np.inf, "infeasible", [], budget[0] + cuts)
    except _PivotLimit:
        return QpSolution(np.full(N_VARS, np.nan), np.inf, "max_iter", [], budget[0] + cuts)

    lin_active = [i for i in act if i < m]
    lin_mult = [float(mu) for i, mu in zip(act, mult) if i < m]
    cut_mult = sum(float(mu) for i, mu in zip(act, mult) if i >= m)
    ball_active = cut_mult > 0.0
    ball_mult = 0.0
    if ball_active:
        # Lagrange multipliers live in scaled space: lambda_z = lambda_u, rows were divided by d.
        polished = _polish_ball(problem, problem.G, problem.h, z, lin_active, problem.v_max, tol)
        if polished is not None:
            z, mu_lin, mu_b = polished
            lin_mult = [float(x) for x in mu_lin]
            # ball gradient used was v (unnormalised); convert to unit-normal multiplier
            ball_mult = float(mu_b) * float(np.hypot(z[0], z[1]))
        else:
            ball_mult = cut_mult
    kkt = kkt_residuals(problem, z, lin_active, lin_mult, ball_mult)
    scale = max(1.0, float(np.abs(problem.linear_term).max()),
                float(np.abs(problem.h).max()) if m else 0.0)
    if max(kkt.values()) > tol * scale:
        status = "max_iter"
    order = sorted(range(len(lin_active)), key=lambda k: lin_active[k])
    return QpSolution(
        z=z,
        objective=problem.objective(z),
        status=status,
        active=[lin_active[k] for k in order],
        iterations=budget[0] + cuts,
        ball_active=ball_active,
        multipliers={lin_active[k]: lin_mult[k] for k in order},
        ball_multiplier=ball_mult,
        kkt=kkt,
    )
