"""Equality-constrained multiple-shooting ILQR under a real-time-iteration
regime.

The core operates on a problem object exposing batched evaluation,
linearization in tangent coordinates, manifold retraction, per-node input
masks and a first-node update rule.  LocomotionProblem adapts the NLP
catalog; QuadraticProblem provides plain vector-space instances for
oracle tests.

The backward pass is a Riccati recursion over the masked input space with
Levenberg regularization on factorization failure; the forward pass is a
linear tangent rollout (feedforward and defects scaled by the line-search
step) retracted onto the manifold, accepted on non-increase of the merit
l + kappa_m * ||h||_1.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .problem import EvalResult, LocomotionProblem


@dataclass
class SolverConfig:
    n_iters: int = 1
    kappa_merit: float = 1e-2
    ls_factor: float = 0.5
    ls_trials: int = 8
    reg_min: float = 1e-6
    reg_escalation: float = 10.0
    reg_max: float = 1e8


@dataclass
class Trajectory:
    """Horizon solution: states (q, dq) at nodes 0..N and inputs at 0..N-1."""
    q: np.ndarray
    dq: np.ndarray
    u: np.ndarray

    def copy(self):
        return Trajectory(self.q.copy(), self.dq.copy(), self.u.copy())

    @property
    def N(self):
        return self.u.shape[0]


@dataclass
class SolveStats:
    cost: float = 0.0
    h1: float = 0.0
    barrier: float = 0.0
    alpha: float = 0.0
    iterations: int = 0
    diverged: bool = False
    breakdown: dict = field(default_factory=dict)

    def merit(self, kappa):
        return self.cost + kappa * self.h1

    def to_dict(self):
        return {"cost": self.cost, "h1": self.h1, "barrier": self.barrier,
                "alpha": self.alpha, "iterations": self.iterations,
                "diverged": self.diverged, "breakdown": self.breakdown}


class _RegFailure(Exception):
    pass


@njit(cache=True)
def _riccati_kernel(A, B, gx, gu, Hxx, Huu, Hxu, defects, active, reg,
                    K, k, S_out, s_out):
    """Masked-input Riccati recursion.  Returns 0 on success, 1 when a
    Cholesky factorization fails (caller escalates regularization)."""
    N = A.shape[0]
    nx = A.shape[1]
    nu = B.shape[2]
    S = Hxx[N].copy()
    s = gx[N].copy()
    idx = np.empty(nu, dtype=np.int64)
    for i in range(N - 1, -1, -1):
        na = 0
        for j in range(nu):
            if active[i, j]:
                idx[na] = j
                na += 1
        ix = idx[:na]
        Ai = A[i]
        Bi = B[i][:, ix]
        Sd = s + S @ defects[i]
        hx = gx[i] + Ai.T @ Sd
        hu = gu[i][ix] + Bi.T @ Sd
        SB = S @ Bi
        Hu = Huu[i][ix, :][:, ix] + Bi.T @ SB
        for a in range(na):
            Hu[a, a] += reg
        Hx = Hxu[i][:, ix].T + SB.T @ Ai
        Hu = 0.5 * (Hu + Hu.T)
        # PD check via eigenvalue-free Cholesky
        okflag = True
        L = np.zeros((na, na))
        for a in range(na):
            diag = Hu[a, a]
            for c in range(a):
                diag -= L[a, c] * L[a, c]
            if diag <= 0.0 or not np.isfinite(diag):
                okflag = False
                break
            L[a, a] = np.sqrt(diag)
            for b in range(a + 1, na):
                v = Hu[b, a]
                for c in range(a):
                    v -= L[b, c] * L[a, c]
                L[b, a] = v / L[a, a]
        if not okflag:
            return 1
        # solve Hu X = [hu | Hx] via the factor
        rhs = np.empty((na, 1 + nx))
        rhs[:, 0] = hu
        rhs[:, 1:] = Hx
        for col in range(1 + nx):
            for a in range(na):
                v = rhs[a, col]
                for c in range(a):
                    v -= L[a, c] * rhs[c, col]
                rhs[a, col] = v / L[a, a]
            for a in range(na - 1, -1, -1):
                v = rhs[a, col]
                for c in range(a + 1, na):
                    v -= L[c, a] * rhs[c, col]
                rhs[a, col] = v / L[a, a]
        for a in range(na):
            k[i, ix[a]] = -rhs[a, 0]
            for col in range(nx):
                K[i, ix[a], col] = -rhs[a, 1 + col]
        ka = -rhs[:, 0]
        Ka = -rhs[:, 1:]
        s = hx + Hx.T @ ka
        S = Hxx[i] + Ai.T @ (S @ Ai) + Hx.T @ Ka
        S = 0.5 * (S + S.T)
    S_out[:] = S
    s_out[:] = s
    return 0


def _backward_pass(lin, reg):
    N, nx = lin.A.shape[0], lin.A.shape[1]
    nu = lin.B.shape[2]
    K = np.zeros((N, nu, nx))
    k = np.zeros((N, nu))
    S0 = np.empty((nx, nx))
    s0 = np.empty(nx)
    rc = _riccati_kernel(lin.A, lin.B, lin.gx, lin.gu, lin.Hxx, lin.Huu,
                         lin.Hxu, lin.defects, lin.active, reg, K, k, S0, s0)
    if rc != 0:
        raise _RegFailure
    return K, k, S0, s0


def _first_node_step(problem, Q, DQ, S0, s0, reg_floor=1.0):
    """Full (alpha=1) tangent step at node 0: measured rows go to the
    measurement, free rows minimize the value function.

    The free block is Levenberg-damped: absolute base translation is
    cost-flat by construction, and an (near) unregularized solve would slide
    arbitrarily far along that null subspace on linearization noise."""
    mask, target = problem.x0_rule(Q[0], DQ[0])
    dx = np.zeros(problem.nx)
    dx[mask] = target[mask]
    free = ~mask
    if free.any():
        Sff = S0[np.ix_(free, free)] + reg_floor * np.eye(int(free.sum()))
        rhs = -(s0[free] + S0[np.ix_(free, mask)] @ dx[mask])
        try:
            dx[free] = np.linalg.solve(Sff, rhs)
        except np.linalg.LinAlgError:
            dx[free] = np.linalg.lstsq(Sff, rhs, rcond=None)[0]
    return dx


def _forward_pass(problem, Q, DQ, U, lin, K, k, dx0_full, alpha):
    """Linear tangent rollout; states retracted in one batched call."""
    N = lin.A.shape[0]
    newU = U.copy()
    DX = np.empty((N + 1, problem.nx))
    dx = alpha * dx0_full
    DX[0] = dx
    for i in range(N):
        act = lin.active[i]
        du = np.zeros(problem.nu)
        du[act] = alpha * k[i, act] + K[i, act] @ dx
        newU[i] = U[i] + du
        dx = lin.A[i] @ dx + lin.B[i] @ du + alpha * lin.defects[i]
        DX[i + 1] = dx
    newQ, newDQ = problem.x_add(Q, DQ, DX)
    return newQ, newDQ, newU


def solve(problem, traj, config=None):
    """Run n_iters RTI sweeps; never raises on non-convergence."""
    cfg = config or SolverConfig()
    Q, DQ, U = traj.q.copy(), traj.dq.copy(), traj.u.copy()
    problem.enforce_input_mask(U)
    stats = SolveStats()

    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(DQ)) and np.all(np.isfinite(U))):
        stats.diverged = True
        return traj.copy(), stats

    fused = getattr(problem, "linearize_fused", None)
    merit_cur = None
    if fused is None:
        merit_cur, ev = problem.merit(Q, DQ, U)
        if not np.isfinite(merit_cur):
            stats.diverged = True
            return traj.copy(), stats
        stats.cost, stats.h1, stats.barrier = ev.cost, ev.h1, ev.barrier
        stats.breakdown = ev.breakdown

    for _ in range(cfg.n_iters):
        if fused is not None:
            lin, merit_new, ev = fused(Q, DQ, U)
            if merit_cur is None:
                if not np.isfinite(merit_new):
                    stats.diverged = True
                    return traj.copy(), stats
                stats.cost, stats.h1, stats.barrier = ev.cost, ev.h1, ev.barrier
                stats.breakdown = ev.breakdown
            merit_cur = merit_new
        else:
            lin = problem.linearize(Q, DQ, U)
        if not all(np.all(np.isfinite(a)) for a in
                   (lin.A, lin.B, lin.gx, lin.gu, lin.Hxx, lin.Huu, lin.Hxu, lin.defects)):
            stats.diverged = True
            break
        reg = 0.0
        while True:
            try:
                K, k, S0, s0 = _backward_pass(lin, reg)
                break
            except _RegFailure:
                reg = cfg.reg_min if reg == 0.0 else reg * cfg.reg_escalation
                if reg > cfg.reg_max:
                    stats.diverged = True
                    break
        if stats.diverged:
            break
        dx0_full = _first_node_step(problem, Q, DQ, S0, s0)
        stats.iterations += 1

        accepted = False
        alpha = 1.0
        for _ in range(cfg.ls_trials):
            tQ, tDQ, tU = _forward_pass(problem, Q, DQ, U, lin, K, k, dx0_full, alpha)
            if np.all(np.isfinite(tQ)) and np.all(np.isfinite(tDQ)) and np.all(np.isfinite(tU)):
                merit_t, ev_t = problem.merit(tQ, tDQ, tU)
                if np.isfinite(merit_t) and merit_t <= merit_cur:
                    Q, DQ, U = tQ, tDQ, tU
                    merit_cur = merit_t
                    stats.cost, stats.h1, stats.barrier = ev_t.cost, ev_t.h1, ev_t.barrier
                    stats.breakdown = ev_t.breakdown
                    stats.alpha = alpha
                    accepted = True
                    break
            alpha *= cfg.ls_factor
        if not accepted:
            break

    return Trajectory(Q, DQ, U), stats


def solve_rti(nlp, plan, traj_ig, x_is=None, n_iters=1, init_mask=None, config=None):
    """RTI entry point for the locomotion NLP.

    x_is: (q, dq) initial-state anchor; init_mask selects the constrained
    tangent rows (None constrains everything, the OL convention).
    """
    cfg = config or SolverConfig()
    if n_iters != cfg.n_iters:
        cfg = SolverConfig(**{**cfg.__dict__, "n_iters": n_iters})
    cfg.kappa_merit = nlp.config.kappa_merit
    problem = LocomotionProblem(nlp, plan, x_is=x_is, init_mask=init_mask)
    if traj_ig.q.shape != (nlp.N + 1, nlp.model.n_q) or traj_ig.u.shape[0] != nlp.N:
        raise ValueError("initial guess dimensions do not match the NLP horizon")
    problem.capture_phase_anchors(traj_ig.q, traj_ig.dq)
    return solve(problem, traj_ig, cfg)


def shift_solution(traj):
    """Warm start for the next step: drop node 0, duplicate the tail."""
    out = traj.copy()
    out.q[:-1] = traj.q[1:]
    out.dq[:-1] = traj.dq[1:]
    out.u[:-1] = traj.u[1:]
    return out


def health_index(stats, delta_prev, alpha, kappa=1e-2):
    """Smoothed solver-quality index: EMA of cost + kappa * ||h||_1."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    raw = stats.cost + kappa * stats.h1
    if stats.diverged:
        raw = max(raw, 1e6)
    return (1.0 - alpha) * delta_prev + alpha * raw


# ---------------------------------------------------------------------------
# plain vector-space quadratic problems (oracle tests, benchmarks)
# ---------------------------------------------------------------------------

class QuadraticProblem:
    """x_{i+1} = A x + B u (+ c), cost 0.5 x'Qx + q'x + 0.5 u'Ru, terminal
    0.5 x'Qf x + qf'x, fixed initial state x_is."""

    def __init__(self, A, B, Qc, qc, Rc, Qf, qf, x_is, N, c=None):
        self.A, self.B = A, B
        self.Qc, self.qc, self.Rc = Qc, qc, Rc
        self.Qf, self.qf = Qf, qf
        self.x_is = x_is
        self.N = N
        self.n = A.shape[0]
        self.m = B.shape[1]
        self.nx, self.nu = self.n, self.m
        self.c = np.zeros(self.n) if c is None else c
        self.penalty_weight = 1e4

    def x_add(self, q, dq, dx):
        return q + dx, dq

    def x_diff(self, qa, dqa, qb, dqb):
        return qb - qa

    def enforce_input_mask(self, U):
        pass

    def x0_rule(self, q0, dq0):
        return np.ones(self.n, dtype=bool), self.x_is - q0

    def _cost(self, Q, U):
        c = 0.0
        for i in range(self.N):
            c += 0.5 * Q[i] @ self.Qc @ Q[i] + self.qc @ Q[i] + 0.5 * U[i] @ self.Rc @ U[i]
        c += 0.5 * Q[self.N] @ self.Qf @ Q[self.N] + self.qf @ Q[self.N]
        return float(c)

    def merit(self, Q, DQ, U):
        pred = Q[:-1] @ self.A.T + U @ self.B.T + self.c
        defects = pred - Q[1:]
        r0 = Q[0] - self.x_is
        h1 = float(np.abs(defects).sum() + np.abs(r0).sum())
        hsq = float((defects ** 2).sum() + (r0 ** 2).sum())
        cost = self._cost(Q, U)
        ev = EvalResult(cost, h1, hsq, 0.0, defects, {})
        return cost + self.penalty_weight * hsq, ev

    def linearize(self, Q, DQ, U):
        from .problem import LinData
        N, n, m = self.N, self.n, self.m
        A = np.broadcast_to(self.A, (N, n, n)).copy()
        B = np.broadcast_to(self.B, (N, n, m)).copy()
        gx = np.empty((N + 1, n))
        gx[:-1] = Q[:-1] @ self.Qc.T + self.qc
        gx[-1] = self.Qf @ Q[-1] + self.qf
        gu = U @ self.Rc.T
        Hxx = np.broadcast_to(self.Qc, (N + 1, n, n)).copy()
        Hxx[-1] = self.Qf
        Huu = np.broadcast_to(self.Rc, (N, m, m)).copy()
        Hxu = np.zeros((N, n, m))
        pred = Q[:-1] @ self.A.T + U @ self.B.T + self.c
        defects = pred - Q[1:]
        active = np.ones((N, m), dtype=bool)
        return LinData(A, B, gx, gu, Hxx, Huu, Hxu, defects, active)

    def initial_trajectory(self):
        return Trajectory(np.zeros((self.N + 1, self.n)),
                          np.zeros((self.N + 1, 0)),
                          np.zeros((self.N, self.m)))
