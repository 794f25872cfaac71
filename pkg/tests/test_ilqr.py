import numpy as np
import pytest

from gaitmpc import ilqr, models, ocp, phases, rbd
from gaitmpc.ilqr import QuadraticProblem, SolveStats, SolverConfig, Trajectory

import oracles


def random_lqr(rng, n=None, m=None, N=None):
    n = n or rng.integers(2, 11)
    m = m or rng.integers(1, n + 1)
    N = N or rng.integers(5, 21)
    A = rng.normal(0, 1, (n, n))
    A *= 0.9 / max(1e-6, np.abs(np.linalg.eigvals(A)).max())
    B = rng.normal(0, 1, (n, m))
    C = rng.normal(0, 1, (n, n))
    Q = C.T @ C / n + 0.1 * np.eye(n)
    Qf = 2 * Q
    q = rng.normal(0, 1, n)
    qf = rng.normal(0, 1, n)
    R = np.eye(m) * rng.uniform(0.1, 2.0)
    x0 = rng.normal(0, 1, n)
    c = rng.normal(0, 0.1, n)
    return QuadraticProblem(A, B, Q, q, R, Qf, qf, x0, int(N), c=c)


def test_double_integrator_matches_riccati():
    dt = 0.1
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.0], [dt]])
    Q = np.diag([1.0, 0.1])
    R = np.array([[0.01]])
    x0 = np.array([1.0, 0.0])
    prob = QuadraticProblem(A, B, Q, np.zeros(2), R, 10 * Q, np.zeros(2), x0, 40)
    traj, stats = ilqr.solve(prob, prob.initial_trajectory(), SolverConfig(n_iters=50))
    xs, us = oracles.lqr_riccati(A, B, Q, np.zeros(2), R, 10 * Q, np.zeros(2), x0, 40)
    assert np.abs(traj.q - xs).max() < 1e-6
    assert np.abs(traj.u - us).max() < 1e-6
    assert not stats.diverged


def test_random_lqr_suite_matches_riccati():
    rng = np.random.default_rng(0)
    for _ in range(15):
        prob = random_lqr(rng)
        traj, _ = ilqr.solve(prob, prob.initial_trajectory(), SolverConfig(n_iters=8))
        xs, _ = oracles.lqr_riccati(prob.A, prob.B, prob.Qc, prob.qc, prob.Rc,
                                    prob.Qf, prob.qf, prob.x_is, prob.N, c=prob.c)
        assert np.abs(traj.q - xs).max() < 1e-6


def test_fixed_point_no_progress():
    rng = np.random.default_rng(3)
    prob = random_lqr(rng, n=4, m=2, N=12)
    traj, stats = ilqr.solve(prob, prob.initial_trajectory(), SolverConfig(n_iters=30))
    c_opt = stats.cost
    traj2, stats2 = ilqr.solve(prob, traj, SolverConfig(n_iters=1))
    assert abs(stats2.cost - c_opt) < 1e-10
    assert np.abs(traj2.q - traj.q).max() < 1e-8


def test_merit_never_increases_across_iterations():
    rng = np.random.default_rng(5)
    prob = random_lqr(rng, n=6, m=3, N=15)
    traj = prob.initial_trajectory()
    merits = [prob.merit(traj.q, traj.dq, traj.u)[0]]
    for _ in range(10):
        traj, stats = ilqr.solve(prob, traj, SolverConfig(n_iters=1))
        merits.append(prob.merit(traj.q, traj.dq, traj.u)[0])
    assert all(b <= a + 1e-12 for a, b in zip(merits, merits[1:]))


def test_determinism_bitwise():
    rng = np.random.default_rng(7)
    prob = random_lqr(rng, n=5, m=2, N=10)
    t1, s1 = ilqr.solve(prob, prob.initial_trajectory(), SolverConfig(n_iters=5))
    t2, s2 = ilqr.solve(prob, prob.initial_trajectory(), SolverConfig(n_iters=5))
    assert np.array_equal(t1.q, t2.q) and np.array_equal(t1.u, t2.u)
    assert s1.cost == s2.cost


def test_nan_guess_flags_divergence():
    rng = np.random.default_rng(11)
    prob = random_lqr(rng, n=3, m=1, N=5)
    traj = prob.initial_trajectory()
    traj.q[2, 0] = np.nan
    out, stats = ilqr.solve(prob, traj, SolverConfig())
    assert stats.diverged
    assert np.isnan(out.q[2, 0])  # trajectory returned unchanged


# ------------------------------------------------------------ shift_solution

def test_shift_constant_trajectory():
    t = Trajectory(np.ones((5, 3)), np.ones((5, 2)), np.ones((4, 2)))
    s = ilqr.shift_solution(t)
    assert np.array_equal(s.q, t.q) and np.array_equal(s.u, t.u)


def test_shift_ramp():
    q = np.arange(5, dtype=float)[:, None] * np.ones((1, 2))
    u = np.arange(4, dtype=float)[:, None] * np.ones((1, 1))
    t = Trajectory(q, q.copy(), u)
    s = ilqr.shift_solution(t)
    assert np.array_equal(s.q[:, 0], [1, 2, 3, 4, 4])
    assert np.array_equal(s.u[:, 0], [1, 2, 3, 3])


# -------------------------------------------------------------- health index

def test_health_zero():
    assert ilqr.health_index(SolveStats(cost=0, h1=0), 0.0, 0.1) == 0.0


def test_health_no_smoothing():
    st = SolveStats(cost=2.0, h1=3.0)
    assert ilqr.health_index(st, 123.0, 1.0, kappa=1e-2) == pytest.approx(2.03)


def test_health_geometric_convergence():
    st = SolveStats(cost=5.0, h1=0.0)
    d = 0.0
    vals = []
    for _ in range(60):
        d = ilqr.health_index(st, d, 0.1)
        vals.append(d)
    # EMA closed form: 5 * (1 - 0.9^k)
    ks = np.arange(1, 61)
    assert np.allclose(vals, 5.0 * (1 - 0.9 ** ks), atol=1e-12)


def test_health_monotone_in_violation():
    base = SolveStats(cost=1.0, h1=0.0)
    pert = SolveStats(cost=1.0, h1=4.0)
    k = 1e-2
    d0 = ilqr.health_index(base, 0.0, 1.0, kappa=k)
    d1 = ilqr.health_index(pert, 0.0, 1.0, kappa=k)
    assert d1 - d0 >= k * 4.0 - 1e-12


def test_health_alpha_validation():
    with pytest.raises(ValueError):
        ilqr.health_index(SolveStats(), 0.0, 0.0)


# ---------------------------------------------------- desk-quad standing RTI

@pytest.fixture(scope="module")
def quad_setup():
    model = rbd.load_model(models.desk_quad_text())
    cfg = ocp.MpcConfig()
    nlp = ocp.build_problem(model, cfg)
    nlp.q_hat = models.desk_quad_stance_joints()
    plan = phases.HorizonPlan.create(model, cfg.N, cfg.dt, cfg.injection_node,
                                     cfg.flight_duration, cfg.clearance, cfg.landing)
    return model, cfg, nlp, plan


def stance_traj(model, nlp, uneven=False):
    N = nlp.N
    q = models.desk_quad_stance_q(model)
    Q = np.repeat(q[None], N + 1, 0)
    DQ = np.zeros((N + 1, model.n_v))
    U = np.zeros((N, model.n_u))
    share = model.mass * model.gravity / 4
    lam = np.full(4, share)
    if uneven:
        lam = share * np.array([0.4, 1.6, 1.3, 0.7])
    for f in range(4):
        U[:, model.n_v + 3 * f + 2] = lam[f]
    return Trajectory(Q, DQ, U)


def test_standing_equal_load(quad_setup):
    model, cfg, nlp, plan = quad_setup
    traj = stance_traj(model, nlp, uneven=True)
    x_is = (traj.q[0].copy(), traj.dq[0].copy())
    for _ in range(30):
        traj, stats = ilqr.solve_rti(nlp, plan, traj, x_is=x_is)
    assert not stats.diverged
    share = model.mass * model.gravity / 4
    lam_z = traj.u[:, [model.n_v + 2, model.n_v + 5, model.n_v + 8, model.n_v + 11]]
    mid = lam_z[5:25]
    assert np.abs(mid - share).max() / share < 0.05


def test_standing_solution_is_near_fixed_point(quad_setup):
    model, cfg, nlp, plan = quad_setup
    traj = stance_traj(model, nlp)
    x_is = (traj.q[0].copy(), traj.dq[0].copy())
    t2, stats = ilqr.solve_rti(nlp, plan, traj, x_is=x_is)
    assert not stats.diverged
    assert stats.h1 < 1e-6
    assert np.abs(t2.q - traj.q).max() < 1e-6


def test_flight_forces_exactly_zero(quad_setup):
    model, cfg, nlp, plan = quad_setup
    import copy
    plan2 = copy.deepcopy(plan)
    plan2.timelines[1].try_inject(-1.0)
    traj = stance_traj(model, nlp)
    x_is = (traj.q[0].copy(), traj.dq[0].copy())
    out, stats = ilqr.solve_rti(nlp, plan2, traj, x_is=x_is)
    ph = plan2.timelines[1].flights[0]
    cols = slice(model.n_v + 3, model.n_v + 6)
    assert np.all(out.u[ph.d:ph.end, cols] == 0.0)
