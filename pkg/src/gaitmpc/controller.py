"""Receding-horizon MPC controller.

Ties the phase manager, the term catalog and the RTI solver into one
control step: apply the twist reference and injection requests, shift plan
and warm start, anchor the first node (open-loop from the previous
solution, or partial closed-loop on the measured components), run one RTI
sweep, and emit joint-impedance references from the second node to
compensate the one-step solver delay.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ilqr, ocp, phases, rbd

OL = "OL"
CLP = "CLP"


@dataclass
class McpCommand:
    """High-level inputs: twist reference and per-foot injection requests."""
    xi: np.ndarray
    chi: np.ndarray


@dataclass
class Measurement:
    """What the robot can sense: IMU attitude/rate and joint encoders."""
    quat: np.ndarray
    omega: np.ndarray
    q_jnt: np.ndarray
    dq_jnt: np.ndarray


@dataclass
class ImpedanceReference:
    q_star: np.ndarray
    dq_star: np.ndarray
    tau_ff: np.ndarray

    def copy(self):
        return ImpedanceReference(self.q_star.copy(), self.dq_star.copy(),
                                  self.tau_ff.copy())


@dataclass
class Diagnostics:
    delta: float
    v_hat: np.ndarray
    lam_hat: np.ndarray
    d_fl: np.ndarray
    s_fl: np.ndarray
    stats: object
    injections: list = field(default_factory=list)
    xi_clamped: bool = False
    diverged: bool = False


def clp_mask(model):
    """Tangent rows observable with IMU + joint encoders: base orientation,
    angular velocity, joint positions and velocities.  Base position and
    linear velocity stay free decision variables."""
    nv = model.n_v
    mask = np.ones(2 * nv, dtype=bool)
    mask[0:3] = False        # base position
    mask[nv:nv + 3] = False  # base linear velocity
    return mask


def make_impedance_reference(traj, model, node=1):
    """Joint references and feedforward from one node of the solution."""
    q = traj.q[node]
    dq = traj.dq[node]
    u = traj.u[min(node, traj.N - 1)]
    nv = model.n_v
    tau = rbd.inverse_dynamics(model, q, dq, u[:nv], u[nv:])
    return ImpedanceReference(q[7:].copy(), dq[6:].copy(), tau[6:])


def switch_foot_tracking_mode(nlp, mode):
    """Swap the swing cost between velocity (l_vz) and position (l_pz)."""
    if mode not in ("velocity", "position"):
        raise ValueError("mode must be 'velocity' or 'position'")
    nlp.tracking_mode = mode


def stance_trajectory(model, nlp, stance_q):
    """All-contact equilibrium trajectory: the default warm start."""
    N = nlp.N
    Q = np.repeat(np.asarray(stance_q, dtype=float)[None], N + 1, 0)
    DQ = np.zeros((N + 1, model.n_v))
    U = np.zeros((N, model.n_u))
    share = model.mass * model.gravity / model.n_c
    for f in range(model.n_c):
        U[:, model.n_v + 3 * f + 2] = share
    return ilqr.Trajectory(Q, DQ, U)


class MpcController:
    def __init__(self, model, config=None, mode=CLP, stance_q=None,
                 reference_node=1, solver_config=None):
        self.model = model
        self.config = config or ocp.MpcConfig()
        self.mode = mode
        self.reference_node = reference_node
        self.solver_config = solver_config or ilqr.SolverConfig()
        self.nlp = ocp.build_problem(model, self.config)
        if stance_q is None:
            stance_q = model.neutral_q()
        self.stance_q = np.asarray(stance_q, dtype=float)
        self.nlp.q_hat = self.stance_q[7:].copy()
        if mode == OL:
            # position-based foot tracking avoids contact drift open-loop
            switch_foot_tracking_mode(self.nlp, "position")
        self.init_mask = None if mode == OL else clp_mask(model)
        self.reset()

    def reset(self):
        """Default state: all-contact plan, stance warm start, zero health."""
        c = self.config
        self.plan = phases.HorizonPlan.create(
            self.model, c.N, c.dt, c.injection_node, c.flight_duration,
            c.clearance, c.landing)
        self.traj = stance_trajectory(self.model, self.nlp, self.stance_q)
        self.delta = 0.0
        self.last_ref = make_impedance_reference(self.traj, self.model,
                                                 self.reference_node)
        self.last_stats = ilqr.SolveStats()
        ocp.set_twist_reference(self.nlp, np.zeros(6))

    def _x_is(self, measurement):
        q0 = self.traj.q[0].copy()
        dq0 = self.traj.dq[0].copy()
        if self.mode == CLP:
            if measurement is None:
                raise ValueError("CLP mode requires a measurement")
            q0[3:7] = measurement.quat
            q0[7:] = measurement.q_jnt
            dq0[3:6] = measurement.omega
            dq0[6:] = measurement.dq_jnt
        elif measurement is not None:
            raise ValueError("OL mode takes no measurement")
        return q0, dq0

    def step(self, measurement, cmd):
        """One control step; returns (ImpedanceReference, Diagnostics)."""
        c = self.config
        ocp.set_twist_reference(self.nlp, cmd.xi)
        injections = self.plan.try_inject(np.asarray(cmd.chi, dtype=float))
        self.plan.shift()
        self.traj = ilqr.shift_solution(self.traj)
        x_is = self._x_is(measurement)
        traj, stats = ilqr.solve_rti(self.nlp, self.plan, self.traj,
                                     x_is=x_is, init_mask=self.init_mask,
                                     n_iters=self.solver_config.n_iters,
                                     config=self.solver_config)
        self.last_stats = stats
        self.delta = ilqr.health_index(stats, self.delta, c.health_alpha,
                                       kappa=c.kappa_merit)
        if stats.diverged:
            ref = self.last_ref.copy()
        else:
            self.traj = traj
            ref = make_impedance_reference(traj, self.model, self.reference_node)
            self.last_ref = ref
        node = self.reference_node
        nv = self.model.n_v
        d_fl, s_fl = self.plan.snapshot()
        diag = Diagnostics(
            delta=self.delta,
            v_hat=self.traj.dq[node][0:3].copy(),
            lam_hat=self.traj.u[min(node, self.traj.N - 1)][nv:].reshape(self.model.n_c, 3).copy(),
            d_fl=d_fl, s_fl=s_fl,
            stats=stats,
            injections=injections,
            xi_clamped=self.nlp.xi_clamped,
            diverged=stats.diverged,
        )
        return ref, diag
