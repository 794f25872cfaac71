"""Desk-scale physics world.

Floating-base robot under joint impedance control with penalty ground
contacts: spring-damper normal forces (never negative) and an anchor-based
Coulomb friction model clipped to the cone.  Forward dynamics solves the
RNEA-implied linear system; integration is semi-implicit Euler.  The
contact model is deliberately softer than the MPC's rigid no-slip
assumption so a model gap exists by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rbd
from .controller import Measurement


class SimError(RuntimeError):
    def __init__(self, msg, last_state=None):
        super().__init__(msg)
        self.last_state = last_state


@dataclass
class ImpedanceGains:
    kp: float = 600.0
    kd: float = 24.0


@dataclass
class SimConfig:
    dt: float = 0.001
    k_normal: float = 3e4
    c_normal: float = 400.0
    k_tangent: float = 1e4
    c_tangent: float = 200.0
    damp_ramp: float = 0.002    # m of penetration over which damping blends in
    ground_z: float = 0.0
    velocity_clip: float = 1e3  # robustness guard against contact blow-ups


@dataclass
class WorldState:
    q: np.ndarray
    dq: np.ndarray
    anchors: np.ndarray  # (n_c, 2) tangential anchor points; NaN = detached
    time: float

    def copy(self):
        return WorldState(self.q.copy(), self.dq.copy(), self.anchors.copy(),
                          self.time)


@dataclass
class StepInfo:
    mean_twist: np.ndarray      # base-local (v, omega) averaged over substeps
    mean_joint_power: float     # <qdot . tau> averaged over substeps
    contact_forces: np.ndarray  # (n_c, 3) world frame, averaged over substeps


class World:
    def __init__(self, model, q0, dq0=None, config=None):
        self.model = model
        self.config = config or SimConfig()
        dq0 = np.zeros(model.n_v) if dq0 is None else np.asarray(dq0, dtype=float)
        self.state = WorldState(np.asarray(q0, dtype=float).copy(), dq0.copy(),
                                np.full((model.n_c, 2), np.nan), 0.0)
        self._wrench = np.zeros(6)
        self._wrench_left = 0.0
        self._last_forces = np.zeros((model.n_c, 3))

    def set_state(self, q, dq):
        self.state.q = np.asarray(q, dtype=float).copy()
        self.state.dq = np.asarray(dq, dtype=float).copy()
        self.state.anchors[:] = np.nan

    def teleport_base(self, offset):
        """Displace the base position in world coordinates (test probe)."""
        self.state.q[0:3] += np.asarray(offset, dtype=float)
        self.state.anchors[:] = np.nan

    def apply_disturbance(self, wrench, duration):
        """World-frame wrench at the base origin, active for `duration`."""
        w = np.asarray(wrench, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("disturbance wrench must be finite")
        self._wrench = w.copy()
        self._wrench_left = float(duration)

    def _ground_forces(self, P, V):
        """Penalty normal + anchored Coulomb tangential force per foot."""
        cfg = self.config
        mu = self.model.friction
        lam = np.zeros((self.model.n_c, 3))
        for f in range(self.model.n_c):
            pen = cfg.ground_z - P[f, 2]
            if pen <= 0.0:
                self.state.anchors[f] = np.nan
                continue
            # damping blends in with penetration and never exceeds the
            # spring term, so contact forces stay continuous and unilateral
            blend = pen / (pen + cfg.damp_ramp)
            spring = cfg.k_normal * pen
            damp = np.clip(cfg.c_normal * blend * V[f, 2], -spring, spring)
            fn = spring - damp
            if fn <= 0.0:
                self.state.anchors[f] = np.nan
                continue
            lam[f, 2] = fn
            if np.isnan(self.state.anchors[f, 0]):
                self.state.anchors[f] = P[f, :2]
            ft = -cfg.k_tangent * (P[f, :2] - self.state.anchors[f]) \
                - cfg.c_tangent * blend * V[f, :2]
            limit = mu * fn
            nrm = np.hypot(ft[0], ft[1])
            if nrm > limit:
                ft *= limit / nrm
                # drag the anchor so the spring matches the slipping force
                self.state.anchors[f] = P[f, :2] + (ft + cfg.c_tangent * blend * V[f, :2]) / cfg.k_tangent
            lam[f, :2] = ft
        return lam

    def step(self, ref, gains, n_sub):
        """Advance n_sub substeps under one impedance reference."""
        m = self.model
        cfg = self.config
        st = self.state
        nv = m.n_v
        twist_acc = np.zeros(6)
        power_acc = 0.0
        force_acc = np.zeros((m.n_c, 3))
        for _ in range(n_sub):
            q, dq = st.q, st.dq
            tau_jnt = (gains.kp * (ref.q_star - q[7:])
                       + gains.kd * (ref.dq_star - dq[6:]) + ref.tau_ff)
            P, V = rbd.contact_point_kinematics(m, q, dq)
            lam = self._ground_forces(P, V)
            tau_gen = np.zeros(nv)
            tau_gen[6:] = tau_jnt
            if self._wrench_left > 0.0:
                R0T = rbd.quat_to_rot(q[3:7]).T
                tau_gen[0:3] += R0T @ self._wrench[0:3]
                tau_gen[3:6] += R0T @ self._wrench[3:6]
                self._wrench_left -= cfg.dt
            rhs = tau_gen - rbd.inverse_dynamics(m, q, dq, np.zeros(nv), lam)
            M = rbd.mass_matrix(m, q)
            try:
                ddq = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                raise SimError("singular mass matrix", st.copy()) from None
            q2, dq2 = rbd.integrate_state(m, q, dq, ddq, cfg.dt)
            if not (np.all(np.isfinite(q2)) and np.all(np.isfinite(dq2))):
                raise SimError("simulation produced non-finite state", st.copy())
            np.clip(dq2, -cfg.velocity_clip, cfg.velocity_clip, out=dq2)
            st.q, st.dq = q2, dq2
            st.time += cfg.dt
            twist_acc += dq2[:6]
            power_acc += float(dq2[6:] @ tau_jnt)
            force_acc += lam
            self._last_forces = lam
        return StepInfo(twist_acc / n_sub, power_acc / n_sub, force_acc / n_sub)

    def sensors(self):
        """(normalized gravity in base frame, body angular rate, joint q, joint qd)."""
        q, dq = self.state.q, self.state.dq
        R0 = rbd.quat_to_rot(q[3:7])
        g_n = R0.T @ np.array([0.0, 0.0, -1.0])
        return g_n, dq[3:6].copy(), q[7:].copy(), dq[6:].copy()

    def measurement(self):
        q, dq = self.state.q, self.state.dq
        return Measurement(q[3:7].copy(), dq[3:6].copy(), q[7:].copy(), dq[6:].copy())

    def contact_forces(self):
        return self._last_forces.copy()

    def com(self):
        R, p, _, _ = rbd.link_states(self.model, self.state.q, self.state.dq)
        tot = np.zeros(3)
        for i, lk in enumerate(self.model.links):
            tot += lk.mass * (p[i] + R[i] @ lk.com)
        return tot / self.model.mass
