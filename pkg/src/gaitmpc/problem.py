"""Locomotion NLP as a trajectory-optimization problem.

Adapts an NlpSpec + HorizonPlan to the generic interface the ILQR core
consumes: batched merit evaluation and central-finite-difference
linearization in tangent coordinates.  Equality handling follows the
catalog's design: integrator defects live in the multiple-shooting
structure, h_liftoff is eliminated by masking flight-foot force inputs,
h_xinit is enforced structurally at node 0, and h_dyn / h_pc / h_rc enter
as Gauss-Newton quadratic penalties with weight kappa_eq.
"""

from dataclasses import dataclass

import numpy as np

from . import rbd

_FD_EPS = 1e-6


@dataclass
class EvalResult:
    cost: float
    h1: float
    hsq: float
    barrier: float
    defects: np.ndarray
    breakdown: dict


class LocomotionProblem:
    """One solve's view of the NLP: plan-resolved supports, references, masks."""

    def __init__(self, nlp, plan, x_is=None, init_mask=None):
        self.nlp = nlp
        self.model = nlp.model
        self.plan = plan
        m = self.model
        self.N = nlp.N
        self.dt = nlp.dt
        self.nv = m.n_v
        self.nx = 2 * m.n_v
        self.nc = m.n_c
        self.nu = m.n_v + 3 * m.n_c
        self.kappa_eq = nlp.config.kappa_eq

        self.contact = plan.contact_mask()  # (nc, N)
        self.input_active = np.ones((self.N, self.nu), dtype=bool)
        for f in range(self.nc):
            cols = slice(self.nv + 3 * f, self.nv + 3 * f + 3)
            self.input_active[~self.contact[f], cols] = False

        # per-node equal-load force target: normal m*g/n_ac on active feet
        n_ac = self.contact.sum(axis=0).astype(float)  # (N,)
        self.lam_target = np.zeros((self.N, self.nc, 3))
        with np.errstate(divide="ignore"):
            share = np.where(n_ac > 0, m.mass * m.gravity / np.maximum(n_ac, 1), 0.0)
        for f in range(self.nc):
            self.lam_target[self.contact[f], f, 2] = share[self.contact[f]]

        # per-(foot, node) swing references
        self.vref = np.zeros((self.nc, self.N))
        self.pref = np.zeros((self.nc, self.N))
        self.touchdown = np.zeros((self.nc, self.N), dtype=bool)
        self._phase_refs_pending = any(
            ph.anchor is None for tl in plan.timelines for ph in tl.flights)
        for f, tl in enumerate(plan.timelines):
            for ph in tl.flights:
                hi = min(ph.end, self.N)
                anchor = ph.anchor if ph.anchor is not None else 0.0
                self.vref[f, ph.d:hi] = ph.v_ref[: hi - ph.d]
                self.pref[f, ph.d:hi] = anchor + ph.p_ref[: hi - ph.d]
                if ph.end - 1 < self.N:
                    self.touchdown[f, ph.end - 1] = True

        # static supports as masks over nodes 0..N-1
        N = self.N
        self.sup = {}
        for kind in ("l_dqreg", "l_areg", "l_xiref", "l_xicap", "l_qcap",
                     "g_qdotlim"):
            msk = np.zeros(N, dtype=bool)
            t = nlp.term(kind)
            msk[list(t.support)] = True
            self.sup[kind] = msk
        self.w = nlp.weights

        self.x_is = x_is
        self.init_mask = init_mask if init_mask is not None else np.ones(self.nx, dtype=bool)

        self.track_position = nlp.tracking_mode == "position"
        self.has_wheels = any(c.wheel_radius > 0 for c in m.contacts)

    def capture_phase_anchors(self, Q, DQ):
        """Anchor new flight phases at the warm start's predicted foot height
        so the position swing reference lands on the internal stance level."""
        if not self._phase_refs_pending:
            return
        P, _ = rbd.contact_point_kinematics(self.model, Q, DQ)
        for f, tl in enumerate(self.plan.timelines):
            for ph in tl.flights:
                if ph.anchor is None:
                    ph.anchor = float(P[min(ph.d, self.N), f, 2])
                    hi = min(ph.end, self.N)
                    self.pref[f, ph.d:hi] = ph.anchor + ph.p_ref[: hi - ph.d]
        self._phase_refs_pending = False

    # ------------------------------------------------------------- manifold

    def x_add(self, q, dq, dx):
        return rbd.state_add(self.model, q, dq, dx)

    def x_diff(self, qa, dqa, qb, dqb):
        return rbd.state_difference(self.model, qa, dqa, qb, dqb)

    def enforce_input_mask(self, U):
        """Structural h_liftoff elimination plus warm-start force rebalance.

        Zeroing a newly-flighted foot's forces would leave the warm start
        grossly force-infeasible (h_dyn residual ~ mg/n_c per node), which
        makes the first RTI step wild; the removed normal force is handed to
        the remaining stance feet so the guess stays near balance."""
        nv, nc = self.nv, self.nc
        z_cols = nv + 2 + 3 * np.arange(nc)
        stance = self.contact.T  # (N, nc)
        lam_z = U[:, z_cols]
        removed = np.where(~stance, lam_z, 0.0).sum(axis=1)
        n_stance = stance.sum(axis=1)
        share = np.where(n_stance > 0, removed / np.maximum(n_stance, 1), 0.0)
        U[:, z_cols] = lam_z + np.where(stance, share[:, None], 0.0)
        U[~self.input_active] = 0.0

    def x0_rule(self, q0, dq0):
        """(mask, full-tangent target) for the first-node update."""
        if self.x_is is None:
            return np.zeros(self.nx, dtype=bool), np.zeros(self.nx)
        target = rbd.state_difference(self.model, q0, dq0, self.x_is[0], self.x_is[1])
        return self.init_mask, target

    # ------------------------------------------------------------ evaluation

    def _defects(self, Q, DQ, U):
        """Integrator residual f(x_i, u_i) (-) x_{i+1} per interval."""
        qn, dqn = rbd.integrate_state(self.model, Q[:-1], DQ[:-1], U[:, :self.nv], self.dt)
        return rbd.state_difference(self.model, Q[1:], DQ[1:], qn, dqn)

    def evaluate(self, Q, DQ, U):
        """Catalog cost, equality 1-norm, barrier violation sum, defects."""
        defects = self._defects(Q, DQ, U)
        lam = U[:, self.nv:].reshape(self.N, self.nc, 3)
        tau = rbd.inverse_dynamics(self.model, Q[:-1], DQ[:-1], U[:, :self.nv], lam)
        P, V = rbd.contact_point_kinematics(self.model, Q[:-1], DQ[:-1])
        return self._eval_core(Q, DQ, U, defects, tau[:, :6], P, V)

    def _eval_core(self, Q, DQ, U, defects, h_dyn, P, V):
        m = self.model
        N, nv, nc = self.N, self.nv, self.nc
        w = self.w
        ddq = U[:, :nv]
        lam = U[:, nv:].reshape(N, nc, 3)
        if self.has_wheels:
            RV = self._rolling_all(Q[:-1], DQ[:-1])

        cmask = self.contact.T  # (N, nc)
        fmask = ~cmask

        cost = {}
        # regularizers / tracking / captures
        cost["l_dqreg"] = w["l_dqreg"] * float((DQ[:-1][self.sup["l_dqreg"]] ** 2).sum())
        cost["l_areg"] = w["l_areg"] * float((ddq[self.sup["l_areg"]] ** 2).sum())
        r = DQ[:-1][self.sup["l_xiref"], :6] - self.nlp.xi_mpc
        cost["l_xiref"] = w["l_xiref"] * float((r * r).sum())
        cost["l_xicap"] = w["l_xicap"] * float((DQ[:-1][self.sup["l_xicap"], :6] ** 2).sum())
        rq = Q[:-1][self.sup["l_qcap"], 7:] - self.nlp.q_hat
        cost["l_qcap"] = w["l_qcap"] * float((rq * rq).sum())
        # force regularization on contact (node, foot) pairs
        rl = lam - self.lam_target
        cost["l_lambda"] = w["l_lambda"] * float((rl[cmask] ** 2).sum())
        # swing tracking on flight pairs
        vz = V[:, :, 2]
        if self.track_position:
            rp = P[:, :, 2] - self.pref.T
            cost["l_pz"] = w["l_pz"] * float((rp[fmask] ** 2).sum())
            cost["l_vz"] = 0.0
        else:
            rv = vz - self.vref.T
            cost["l_vz"] = w["l_vz"] * float((rv[fmask] ** 2).sum())
            cost["l_pz"] = 0.0
        if w["l_vert"] > 0:
            td = self.touchdown.T
            cost["l_vert"] = w["l_vert"] * float((V[td][:, :2] ** 2).sum())
        else:
            cost["l_vert"] = 0.0
        if w["l_eeori"] > 0:
            cost["l_eeori"] = self._eeori_cost(Q)
        else:
            cost["l_eeori"] = 0.0

        # barriers
        viol_uni = np.maximum(0.0, -lam[:, :, 2][cmask])
        t = np.hypot(lam[:, :, 0], lam[:, :, 1])
        viol_fr = np.maximum(0.0, (t - m.friction * lam[:, :, 2])[cmask])
        dqj = DQ[:-1][self.sup["g_qdotlim"], 6:]
        ub = m.velocity_limits
        viol_lim = np.concatenate([np.maximum(0.0, dqj - ub).ravel(),
                                   np.maximum(0.0, -ub - dqj).ravel()])
        cost["g_uni"] = w["g_uni"] * float((viol_uni ** 2).sum())
        cost["g_fr"] = w["g_fr"] * float((viol_fr ** 2).sum())
        cost["g_qdotlim"] = w["g_qdotlim"] * float((viol_lim ** 2).sum())
        barrier = float(viol_uni.sum() + viol_fr.sum() + viol_lim.sum())

        # equality residual norms (1-norm for health, squared for the merit)
        h_pc = V[cmask & ~self.plan_wheel_mask()] if self.has_wheels else V[cmask]
        h1 = float(np.abs(defects).sum() + np.abs(h_dyn).sum() + np.abs(h_pc).sum())
        hsq = float((defects ** 2).sum() + (h_dyn ** 2).sum() + (h_pc ** 2).sum())
        if self.has_wheels:
            rc = RV[cmask & self.plan_wheel_mask()]
            h1 += float(np.abs(rc).sum())
            hsq += float((rc ** 2).sum())
        if self.x_is is not None:
            r0 = rbd.state_difference(self.model, self.x_is[0], self.x_is[1], Q[0], DQ[0])
            r0 = r0[self.init_mask]
            h1 += float(np.abs(r0).sum())
            hsq += float((r0 ** 2).sum())

        total = float(sum(cost.values()))
        return EvalResult(total, h1, hsq, barrier, defects, cost)

    def plan_wheel_mask(self):
        wheel = np.array([c.wheel_radius > 0 for c in self.model.contacts])
        return np.broadcast_to(wheel, (self.N, self.nc))

    def _rolling_all(self, Q, DQ):
        out = np.zeros((Q.shape[0], self.nc, 3))
        for f, c in enumerate(self.model.contacts):
            if c.wheel_radius > 0:
                out[:, f] = rbd.rolling_contact_velocity(self.model, Q, DQ, f)
        return out

    def _eeori_cost(self, Q):
        R, _, _, _ = rbd.link_states(self.model, Q[:-1], np.zeros((self.N, self.nv)))
        total = 0.0
        for f, c in enumerate(self.model.contacts):
            z = R[:, c.link, :, 2]
            rr = z - np.array([0.0, 0.0, 1.0])
            total += float((rr * rr).sum())
        return self.w["l_eeori"] * total

    def merit(self, Q, DQ, U):
        """Line-search merit: the Gauss-Newton penalty objective."""
        ev = self.evaluate(Q, DQ, U)
        return ev.cost + self.kappa_eq * ev.hsq, ev

    def linearize_fused(self, Q, DQ, U):
        """Linearize and evaluate the same point in one pass (the nominal
        physics rows of the FD batches double as the merit evaluation)."""
        lin = self.linearize(Q, DQ, U)
        ev = self._lin_eval
        return lin, ev.cost + self.kappa_eq * ev.hsq, ev

    # ---------------------------------------------------------- linearization

    def _dynamics_jacobians(self, Q, DQ, U):
        """A (N,nx,nx), B (N,nx,nu) of the integrator by central differences."""
        m, N, nv, nx = self.model, self.N, self.nv, self.nx
        eps = _FD_EPS
        Qb, DQb, DDQ = Q[:-1], DQ[:-1], U[:, :nv]
        f0q, f0dq = rbd.integrate_state(m, Qb, DQb, DDQ, self.dt)

        # state perturbations: (2*nx, N, ...) batch
        E = np.eye(nx)
        dX = np.concatenate([eps * E, -eps * E])[:, None, :]  # (2nx,1,nx)
        Qp, DQp = rbd.state_add(m, Qb[None], DQb[None], dX)
        fq, fdq = rbd.integrate_state(m, Qp, DQp, DDQ[None], self.dt)
        D = rbd.state_difference(m, f0q[None], f0dq[None], fq, fdq)  # (2nx,N,nx)
        A = (D[:nx] - D[nx:]) / (2 * eps)          # (nx,N,nx)
        A = np.ascontiguousarray(A.transpose(1, 2, 0))

        Ed = np.eye(nv)
        dU = np.concatenate([eps * Ed, -eps * Ed])[:, None, :]
        fq2, fdq2 = rbd.integrate_state(m, Qb[None], DQb[None], DDQ[None] + dU, self.dt)
        D2 = rbd.state_difference(m, f0q[None], f0dq[None], fq2, fdq2)
        Bd = (D2[:nv] - D2[nv:]) / (2 * eps)        # (nv,N,nx)
        B = np.zeros((N, nx, self.nu))
        B[:, :, :nv] = Bd.transpose(1, 2, 0)
        return A, B

    def _dyn_residual_jacobians(self, Q, DQ, U):
        """h_dyn value and Jacobians w.r.t. (x-tangent, u) per node."""
        m, N, nv = self.model, self.N, self.nv
        eps = _FD_EPS
        Qb, DQb = Q[:-1], DQ[:-1]
        ddq = U[:, :nv]
        lam = U[:, nv:].reshape(N, self.nc, 3)

        # batch layout per node: [nominal | +q | -q | +dq | -dq | ddq-cols]
        rows = 1 + 4 * nv + nv
        E = np.eye(nv)[:, None, :]  # (nv, 1, nv) broadcasts against (N, .)
        Qs = np.empty((rows, N, m.n_q))
        DQs = np.empty((rows, N, nv))
        DDQs = np.empty((rows, N, nv))
        Qs[:] = Qb
        DQs[:] = DQb
        DDQs[:] = ddq
        Qs[1:1 + nv] = rbd.config_add(m, Qb[None], eps * E)
        Qs[1 + nv:1 + 2 * nv] = rbd.config_add(m, Qb[None], -eps * E)
        DQs[1 + 2 * nv:1 + 3 * nv] = DQb[None] + eps * E
        DQs[1 + 3 * nv:1 + 4 * nv] = DQb[None] - eps * E
        DDQs[1 + 4 * nv:] = ddq[None] + E  # exact: rnea linear in ddq
        LAMs = np.broadcast_to(lam, (rows, N, self.nc, 3)).reshape(-1, self.nc, 3)
        tau = rbd.inverse_dynamics(m, Qs.reshape(-1, m.n_q), DQs.reshape(-1, nv),
                                   DDQs.reshape(-1, nv), LAMs)
        tau = tau.reshape(rows, N, nv)[:, :, :6]
        h0 = tau[0]
        Jq = (tau[1:1 + nv] - tau[1 + nv:1 + 2 * nv]) / (2 * eps)
        Jdq = (tau[1 + 2 * nv:1 + 3 * nv] - tau[1 + 3 * nv:1 + 4 * nv]) / (2 * eps)
        Jddq = tau[1 + 4 * nv:] - tau[0]
        Jx = np.concatenate([Jq, Jdq]).transpose(1, 2, 0)       # (N,6,nx)
        Ju = np.zeros((N, 6, self.nu))
        Ju[:, :, :nv] = Jddq.transpose(1, 2, 0)
        J = rbd.contact_jacobians(m, Qb)                        # (N,nc,3,nv)
        for f in range(self.nc):
            Ju[:, :, nv + 3 * f:nv + 3 * f + 3] = -J[:, f, :, :6].transpose(0, 2, 1)
        return h0, Jx, Ju, J

    def _contact_kin_jacobians(self, Q, DQ, Jc):
        """p_c, v_c and their q-tangent Jacobians by central differences."""
        m, N, nv = self.model, self.N, self.nv
        eps = _FD_EPS
        Qb, DQb = Q[:-1], DQ[:-1]
        rows = 1 + 2 * nv
        E = np.eye(nv)[:, None, :]
        Qs = np.empty((rows, N, m.n_q))
        DQs = np.empty((rows, N, nv))
        Qs[0] = Qb
        DQs[:] = DQb
        Qs[1:1 + nv] = rbd.config_add(m, Qb[None], eps * E)
        Qs[1 + nv:] = rbd.config_add(m, Qb[None], -eps * E)
        P, V = rbd.contact_point_kinematics(m, Qs.reshape(-1, m.n_q), DQs.reshape(-1, nv))
        P = P.reshape(rows, N, self.nc, 3)
        V = V.reshape(rows, N, self.nc, 3)
        dPdq = (P[1:1 + nv] - P[1 + nv:]) / (2 * eps)  # (nv,N,nc,3)
        dVdq = (V[1:1 + nv] - V[1 + nv:]) / (2 * eps)
        return (P[0], V[0],
                np.ascontiguousarray(dPdq.transpose(1, 2, 3, 0)),
                np.ascontiguousarray(dVdq.transpose(1, 2, 3, 0)))

    def linearize(self, Q, DQ, U):
        """Full RTI linearization: dynamics, penalties, barriers, costs."""
        m, N, nv, nx, nu, nc = self.model, self.N, self.nv, self.nx, self.nu, self.nc
        w, keq = self.w, self.kappa_eq

        A, B = self._dynamics_jacobians(Q, DQ, U)
        defects = self._defects(Q, DQ, U)
        h0, Jx_dyn, Ju_dyn, Jc = self._dyn_residual_jacobians(Q, DQ, U)
        P, V, dPdq, dVdq = self._contact_kin_jacobians(Q, DQ, Jc)
        self._lin_eval = self._eval_core(Q, DQ, U, defects, h0, P, V)

        gx = np.zeros((N + 1, nx))
        gu = np.zeros((N, nu))
        Hxx = np.zeros((N + 1, nx, nx))
        Huu = np.zeros((N, nu, nu))
        Hxu = np.zeros((N, nx, nu))

        ddq = U[:, :nv]
        lam = U[:, nv:].reshape(N, nc, 3)
        idx = np.arange(N)

        # h_dyn penalty (Gauss-Newton)
        JxT = Jx_dyn.transpose(0, 2, 1)
        JuT = Ju_dyn.transpose(0, 2, 1)
        gx[:-1] += 2 * keq * (JxT @ h0[:, :, None])[:, :, 0]
        gu += 2 * keq * (JuT @ h0[:, :, None])[:, :, 0]
        Hxx[:-1] += 2 * keq * (JxT @ Jx_dyn)
        Huu += 2 * keq * (JuT @ Ju_dyn)
        Hxu += 2 * keq * (JxT @ Ju_dyn)

        # per-foot phase terms
        wheel = [c.wheel_radius > 0 for c in m.contacts]
        for f in range(nc):
            cn = idx[self.contact[f]]
            fn = idx[~self.contact[f]]
            # no-slip residual on contact nodes (Gauss-Newton penalty)
            if cn.size and not wheel[f]:
                Jfx = np.zeros((cn.size, 3, nx))
                Jfx[:, :, :nv] = dVdq[cn, f]
                Jfx[:, :, nv:] = Jc[cn, f]
                r = V[cn, f]
                JfT = Jfx.transpose(0, 2, 1)
                gx[cn] += 2 * keq * (JfT @ r[:, :, None])[:, :, 0]
                Hxx[cn] += 2 * keq * (JfT @ Jfx)
            elif cn.size:
                rr, Jrx = self._rolling_jacobian(Q, DQ, f, cn)
                gx[cn] += 2 * keq * np.einsum("nri,nr->ni", Jrx, rr)
                Hxx[cn] += 2 * keq * np.einsum("nri,nrj->nij", Jrx, Jrx)
            # force regularization on contact nodes
            cols = slice(nv + 3 * f, nv + 3 * f + 3)
            if cn.size:
                rl = lam[cn, f] - self.lam_target[cn, f]
                gu[cn, cols] += 2 * w["l_lambda"] * rl
                Huu[cn, cols, cols] += 2 * w["l_lambda"] * np.broadcast_to(np.eye(3), (cn.size, 3, 3))
                # unilaterality barrier
                zi = nv + 3 * f + 2
                act = cn[lam[cn, f, 2] < 0]
                if act.size:
                    gu[act, zi] += 2 * w["g_uni"] * lam[act, f, 2]
                    Huu[act, zi, zi] += 2 * w["g_uni"]
                # friction cone barrier
                t = np.hypot(lam[cn, f, 0], lam[cn, f, 1])
                viol = t - m.friction * lam[cn, f, 2]
                act = cn[viol > 0]
                if act.size:
                    ta = np.maximum(np.hypot(lam[act, f, 0], lam[act, f, 1]), 1e-12)
                    g_row = np.stack([lam[act, f, 0] / ta, lam[act, f, 1] / ta,
                                      -m.friction * np.ones(act.size)], axis=1)
                    va = ta - m.friction * lam[act, f, 2]
                    gu[act, cols] += 2 * w["g_fr"] * va[:, None] * g_row
                    Huu[act, cols, cols] += 2 * w["g_fr"] * np.einsum("ni,nj->nij", g_row, g_row)
            # swing tracking on flight nodes
            if fn.size:
                if self.track_position:
                    r = P[fn, f, 2] - self.pref[f, fn]
                    Jr = np.zeros((fn.size, nx))
                    Jr[:, :nv] = dPdq[fn, f, 2]
                    wt = w["l_pz"]
                else:
                    r = V[fn, f, 2] - self.vref[f, fn]
                    Jr = np.zeros((fn.size, nx))
                    Jr[:, :nv] = dVdq[fn, f, 2]
                    Jr[:, nv:] = Jc[fn, f, 2]
                    wt = w["l_vz"]
                gx[fn] += 2 * wt * r[:, None] * Jr
                Hxx[fn] += 2 * wt * np.einsum("ni,nj->nij", Jr, Jr)
            if w["l_vert"] > 0:
                tn = idx[self.touchdown[f]]
                if tn.size:
                    Jtx = np.zeros((tn.size, 2, nx))
                    Jtx[:, :, :nv] = dVdq[tn, f, :2]
                    Jtx[:, :, nv:] = Jc[tn, f, :2]
                    r2 = V[tn, f, :2]
                    gx[tn] += 2 * w["l_vert"] * np.einsum("nri,nr->ni", Jtx, r2)
                    Hxx[tn] += 2 * w["l_vert"] * np.einsum("nri,nrj->nij", Jtx, Jtx)

        # simple quadratic costs (exact)
        sl = self.sup["l_dqreg"]
        gx[:-1][sl, nv:] += 2 * w["l_dqreg"] * DQ[:-1][sl]
        Hxx[:-1][sl, nv:, nv:] += 2 * w["l_dqreg"] * np.eye(nv)
        sl = self.sup["l_areg"]
        gu[sl, :nv] += 2 * w["l_areg"] * ddq[sl]
        Huu[sl, :nv, :nv] += 2 * w["l_areg"] * np.eye(nv)
        sl = self.sup["l_xiref"]
        gx[:-1][sl, nv:nv + 6] += 2 * w["l_xiref"] * (DQ[:-1][sl, :6] - self.nlp.xi_mpc)
        Hxx[:-1][sl, nv:nv + 6, nv:nv + 6] += 2 * w["l_xiref"] * np.eye(6)
        sl = self.sup["l_xicap"]
        gx[:-1][sl, nv:nv + 6] += 2 * w["l_xicap"] * DQ[:-1][sl, :6]
        Hxx[:-1][sl, nv:nv + 6, nv:nv + 6] += 2 * w["l_xicap"] * np.eye(6)
        sl = self.sup["l_qcap"]
        njnt = m.n_jnt
        gx[:-1][sl, 6:6 + njnt] += 2 * w["l_qcap"] * (Q[:-1][sl, 7:] - self.nlp.q_hat)
        Hxx[:-1][sl, 6:6 + njnt, 6:6 + njnt] += 2 * w["l_qcap"] * np.eye(njnt)
        # joint velocity-limit barrier
        sl = self.sup["g_qdotlim"]
        ub = m.velocity_limits
        up = np.maximum(0.0, DQ[:-1][:, 6:] - ub) * sl[:, None]
        dn = np.maximum(0.0, -ub - DQ[:-1][:, 6:]) * sl[:, None]
        gx[:-1][:, nv + 6:] += 2 * w["g_qdotlim"] * (up - dn)
        diag = 2 * w["g_qdotlim"] * ((up > 0) | (dn > 0))
        for jj in range(njnt):
            Hxx[:-1][:, nv + 6 + jj, nv + 6 + jj] += diag[:, jj]

        return LinData(A, B, gx, gu, Hxx, Huu, Hxu, defects, self.input_active)

    def _rolling_jacobian(self, Q, DQ, f, nodes, eps=_FD_EPS):
        """Rolling residual and q/dq-tangent Jacobian on selected nodes (FD)."""
        m, nv, nx = self.model, self.nv, self.nx
        Qb, DQb = Q[:-1][nodes], DQ[:-1][nodes]
        r0 = rbd.rolling_contact_velocity(m, Qb, DQb, f)
        J = np.zeros((nodes.size, 3, nx))
        E = np.eye(nv)
        for k in range(nv):
            rp = rbd.rolling_contact_velocity(m, rbd.config_add(m, Qb, eps * E[k]), DQb, f)
            rm = rbd.rolling_contact_velocity(m, rbd.config_add(m, Qb, -eps * E[k]), DQb, f)
            J[:, :, k] = (rp - rm) / (2 * eps)
            rp = rbd.rolling_contact_velocity(m, Qb, DQb + eps * E[k], f)
            rm = rbd.rolling_contact_velocity(m, Qb, DQb - eps * E[k], f)
            J[:, :, nv + k] = (rp - rm) / (2 * eps)
        return r0, J


@dataclass
class LinData:
    A: np.ndarray
    B: np.ndarray
    gx: np.ndarray
    gu: np.ndarray
    Hxx: np.ndarray
    Huu: np.ndarray
    Hxu: np.ndarray
    defects: np.ndarray
    active: np.ndarray
