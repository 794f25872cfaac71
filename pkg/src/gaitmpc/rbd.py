"""Floating-base rigid-body kinematics and inverse dynamics for tree robots.

Conventions used throughout the package:
  q  = [p_base (3), quaternion wxyz (4), joint angles]          dim n_q
  dq = [v_base (3), omega_base (3), joint rates]                 dim n_v
with the base linear/angular velocity expressed in the base body frame
(full-orientation alignment).  Generalized efforts are dual to dq, so the
floating-base rows of tau are the net base wrench in body coordinates.

All dynamics/kinematics entry points accept either a single sample
(shape (n,)) or a batch (shape (B, n)); the heavy per-link recursions run
in numba kernels so that finite-difference linearization stays cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

FLOATING = 0
REVOLUTE = 1
FIXED = 2

_JOINT_NAMES = {"floating": FLOATING, "revolute": REVOLUTE, "fixed": FIXED}


class ModelError(ValueError):
    """Robot description is malformed or violates a model invariant."""

    def __init__(self, msg, line=None):
        self.line = line
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


# ---------------------------------------------------------------------------
# quaternion / rotation helpers (wxyz convention, vectorized over leading axes)
# ---------------------------------------------------------------------------

def quat_normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q):
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_to_rot(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_exp_map(w):
    """Rotation-vector exponential map, series-guarded near zero."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w, axis=-1, keepdims=True)
    half = 0.5 * th
    small = th < 1e-8
    # sin(th/2)/th with series fallback
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(small, 0.5 - th * th / 48.0, np.sin(half) / np.where(small, 1.0, th))
    qw = np.cos(half)
    return np.concatenate([qw, k * w], axis=-1)


def quat_log_map(q):
    """Rotation vector of a unit quaternion (shortest arc)."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., 0:1] < 0.0, -q, q)
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    w = q[..., 0:1]
    ang = 2.0 * np.arctan2(s, w)
    small = s < 1e-9
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(small, 2.0 / np.clip(w, 1e-12, None), ang / np.where(small, 1.0, s))
    return k * v


def rotate(q, v):
    """Rotate vectors v by quaternions q (direct formula, no matrices)."""
    qv = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def rpy_to_rot(r, p, y):
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def yaw_quat(yaw):
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


# ---------------------------------------------------------------------------
# model containers
# ---------------------------------------------------------------------------

@dataclass
class Link:
    name: str
    mass: float
    inertia: np.ndarray  # 3x3 about the com, link axes
    com: np.ndarray  # com offset in the link frame
    parent: int  # -1 for root
    joint_type: int
    axis: np.ndarray
    offset_pos: np.ndarray  # parent frame -> joint frame translation
    offset_rot: np.ndarray  # parent frame -> joint frame rotation
    joint_index: int  # index into joint coordinates, -1 if none
    velocity_limit: float = 30.0


@dataclass
class ContactFrame:
    name: str
    link: int
    offset: np.ndarray
    wheel_radius: float = 0.0  # 0 -> point contact
    wheel_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))


@dataclass
class RobotModel:
    name: str
    links: list
    contacts: list
    gravity: float
    friction: float

    def __post_init__(self):
        L = len(self.links)
        self.n_links = L
        self.n_jnt = sum(1 for l in self.links if l.joint_type == REVOLUTE)
        self.n_q = 7 + self.n_jnt
        self.n_v = 6 + self.n_jnt
        self.n_c = len(self.contacts)
        self.n_u = self.n_v + 3 * self.n_c
        self.mass = float(sum(l.mass for l in self.links))
        # flat arrays for the kernels
        self._parent = np.array([l.parent for l in self.links], dtype=np.int64)
        self._jtype = np.array([l.joint_type for l in self.links], dtype=np.int64)
        self._axis = np.array([l.axis for l in self.links])
        self._off_p = np.array([l.offset_pos for l in self.links])
        self._off_R = np.array([l.offset_rot for l in self.links])
        self._mass = np.array([l.mass for l in self.links])
        self._com = np.array([l.com for l in self.links])
        self._inertia = np.array([l.inertia for l in self.links])
        self._jof = np.array([l.joint_index for l in self.links], dtype=np.int64)
        self._clink = np.array([c.link for c in self.contacts], dtype=np.int64)
        self._coff = np.array([c.offset for c in self.contacts])
        self._wheel_r = np.array([c.wheel_radius for c in self.contacts])
        self._wheel_ax = np.array([c.wheel_axis for c in self.contacts])
        vl = np.full(self.n_jnt, 30.0)
        for l in self.links:
            if l.joint_index >= 0:
                vl[l.joint_index] = l.velocity_limit
        self.velocity_limits = vl
        # joints on the path root -> contact link, per contact
        mask = np.zeros((self.n_c, self.n_jnt), dtype=np.bool_)
        for c_i, c in enumerate(self.contacts):
            k = c.link
            while k > 0:
                if self.links[k].joint_index >= 0:
                    mask[c_i, self.links[k].joint_index] = True
                k = self.links[k].parent
        self._path_mask = mask

    def neutral_q(self):
        q = np.zeros(self.n_q)
        q[3] = 1.0
        return q

    def _kernel_args(self):
        return (
            self._parent, self._jtype, self._axis, self._off_p, self._off_R,
            self._mass, self._com, self._inertia, self._jof,
        )


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _q2r(w, x, y, z, R):
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True, inline="always")
def _mm33(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(cache=True, inline="always")
def _mv33(A, v, out):
    for i in range(3):
        out[i] = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2]


@njit(cache=True, inline="always")
def _mtv33(A, v, out):
    for i in range(3):
        out[i] = A[0, i] * v[0] + A[1, i] * v[1] + A[2, i] * v[2]


@njit(cache=True, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True, inline="always")
def _rot_axis(ax, th, R):
    c = np.cos(th)
    s = np.sin(th)
    one_c = 1.0 - c
    x, y, z = ax[0], ax[1], ax[2]
    R[0, 0] = c + x * x * one_c
    R[0, 1] = x * y * one_c - z * s
    R[0, 2] = x * z * one_c + y * s
    R[1, 0] = y * x * one_c + z * s
    R[1, 1] = c + y * y * one_c
    R[1, 2] = y * z * one_c - x * s
    R[2, 0] = z * x * one_c - y * s
    R[2, 1] = z * y * one_c + x * s
    R[2, 2] = c + z * z * one_c


@njit(cache=True)
def _fk_pass(parent, jtype, axis, off_p, off_R, jof, q, dq,
             R, p, w, v, s_ax):
    """Position/velocity recursion for one sample; fills per-link arrays."""
    L = parent.shape[0]
    Rtmp = np.empty((3, 3))
    Rj = np.empty((3, 3))
    r_po = np.empty(3)
    tmp = np.empty(3)
    _q2r(q[3], q[4], q[5], q[6], R[0])
    p[0, 0] = q[0]
    p[0, 1] = q[1]
    p[0, 2] = q[2]
    _mv33(R[0], dq[3:6], w[0])
    _mv33(R[0], dq[0:3], v[0])
    for i in range(1, L):
        pa = parent[i]
        _mm33(R[pa], off_R[i], Rtmp)
        _mv33(R[pa], off_p[i], r_po)
        for k in range(3):
            p[i, k] = p[pa, k] + r_po[k]
        if jtype[i] == 1:  # revolute
            j = jof[i]
            _rot_axis(axis[i], q[7 + j], Rj)
            _mm33(Rtmp, Rj, R[i])
            _mv33(R[i], axis[i], s_ax[i])
            thd = dq[6 + j]
            for k in range(3):
                w[i, k] = w[pa, k] + s_ax[i, k] * thd
        else:
            for a in range(3):
                for bcol in range(3):
                    R[i, a, bcol] = Rtmp[a, bcol]
            for k in range(3):
                s_ax[i, k] = 0.0
                w[i, k] = w[pa, k]
        _cross(w[pa], r_po, tmp)
        for k in range(3):
            v[i, k] = v[pa, k] + tmp[k]


@njit(cache=True)
def _rnea_batch(parent, jtype, axis, off_p, off_R, mass, com, inertia, jof,
                clink, coff, wheel_r,
                Q, DQ, DDQ, LAM, g, out):
    B = Q.shape[0]
    L = parent.shape[0]
    nc = clink.shape[0]
    R = np.empty((L, 3, 3))
    p = np.empty((L, 3))
    w = np.empty((L, 3))
    v = np.empty((L, 3))
    al = np.empty((L, 3))
    ac = np.empty((L, 3))
    fa = np.empty((L, 3))
    na = np.empty((L, 3))
    s_ax = np.empty((L, 3))
    Iw = np.empty((3, 3))
    M1 = np.empty((3, 3))
    t1 = np.empty(3)
    t2 = np.empty(3)
    t3 = np.empty(3)
    cw = np.empty(3)
    for b in range(B):
        q = Q[b]
        dq = DQ[b]
        ddq = DDQ[b]
        _fk_pass(parent, jtype, axis, off_p, off_R, jof, q, dq, R, p, w, v, s_ax)
        # base accelerations: world alpha = R0 @ dwb, world a = R0 @ dvb + w0 x v0
        _mv33(R[0], ddq[3:6], al[0])
        _mv33(R[0], ddq[0:3], t1)
        _cross(w[0], v[0], t2)
        for k in range(3):
            ac[0, k] = t1[k] + t2[k]
        for i in range(1, L):
            pa = parent[i]
            _mv33(R[pa], off_p[i], t1)  # r_po world
            _cross(al[pa], t1, t2)
            _cross(w[pa], t1, t3)
            _cross(w[pa], t3, t1)  # w x (w x r)
            for k in range(3):
                ac[i, k] = ac[pa, k] + t2[k] + t1[k]
            if jtype[i] == 1:
                j = jof[i]
                thd = dq[6 + j]
                thdd = ddq[6 + j]
                _cross(w[pa], s_ax[i], t2)
                for k in range(3):
                    al[i, k] = al[pa, k] + s_ax[i, k] * thdd + t2[k] * thd
            else:
                for k in range(3):
                    al[i, k] = al[pa, k]
        # inertial wrenches
        for i in range(L):
            _mv33(R[i], com[i], cw)
            _cross(al[i], cw, t1)
            _cross(w[i], cw, t2)
            _cross(w[i], t2, t3)
            # a_com - gravity
            t1[0] = ac[i, 0] + t1[0] + t3[0]
            t1[1] = ac[i, 1] + t1[1] + t3[1]
            t1[2] = ac[i, 2] + t1[2] + t3[2] + g
            for k in range(3):
                fa[i, k] = mass[i] * t1[k]
            _mm33(R[i], inertia[i], M1)
            # Iw = M1 @ R^T
            for a in range(3):
                for bb in range(3):
                    Iw[a, bb] = M1[a, 0] * R[i, bb, 0] + M1[a, 1] * R[i, bb, 1] + M1[a, 2] * R[i, bb, 2]
            _mv33(Iw, al[i], t2)
            _mv33(Iw, w[i], t3)
            _cross(w[i], t3, t1)
            for k in range(3):
                na[i, k] = t2[k] + t1[k]
            _cross(cw, fa[i], t2)
            for k in range(3):
                na[i, k] += t2[k]
        # external contact forces
        for c in range(nc):
            li = clink[c]
            _mv33(R[li], coff[c], t1)
            # world lever arm from link origin to the contact point
            t1[2] -= wheel_r[c]
            _cross(t1, LAM[b, c], t2)
            for k in range(3):
                fa[li, k] -= LAM[b, c, k]
                na[li, k] -= t2[k]
        # backward accumulation
        for i in range(L - 1, 0, -1):
            pa = parent[i]
            for k in range(3):
                t1[k] = p[i, k] - p[pa, k]
            _cross(t1, fa[i], t2)
            for k in range(3):
                fa[pa, k] += fa[i, k]
                na[pa, k] += na[i, k] + t2[k]
            if jtype[i] == 1:
                out[b, 6 + jof[i]] = s_ax[i, 0] * na[i, 0] + s_ax[i, 1] * na[i, 1] + s_ax[i, 2] * na[i, 2]
        _mtv33(R[0], fa[0], t1)
        _mtv33(R[0], na[0], t2)
        for k in range(3):
            out[b, k] = t1[k]
            out[b, 3 + k] = t2[k]


@njit(cache=True)
def _contact_kin_batch(parent, jtype, axis, off_p, off_R, jof,
                       clink, coff, Q, DQ, P, V):
    """World position/velocity of the (material) contact-frame points."""
    B = Q.shape[0]
    L = parent.shape[0]
    nc = clink.shape[0]
    R = np.empty((L, 3, 3))
    p = np.empty((L, 3))
    w = np.empty((L, 3))
    v = np.empty((L, 3))
    s_ax = np.empty((L, 3))
    t1 = np.empty(3)
    t2 = np.empty(3)
    for b in range(B):
        _fk_pass(parent, jtype, axis, off_p, off_R, jof, Q[b], DQ[b], R, p, w, v, s_ax)
        for c in range(nc):
            li = clink[c]
            _mv33(R[li], coff[c], t1)
            _cross(w[li], t1, t2)
            for k in range(3):
                P[b, c, k] = p[li, k] + t1[k]
                V[b, c, k] = v[li, k] + t2[k]


@njit(cache=True)
def _link_state_batch(parent, jtype, axis, off_p, off_R, jof,
                      Q, DQ, Rout, pout, wout, vout):
    B = Q.shape[0]
    L = parent.shape[0]
    s_ax = np.empty((L, 3))
    for b in range(B):
        _fk_pass(parent, jtype, axis, off_p, off_R, jof, Q[b], DQ[b],
                 Rout[b], pout[b], wout[b], vout[b], s_ax)


@njit(cache=True)
def _contact_jac_batch(parent, jtype, axis, off_p, off_R, jof,
                       clink, coff, wheel_r, path_mask, Q, J):
    """Point-velocity Jacobian of each contact point w.r.t. dq (world frame)."""
    B = Q.shape[0]
    L = parent.shape[0]
    nc = clink.shape[0]
    njnt = path_mask.shape[1]
    R = np.empty((L, 3, 3))
    p = np.empty((L, 3))
    w = np.empty((L, 3))
    v = np.empty((L, 3))
    s_ax = np.empty((L, 3))
    dq0 = np.zeros(6 + njnt)
    t1 = np.empty(3)
    t2 = np.empty(3)
    pc = np.empty(3)
    for b in range(B):
        _fk_pass(parent, jtype, axis, off_p, off_R, jof, Q[b], dq0, R, p, w, v, s_ax)
        for c in range(nc):
            li = clink[c]
            _mv33(R[li], coff[c], t1)
            for k in range(3):
                pc[k] = p[li, k] + t1[k]
            pc[2] -= wheel_r[c]
            # base linear: R0; base angular: -[pc - p0]x R0
            for row in range(3):
                for col in range(3):
                    J[b, c, row, col] = R[0, row, col]
            for k in range(3):
                t1[k] = pc[k] - p[0, k]
            for col in range(3):
                # column = (R0 e_col) contribution: w x (pc - p0) with w = R0 e_col
                t2[0] = R[0, 0, col]
                t2[1] = R[0, 1, col]
                t2[2] = R[0, 2, col]
                J[b, c, 0, 3 + col] = t2[1] * t1[2] - t2[2] * t1[1]
                J[b, c, 1, 3 + col] = t2[2] * t1[0] - t2[0] * t1[2]
                J[b, c, 2, 3 + col] = t2[0] * t1[1] - t2[1] * t1[0]
            for i in range(1, L):
                j = jof[i]
                if j >= 0 and path_mask[c, j]:
                    for k in range(3):
                        t1[k] = pc[k] - p[i, k]
                    _cross(s_ax[i], t1, t2)
                    for k in range(3):
                        J[b, c, k, 6 + j] = t2[k]
                elif j >= 0:
                    for k in range(3):
                        J[b, c, k, 6 + j] = 0.0


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _as_batch(*arrays):
    """Promote (n,) arrays to (1, n); returns (batched, was_single)."""
    single = arrays[0].ndim == 1
    if single:
        return [np.ascontiguousarray(a[None]) for a in arrays], True
    return [np.ascontiguousarray(a) for a in arrays], False


def inverse_dynamics(model, q, dq, ddq, lam=None):
    """Generalized efforts tau = RNEA(q, dq, ddq) - sum_j J_j^T lambda_j.

    lam has shape (..., n_c, 3) or (..., 3*n_c); world-frame forces applied at
    the contact points.  Floating-base rows are the net base wrench in body
    coordinates; joint rows are joint efforts.
    """
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    ddq = np.asarray(ddq, dtype=float)
    if lam is None:
        lam = np.zeros(q.shape[:-1] + (model.n_c, 3))
    else:
        lam = np.asarray(lam, dtype=float).reshape(q.shape[:-1] + (model.n_c, 3))
    (Q, DQ, DDQ), single = _as_batch(q, dq, ddq)
    LAM = np.ascontiguousarray(lam.reshape((-1, model.n_c, 3)))
    out = np.empty((Q.shape[0], model.n_v))
    _rnea_batch(*model._kernel_args(), model._clink, model._coff, model._wheel_r,
                Q, DQ, DDQ, LAM, model.gravity, out)
    return out[0] if single else out


def mass_matrix(model, q):
    """Joint-space inertia matrix in the dq coordinates (single sample)."""
    nv = model.n_v
    Q = np.repeat(q[None], nv + 1, axis=0)
    DQ = np.zeros((nv + 1, nv))
    DDQ = np.zeros((nv + 1, nv))
    DDQ[1:] = np.eye(nv)
    tau = inverse_dynamics(model, Q, DQ, DDQ)
    M = (tau[1:] - tau[0]).T
    return 0.5 * (M + M.T)


def contact_point_kinematics(model, q, dq):
    """World positions and velocities of the contact-frame material points."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    (Q, DQ), single = _as_batch(q, dq)
    P = np.empty((Q.shape[0], model.n_c, 3))
    V = np.empty((Q.shape[0], model.n_c, 3))
    _contact_kin_batch(model._parent, model._jtype, model._axis, model._off_p,
                       model._off_R, model._jof, model._clink, model._coff,
                       Q, DQ, P, V)
    return (P[0], V[0]) if single else (P, V)


def contact_point_velocity(model, q, dq, foot):
    """World-frame linear velocity of one contact point (no-slip residual)."""
    if not 0 <= foot < model.n_c:
        raise IndexError(f"foot index {foot} out of range (n_c={model.n_c})")
    _, V = contact_point_kinematics(model, q, dq)
    return V[..., foot, :]


def contact_jacobians(model, q):
    """Stacked contact-point Jacobians, shape (..., n_c, 3, n_v)."""
    q = np.asarray(q, dtype=float)
    (Q,), single = _as_batch(q)
    J = np.empty((Q.shape[0], model.n_c, 3, model.n_v))
    _contact_jac_batch(model._parent, model._jtype, model._axis, model._off_p,
                       model._off_R, model._jof, model._clink, model._coff,
                       model._wheel_r, model._path_mask, Q, J)
    return J[0] if single else J


def link_states(model, q, dq):
    """World rotation/position/angular/linear velocity of every link frame."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    (Q, DQ), single = _as_batch(q, dq)
    B = Q.shape[0]
    L = model.n_links
    R = np.empty((B, L, 3, 3))
    p = np.empty((B, L, 3))
    w = np.empty((B, L, 3))
    v = np.empty((B, L, 3))
    _link_state_batch(model._parent, model._jtype, model._axis, model._off_p,
                      model._off_R, model._jof, Q, DQ, R, p, w, v)
    if single:
        return R[0], p[0], w[0], v[0]
    return R, p, w, v


def rolling_contact_velocity(model, q, dq, foot):
    """Material velocity of the wheel surface point touching flat ground.

    Zero when the wheel rolls without slipping.  Residual is
    v_center + omega_link x (-r z_world).
    """
    if not 0 <= foot < model.n_c:
        raise IndexError(f"foot index {foot} out of range (n_c={model.n_c})")
    c = model.contacts[foot]
    if c.wheel_radius <= 0.0:
        raise ModelError(f"contact '{c.name}' has no wheel radius")
    R, p, w, v = link_states(model, q, dq)
    li = c.link
    r_off = np.einsum("...ij,j->...i", R[..., li, :, :], c.offset)
    w_l = w[..., li, :]
    v_center = v[..., li, :] + np.cross(w_l, r_off)
    lever = np.zeros_like(v_center)
    lever[..., 2] = -c.wheel_radius
    return v_center + np.cross(w_l, lever)


def config_add(model, q, dpos):
    """Retraction of a configuration-tangent vector (dim n_v)."""
    q = np.asarray(q, dtype=float)
    dpos = np.asarray(dpos, dtype=float)
    quat = q[..., 3:7]
    out = np.empty(np.broadcast_shapes(q.shape[:-1], dpos.shape[:-1]) + (model.n_q,))
    out[..., 0:3] = q[..., 0:3] + rotate(quat, dpos[..., 0:3])
    out[..., 3:7] = quat_mul(quat, quat_exp_map(dpos[..., 3:6]))
    out[..., 3:7] = quat_normalize(out[..., 3:7])
    out[..., 7:] = q[..., 7:] + dpos[..., 6:]
    return out


def config_diff(model, qa, qb):
    """Tangent vector d with config_add(qa, d) == qb (dim n_v)."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    quat_a = qa[..., 3:7]
    d = np.empty(np.broadcast_shapes(qa.shape[:-1], qb.shape[:-1]) + (model.n_v,))
    d[..., 0:3] = rotate(quat_conj(quat_a), qb[..., 0:3] - qa[..., 0:3])
    d[..., 3:6] = quat_log_map(quat_mul(quat_conj(quat_a), qb[..., 3:7]))
    d[..., 6:] = qb[..., 7:] - qa[..., 7:]
    return d


def state_add(model, q, dq, dx):
    """Retraction of a full state tangent (dim 2*n_v)."""
    nv = model.n_v
    return config_add(model, q, dx[..., :nv]), dq + dx[..., nv:]


def state_difference(model, qa, dqa, qb, dqb):
    """Tangent (dim 2*n_v) from state a to state b; zero for identical states."""
    return np.concatenate([config_diff(model, qa, qb), dqb - dqa], axis=-1)


def integrate_state(model, q, dq, ddq, dt):
    """Semi-implicit step: velocity first, then manifold retraction."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    dq2 = dq + np.asarray(ddq, dtype=float) * dt
    return config_add(model, q, dq2 * dt), dq2


# ---------------------------------------------------------------------------
# model description parser
# ---------------------------------------------------------------------------

def _parse_floats(val, n, line):
    parts = val.split()
    if len(parts) != n:
        raise ModelError(f"expected {n} numbers, got {len(parts)}", line)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ModelError(f"invalid number in '{val}'", line) from None


def _inertia_from_six(vals):
    ixx, iyy, izz, ixy, ixz, iyz = vals
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


def load_model(model_text):
    """Parse the line-oriented robot description into a RobotModel.

    Grammar: top-level `key: value` pairs, then `link:` / `contact:` blocks of
    `key: value` lines.  SI units throughout.  See docs/model_format.md.
    """
    top = {}
    blocks = []  # (kind, name, dict key -> (value, line), start_line)
    current = None
    for ln, raw in enumerate(model_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ModelError(f"expected 'key: value', got '{line}'", ln)
        key, val = (s.strip() for s in line.split(":", 1))
        if key in ("link", "contact"):
            current = {}
            blocks.append((key, val, current, ln))
        elif current is None:
            top[key] = (val, ln)
        else:
            current[key] = (val, ln)

    gravity = float(top.get("gravity", ("9.81", 0))[0])
    friction = float(top.get("friction", ("0.8", 0))[0])
    name = top.get("robot", ("robot", 0))[0]

    links = []
    link_index = {}
    contacts = []
    n_jnt = 0
    for kind, bname, body, bline in blocks:
        if kind == "link":
            jtype_s = body.get("joint", ("revolute", bline))[0]
            if jtype_s not in _JOINT_NAMES:
                raise ModelError(f"unknown joint type '{jtype_s}'", body["joint"][1])
            jtype = _JOINT_NAMES[jtype_s]
            if not links:
                if jtype != FLOATING:
                    raise ModelError("root link must have a floating joint", bline)
                parent = -1
            else:
                if jtype == FLOATING:
                    raise ModelError("only the root link may be floating", bline)
                if "parent" not in body:
                    raise ModelError(f"link '{bname}' missing parent", bline)
                pname, pline = body["parent"]
                if pname == bname:
                    raise ModelError(f"link '{bname}' is its own parent (cycle)", pline)
                if pname not in link_index:
                    raise ModelError(f"unknown parent '{pname}' (links must be declared "
                                     "before their children; cycles are impossible)", pline)
                parent = link_index[pname]
            if "mass" not in body:
                raise ModelError(f"link '{bname}' missing mass", bline)
            mass = float(body["mass"][0])
            if mass <= 0.0:
                raise ModelError(f"link '{bname}' mass must be > 0", body["mass"][1])
            if "inertia" not in body:
                raise ModelError(f"link '{bname}' missing inertia", bline)
            inertia = _inertia_from_six(_parse_floats(body["inertia"][0], 6, body["inertia"][1]))
            eig = np.linalg.eigvalsh(inertia)
            if eig.min() <= 0.0:
                raise ModelError(f"link '{bname}' inertia not positive definite", body["inertia"][1])
            com = np.zeros(3)
            if "com" in body:
                com = np.array(_parse_floats(body["com"][0], 3, body["com"][1]))
            axis = np.array([0.0, 0.0, 1.0])
            if "axis" in body:
                axis = np.array(_parse_floats(body["axis"][0], 3, body["axis"][1]))
                nrm = np.linalg.norm(axis)
                if nrm < 1e-12:
                    raise ModelError("joint axis must be nonzero", body["axis"][1])
                axis = axis / nrm
            off_p = np.zeros(3)
            if "origin" in body:
                off_p = np.array(_parse_floats(body["origin"][0], 3, body["origin"][1]))
            off_R = np.eye(3)
            if "rpy" in body:
                r, p_, y = _parse_floats(body["rpy"][0], 3, body["rpy"][1])
                off_R = rpy_to_rot(r, p_, y)
            vlim = float(body.get("velocity_limit", ("30.0", 0))[0])
            jidx = -1
            if jtype == REVOLUTE:
                jidx = n_jnt
                n_jnt += 1
            if bname in link_index:
                raise ModelError(f"duplicate link name '{bname}'", bline)
            link_index[bname] = len(links)
            links.append(Link(bname, mass, inertia, com, parent, jtype, axis,
                              off_p, off_R, jidx, vlim))
        else:  # contact
            if "parent" not in body:
                raise ModelError(f"contact '{bname}' missing parent link", bline)
            lname, lline = body["parent"]
            if lname not in link_index:
                raise ModelError(f"contact '{bname}' references unknown link '{lname}'", lline)
            li = link_index[lname]
            offset = np.zeros(3)
            if "offset" in body:
                offset = np.array(_parse_floats(body["offset"][0], 3, body["offset"][1]))
            wheel_r = 0.0
            wheel_ax = np.array([0.0, 1.0, 0.0])
            if "wheel_radius" in body:
                wheel_r = float(body["wheel_radius"][0])
                if wheel_r <= 0.0:
                    raise ModelError("wheel_radius must be > 0", body["wheel_radius"][1])
            if "wheel_axis" in body:
                wheel_ax = np.array(_parse_floats(body["wheel_axis"][0], 3, body["wheel_axis"][1]))
                wheel_ax = wheel_ax / np.linalg.norm(wheel_ax)
            contacts.append((bname, li, offset, wheel_r, wheel_ax, bline))

    if not links:
        raise ModelError("no links defined")
    if not contacts:
        raise ModelError("at least one contact frame is required")

    has_child = {l.parent for l in links}
    frames = []
    for bname, li, offset, wheel_r, wheel_ax, bline in contacts:
        if li in has_child:
            raise ModelError(f"contact '{bname}' must attach to a leaf link", bline)
        frames.append(ContactFrame(bname, li, offset, wheel_r, wheel_ax))

    return RobotModel(name, links, frames, gravity, friction)


def load_model_file(path):
    with open(path, "r", encoding="utf-8") as f:
        return load_model(f.read())
