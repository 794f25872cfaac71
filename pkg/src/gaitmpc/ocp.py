"""Cost/constraint catalog for the locomotion NLP.

Every term of the formulation is a TermSpec with a node support, a span and
runtime parameters.  Static terms get their supports here; phase terms
(contact/flight sets) have supports owned by the phase manager and are
resolved against a HorizonPlan at evaluation time.

Inequalities are handled as quadratic barriers: cost = w_b * ||max(0, -g)||^2,
zero exactly on the feasible set and once-differentiable at the boundary.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rbd

EQUALITY_KINDS = ("h_int", "h_dyn", "h_xinit", "h_liftoff", "h_pc", "h_rc")
INEQUALITY_KINDS = ("g_fr", "g_uni", "g_qdotlim")
COST_KINDS = ("l_dqreg", "l_areg", "l_lambda", "l_xicap", "l_qcap", "l_xiref",
              "l_vz", "l_pz", "l_vert", "l_eeori")
ALL_KINDS = EQUALITY_KINDS + INEQUALITY_KINDS + COST_KINDS

PHASE_KINDS = frozenset({"h_liftoff", "h_pc", "h_rc", "g_fr", "g_uni",
                         "l_lambda", "l_vz", "l_pz", "l_vert"})

DEFAULT_WEIGHTS = {
    "l_xiref": 25.0,
    "l_lambda": 1e-3,
    "l_areg": 1e-3,
    "l_dqreg": 0.02,
    "l_xicap": 1.0,
    "l_qcap": 10.0,
    "l_vz": 10.0,
    "l_pz": 10.0,
    "l_vert": 0.0,
    "l_eeori": 0.0,
    "g_fr": 100.0,
    "g_uni": 100.0,
    "g_qdotlim": 100.0,
}

DEFAULT_XI_BOUNDS = np.array([1.0, 1.0, 0.3, 0.5, 0.5, 1.0])


@dataclass
class MpcConfig:
    """Experiment-level problem knobs (all config-exposed, SI units)."""
    N: int = 30
    dt: float = 0.03
    injection_node: int = 4
    flight_duration: float = 0.6
    clearance: float = 0.1
    landing: float = 0.0
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    xi_bounds: np.ndarray = field(default_factory=lambda: DEFAULT_XI_BOUNDS.copy())
    kappa_eq: float = 1e4      # Gauss-Newton penalty on equality constraints
    kappa_merit: float = 1e-2  # merit/health constraint scaling
    health_alpha: float = 0.1  # health-index smoothing


@dataclass
class TermSpec:
    kind: str
    weight: float
    support: frozenset | None  # None -> support owned by the phase manager
    span: int
    foot: int | None = None

    @property
    def is_phase(self):
        return self.support is None


@dataclass
class NlpSpec:
    """Catalog of all terms plus the runtime parameter vector."""
    model: object
    N: int
    dt: float
    terms: list
    weights: dict
    xi_bounds: np.ndarray
    config: MpcConfig
    # runtime parameters (the psi vector, kept structured)
    xi_mpc: np.ndarray = None
    lambda_hat: np.ndarray = None
    q_hat: np.ndarray = None
    tracking_mode: str = "velocity"  # 'velocity' (l_vz) or 'position' (l_pz)
    xi_clamped: bool = False

    def __post_init__(self):
        if self.xi_mpc is None:
            self.xi_mpc = np.zeros(6)
        if self.lambda_hat is None:
            self.lambda_hat = force_regularization_target(
                self.model.n_c, self.model.mass, self.model.gravity)
        if self.q_hat is None:
            self.q_hat = np.zeros(self.model.n_jnt)

    def term(self, kind, foot=None):
        for t in self.terms:
            if t.kind == kind and t.foot == foot:
                return t
        raise KeyError(f"no term {kind} (foot={foot})")

    def static_terms_at(self, node):
        return [t for t in self.terms if not t.is_phase and node in t.support]


def build_problem(model, config):
    """Install all static terms with their Table-style supports; phase terms
    are registered with supports left to the phase manager."""
    N = config.N
    if N < 6 or N % 6 != 0:
        raise ValueError("horizon N must be >= 6 and divisible by 6 "
                         "(capture support is the last N/6 nodes)")
    w = dict(DEFAULT_WEIGHTS)
    w.update(config.weights or {})
    for k, val in w.items():
        if val < 0:
            raise ValueError(f"negative weight for {k}")

    run = frozenset(range(N))
    cap = frozenset(range(5 * N // 6, N))
    track = frozenset(range(0, 5 * N // 6))

    terms = [
        TermSpec("h_int", 1.0, run, N),
        TermSpec("h_dyn", 1.0, run, N),
        TermSpec("h_xinit", 1.0, frozenset({0}), 1),
        TermSpec("g_qdotlim", w["g_qdotlim"], run, N),
        TermSpec("l_dqreg", w["l_dqreg"], run, N),
        TermSpec("l_areg", w["l_areg"], run, N),
        TermSpec("l_xicap", w["l_xicap"], cap, N // 6),
        TermSpec("l_qcap", w["l_qcap"], cap, N // 6),
        TermSpec("l_xiref", w["l_xiref"], track, 5 * N // 6),
    ]
    for foot in range(model.n_c):
        wheel = model.contacts[foot].wheel_radius > 0
        terms.append(TermSpec("l_eeori", w["l_eeori"], run, N, foot))
        terms.append(TermSpec("h_liftoff", 1.0, None, 0, foot))
        terms.append(TermSpec("h_rc" if wheel else "h_pc", 1.0, None, 0, foot))
        terms.append(TermSpec("g_fr", w["g_fr"], None, 0, foot))
        terms.append(TermSpec("g_uni", w["g_uni"], None, 0, foot))
        terms.append(TermSpec("l_lambda", w["l_lambda"], None, 0, foot))
        terms.append(TermSpec("l_vz", w["l_vz"], None, 0, foot))
        terms.append(TermSpec("l_pz", w["l_pz"], None, 0, foot))
        terms.append(TermSpec("l_vert", w["l_vert"], None, 0, foot))

    return NlpSpec(model, N, config.dt, terms, w, np.asarray(config.xi_bounds, dtype=float),
                   config)


def force_regularization_target(n_active_contacts, m, g):
    """Equal-load-sharing force target per active foot: (0, 0, m*g/n_ac).

    With zero active contacts (full flight) the target degenerates to zero.
    """
    lam = np.zeros(3)
    if n_active_contacts >= 1:
        lam[2] = m * g / n_active_contacts
    return lam


def set_twist_reference(nlp, xi):
    """Update the base-twist tracking reference, clamping to bounds."""
    xi = np.asarray(xi, dtype=float)
    lo, hi = -nlp.xi_bounds, nlp.xi_bounds
    clipped = np.clip(xi, lo, hi)
    nlp.xi_clamped = bool(np.any(clipped != xi))
    nlp.xi_mpc = clipped


def barrier_cost(weight, violation):
    """Quadratic barrier: weight * ||max(0, violation)||^2."""
    v = np.maximum(0.0, violation)
    return weight * float(np.dot(np.atleast_1d(v), np.atleast_1d(v)))


@dataclass
class EvalContext:
    """Everything a single-node term evaluation may reference."""
    model: object
    nlp: object
    node: int
    x_next: tuple = None        # (q, dq) for h_int
    x_is: tuple = None          # (q, dq) for h_xinit
    init_mask: np.ndarray = None
    v_ref: float = 0.0          # flight-phase vertical reference at this node
    p_ref: float = 0.0
    lam_hat: np.ndarray = None  # equal-load target at this node (defaults to nlp's)


def evaluate_term(term, x, u, ctx):
    """Evaluate one catalog term at a node.

    Equality terms return residual vectors; inequality terms return their
    quadratic-barrier cost; cost terms return the weighted scalar.
    """
    model = ctx.model
    nlp = ctx.nlp
    q, dq = x
    nv = model.n_v
    ddq, lam = u[:nv], u[nv:].reshape(model.n_c, 3)
    kind = term.kind
    f = term.foot

    if kind == "h_int":
        qn, dqn = rbd.integrate_state(model, q, dq, ddq, nlp.dt)
        return rbd.state_difference(model, ctx.x_next[0], ctx.x_next[1], qn, dqn)
    if kind == "h_dyn":
        return rbd.inverse_dynamics(model, q, dq, ddq, lam)[:6]
    if kind == "h_xinit":
        r = rbd.state_difference(model, ctx.x_is[0], ctx.x_is[1], q, dq)
        return r[ctx.init_mask] if ctx.init_mask is not None else r
    if kind == "h_liftoff":
        return lam[f].copy()
    if kind == "h_pc":
        return rbd.contact_point_velocity(model, q, dq, f)
    if kind == "h_rc":
        return rbd.rolling_contact_velocity(model, q, dq, f)

    if kind == "g_uni":
        return barrier_cost(term.weight, -lam[f, 2])
    if kind == "g_fr":
        mu = model.friction
        viol = np.hypot(lam[f, 0], lam[f, 1]) - mu * lam[f, 2]
        return barrier_cost(term.weight, viol)
    if kind == "g_qdotlim":
        ub = model.velocity_limits
        dqj = dq[6:]
        return barrier_cost(term.weight, np.concatenate([dqj - ub, -ub - dqj]))

    if kind == "l_dqreg":
        return term.weight * float(dq @ dq)
    if kind == "l_areg":
        return term.weight * float(ddq @ ddq)
    if kind == "l_lambda":
        target = nlp.lambda_hat if ctx.lam_hat is None else ctx.lam_hat
        r = lam[f] - target
        return term.weight * float(r @ r)
    if kind == "l_xicap":
        return term.weight * float(dq[:6] @ dq[:6])
    if kind == "l_qcap":
        r = q[7:] - nlp.q_hat
        return term.weight * float(r @ r)
    if kind == "l_xiref":
        r = dq[:6] - nlp.xi_mpc
        return term.weight * float(r @ r)
    if kind == "l_vz":
        v = rbd.contact_point_velocity(model, q, dq, f)
        return term.weight * float((v[2] - ctx.v_ref) ** 2)
    if kind == "l_pz":
        p, _ = rbd.contact_point_kinematics(model, q, dq)
        return term.weight * float((p[f, 2] - ctx.p_ref) ** 2)
    if kind == "l_vert":
        v = rbd.contact_point_velocity(model, q, dq, f)
        return term.weight * float(v[0] ** 2 + v[1] ** 2)
    if kind == "l_eeori":
        R, _, _, _ = rbd.link_states(model, q, dq)
        z = R[model.contacts[f].link][:, 2]
        r = z - np.array([0.0, 0.0, 1.0])
        return term.weight * float(r @ r)
    raise KeyError(f"unknown term kind '{kind}'")


def parse_weights(text):
    """Flat `term: weight` table (the weight/config file format)."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ValueError(f"line {ln}: expected 'term: weight'")
        k, v = (s.strip() for s in line.split(":", 1))
        if k not in DEFAULT_WEIGHTS:
            raise ValueError(f"line {ln}: unknown term '{k}'")
        out[k] = float(v)
    return out
