"""Per-foot contact/flight phase timelines over the MPC horizon.

Flight phases are injected on demand at a fixed injection node, shift toward
node 0 with every receding-horizon step, and carry the vertical swing
reference for the foot-tracking cost.  Nodes not covered by a flight phase
are contact nodes; unit contact phases are appended at the horizon end so
the timeline always tiles nodes 0..N-1.
"""

from dataclasses import dataclass, field

import numpy as np

# injection outcomes
INJECTED = "injected"
NO_REQUEST = "no_request"
REJECTED_OVERLAP = "rejected_overlap"

CONTACT_TERMS_POINT = frozenset({"h_pc", "g_fr", "g_uni", "l_lambda"})
CONTACT_TERMS_WHEEL = frozenset({"h_rc", "g_fr", "g_uni", "l_lambda"})
FLIGHT_TERMS = frozenset({"h_liftoff", "l_vz"})


def swing_velocity_profile(clearance, landing, s, dt):
    """Vertical velocity reference for an s-node flight phase.

    Two zero-end-velocity cubics (lift 0 -> clearance over the first half,
    descend clearance -> landing over the second), sampled from the analytic
    derivative at node times.  A uniform correction (zero when landing == 0)
    makes the discrete displacement sum(v_ref)*dt equal landing exactly.
    """
    if s < 2:
        raise ValueError("flight span must be at least 2 nodes")
    T = s * dt
    half = 0.5 * T
    t = np.arange(s) * dt
    v = np.empty(s)
    first = t < half
    u = t[first] / half
    v[first] = clearance * (6 * u - 6 * u * u) / half
    u2 = (t[~first] - half) / half
    v[~first] = (landing - clearance) * (6 * u2 - 6 * u2 * u2) / half
    v += (landing - v.sum() * dt) / T
    return v


@dataclass
class FlightPhase:
    """One flight window: current position d, current span s, references."""
    d: int
    s: int
    clearance: float
    landing: float
    v_ref: np.ndarray
    p_ref: np.ndarray
    anchor: float = None  # liftoff foot height; set on first solve contact

    @classmethod
    def create(cls, d, s, clearance, landing, dt):
        v = swing_velocity_profile(clearance, landing, s, dt)
        return cls(d, s, clearance, landing, v, np.cumsum(v) * dt)

    @property
    def end(self):
        return self.d + self.s

    def covers(self, node):
        return self.d <= node < self.end


@dataclass
class FootTimeline:
    """Ordered flight phases of one foot over nodes 0..N-1."""
    N: int
    dt: float
    injection_node: int
    flight_duration: float  # seconds
    clearance: float
    landing: float
    wheel: bool = False
    flights: list = field(default_factory=list)

    @property
    def flight_span(self):
        return int(np.ceil(self.flight_duration / self.dt))

    def in_flight(self, node):
        for ph in self.flights:
            if ph.covers(node):
                return ph
        return None

    def try_inject(self, chi, span=None, clearance=None, landing=None):
        """Insert a flight phase at the injection node when chi < 0.

        Returns INJECTED, NO_REQUEST, or REJECTED_OVERLAP.  Windows that
        would overlap an existing flight phase, or run past the horizon end,
        are rejected unchanged.
        """
        if chi >= 0.0:
            return NO_REQUEST
        d = self.injection_node
        s = self.flight_span if span is None else int(span)
        if d + s > self.N:
            return REJECTED_OVERLAP
        for ph in self.flights:
            if d < ph.end and ph.d < d + s:
                return REJECTED_OVERLAP
        ph = FlightPhase.create(
            d, s,
            self.clearance if clearance is None else clearance,
            self.landing if landing is None else landing,
            self.dt,
        )
        self.flights.append(ph)
        self.flights.sort(key=lambda f: f.d)
        return INJECTED

    def shift(self):
        """Receding-horizon step: every phase moves one node toward now.

        A flight phase at node 0 is consumed from the front (d stays 0, span
        shrinks, reference samples are eaten); fully expired phases drop out.
        The freed node at the horizon end becomes contact implicitly.
        """
        keep = []
        for ph in self.flights:
            if ph.d > 0:
                ph.d -= 1
            else:
                ph.s -= 1
                ph.v_ref = ph.v_ref[1:]
                ph.p_ref = ph.p_ref[1:]
                if ph.s <= 0:
                    continue
            keep.append(ph)
        self.flights = keep

    def phases(self):
        """Materialized alternating contact/flight list tiling 0..N-1."""
        out = []
        node = 0
        for ph in self.flights:
            if ph.d > node:
                out.append(("contact", node, ph.d - node))
            out.append(("flight", ph.d, ph.s))
            node = ph.end
        if node < self.N:
            out.append(("contact", node, self.N - node))
        return out

    def snapshot(self):
        """(d, s) of the earliest flight phase; (i*, 0) sentinel when none."""
        if self.flights:
            return self.flights[0].d, self.flights[0].s
        return self.injection_node, 0


@dataclass
class HorizonPlan:
    """One FootTimeline per foot; all share N and dt."""
    timelines: list

    @classmethod
    def create(cls, model, N, dt, injection_node, flight_duration,
               clearance, landing):
        tls = [
            FootTimeline(N, dt, injection_node, flight_duration, clearance,
                         landing, wheel=c.wheel_radius > 0.0)
            for c in model.contacts
        ]
        return cls(tls)

    @property
    def n_c(self):
        return len(self.timelines)

    @property
    def N(self):
        return self.timelines[0].N

    def try_inject(self, chi_vec):
        return [tl.try_inject(chi) for tl, chi in zip(self.timelines, chi_vec)]

    def shift(self):
        for tl in self.timelines:
            tl.shift()

    def snapshot(self):
        d = np.array([tl.snapshot()[0] for tl in self.timelines])
        s = np.array([tl.snapshot()[1] for tl in self.timelines])
        return d, s

    def contact_mask(self):
        """(n_c, N) bool array, True where the foot is in contact."""
        m = np.ones((self.n_c, self.N), dtype=bool)
        for f, tl in enumerate(self.timelines):
            for ph in tl.flights:
                m[f, ph.d:ph.end] = False
        return m


def active_terms_at(plan, foot, node):
    """The term-kind set active for a foot at a horizon node."""
    tl = plan.timelines[foot]
    if not 0 <= node < tl.N:
        raise IndexError(f"node {node} outside horizon 0..{tl.N - 1}")
    if tl.in_flight(node) is not None:
        return FLIGHT_TERMS
    return CONTACT_TERMS_WHEEL if tl.wheel else CONTACT_TERMS_POINT


def schedule_snapshot(plan):
    return plan.snapshot()
