"""Goal-driven locomotion MDP wrapping the MPC controller and the
physics world.

The policy acts at f_mpc / n_rep: each env step runs n_rep controller
steps, each wrapping the simulator substeps of one control period.  The
task goal is a planar position; the observed twist command follows a
norm-clipped linear ramp toward it.  Observations mix task, proprioception,
MPC-internal estimates (never simulator ground truth), impedance
references, and an action history; no clock signal is provided.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ocp, rbd, sim
from .controller import CLP, McpCommand, MpcController

W_XI_PRIME = np.array([1.0, np.sqrt(0.1), np.sqrt(0.1), 0.0, 0.0, 1.0])


@dataclass
class TaskGoal:
    p_cmd: np.ndarray       # planar target, world frame
    ramp_gain: float = 1.0  # 1/s
    v_max: float = 1.0      # m/s


@dataclass
class EnvConfig:
    n_rep: int = 5
    n_h: int = 3
    v_max: float = 1.0
    ramp_gain: float = 1.0
    goal_radius: float = 5.0
    heading_gain: float = 1.0
    heading_clip: float = 1.0     # rad/s
    heading_deadband: float = 0.1  # m
    episode_budget: int = 256     # max duration is episode_budget / n_rep steps
    capsize_cos: float = 0.5      # cos(60 deg)
    delta_factor: float = 50.0
    delta_floor: float = 1000.0
    w_xi: float = 1.0
    kappa_xi: float = 5.0
    w_a: float = 0.1
    kappa_a: float = 2.0
    w_cot: float = 0.1
    kappa_cot: float = 1.0
    eps_cot: float = 1e-2
    seed: int = 0


@dataclass
class RewardBreakdown:
    r_xi: float
    r_a: float
    r_cot: float

    @property
    def total(self):
        return self.r_xi + self.r_a + self.r_cot


@dataclass
class ObsLayout:
    """Fixed, documented observation layout (all slices into one vector)."""
    n_jnt: int
    n_c: int
    n_h: int

    def __post_init__(self):
        nj, nc, nh = self.n_jnt, self.n_c, self.n_h
        sizes = [
            ("xi_cmd", 6),
            ("g_n", 3), ("omega", 3), ("q_jnt", nj), ("dq_jnt", nj),
            ("v_hat", 3), ("lam_hat", 3 * nc), ("delta", 1),
            ("d_fl", nc), ("s_fl", nc),
            ("q_star", nj), ("dq_star", nj), ("tau_ff", nj),
            ("actions", nh * (6 + nc)),
        ]
        self.slices = {}
        off = 0
        for name, n in sizes:
            self.slices[name] = slice(off, off + n)
            off += n
        self.dim = off

    def __getitem__(self, name):
        return self.slices[name]


def command_twist(goal, base_xy, base_quat):
    """Base-local twist command: norm-clipped linear ramp toward the goal
    plus a heading yaw rate; other angular and vertical components zero."""
    err = np.asarray(goal.p_cmd, dtype=float) - np.asarray(base_xy, dtype=float)
    v_w = goal.ramp_gain * err
    speed = np.linalg.norm(v_w)
    if speed > goal.v_max:
        v_w *= goal.v_max / speed
    R0 = rbd.quat_to_rot(base_quat)
    v_b = R0.T @ np.array([v_w[0], v_w[1], 0.0])
    xi = np.zeros(6)
    xi[0:3] = v_b
    if np.linalg.norm(err) > 0.1:
        yaw = np.arctan2(R0[1, 0], R0[0, 0])
        yaw_err = np.arctan2(err[1], err[0]) - yaw
        yaw_err = np.arctan2(np.sin(yaw_err), np.cos(yaw_err))
        xi[5] = np.clip(1.0 * yaw_err, -1.0, 1.0)
    return xi


def reward_tracking(xi_bar, xi_cmd, g_n, w_xi=1.0, kappa_xi=5.0):
    """Exponential tracking reward with projected velocity errors."""
    dv = xi_bar[:3] - xi_cmd[:3]
    dw = xi_bar[3:] - xi_cmd[3:]
    v_cmd = xi_cmd[:3]
    nrm = np.linalg.norm(v_cmd)
    v_hat = v_cmd / nrm if nrm > 1e-8 else np.array([1.0, 0.0, 0.0])
    vz = float(dv @ g_n)
    vx = float(dv @ v_hat)
    vy = float(np.linalg.norm(dv - vz * g_n - vx * v_hat))
    dxi = np.array([vx, vy, vz, dw[0], dw[1], dw[2]])
    return w_xi * float(np.exp(-kappa_xi * np.linalg.norm(dxi * W_XI_PRIME)
                               / np.linalg.norm(W_XI_PRIME)))


def reward_action_rate(da_xi, da_chi, w_a=0.1, kappa_a=2.0):
    """Penalizes the change of normalized actions between policy steps."""
    rate = float(da_xi @ da_xi) + 0.1 * float(da_chi @ da_chi)
    return w_a * (1.0 - kappa_a * rate)


def reward_cot(mean_positive_power, mass, gravity, cmd_speed,
               w_cot=0.1, kappa_cot=1.0, eps=1e-2):
    """Cost-of-transport reward from the mean positive mechanical power."""
    cot = max(0.0, mean_positive_power) / (mass * gravity * cmd_speed + eps)
    return w_cot * (1.0 - kappa_cot * cot)


class GaitEnv:
    def __init__(self, model, mpc_config=None, env_config=None,
                 sim_config=None, stance_q=None, mode=CLP):
        self.model = model
        self.mpc_config = mpc_config or ocp.MpcConfig()
        self.cfg = env_config or EnvConfig()
        self.sim_config = sim_config or sim.SimConfig()
        self.stance_q = (model.neutral_q() if stance_q is None
                         else np.asarray(stance_q, dtype=float))
        self.layout = ObsLayout(model.n_jnt, model.n_c, self.cfg.n_h)
        self.obs_dim = self.layout.dim
        self.act_dim = 6 + model.n_c
        self.n_sub = int(round(self.mpc_config.dt / self.sim_config.dt))
        self.gains = sim.ImpedanceGains()
        self.mpc = MpcController(model, self.mpc_config, mode=mode,
                                 stance_q=self.stance_q)
        self.rng = np.random.default_rng(self.cfg.seed)
        self.max_steps = self.cfg.episode_budget // self.cfg.n_rep
        self.world = None
        self.delta_max = None
        self._log_hook = None
        self.collect_solve_stats = False
        self.solve_log = []

    # ------------------------------------------------------------- lifecycle

    def _calibrate_delta_max(self):
        """Threshold = max(factor * steady standing delta, floor)."""
        self.mpc.reset()
        world = sim.World(self.model, self.stance_q.copy(), config=self.sim_config)
        deltas = []
        for _ in range(20):
            meas = world.measurement() if self.mpc.mode == CLP else None
            ref, diag = self.mpc.step(meas, McpCommand(np.zeros(6), np.ones(self.model.n_c)))
            world.step(ref, self.gains, self.n_sub)
            deltas.append(diag.delta)
        delta_ss = float(np.mean(deltas[-5:]))
        self.delta_max = max(self.cfg.delta_factor * delta_ss, self.cfg.delta_floor)
        self.mpc.reset()

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.delta_max is None:
            self._calibrate_delta_max()
        yaw = self.rng.uniform(-np.pi, np.pi)
        q0 = self.stance_q.copy()
        q0[3:7] = rbd.yaw_quat(yaw)
        self.world = sim.World(self.model, q0, config=self.sim_config)
        self.mpc.reset()
        self.goal = self._sample_goal()
        self.step_count = 0
        self._action_hist = np.zeros((self.cfg.n_h, self.act_dim))
        self._prev_norm_action = np.zeros(self.act_dim)
        self._last_ref = self.mpc.last_ref
        self._last_diag = None
        self._xi_cmd = self._current_command()
        return self.build_observation()

    def _sample_goal(self):
        ang = self.rng.uniform(-np.pi, np.pi)
        rad = self.cfg.goal_radius * np.sqrt(self.rng.uniform(0.0, 1.0))
        p = self.world.state.q[:2] + rad * np.array([np.cos(ang), np.sin(ang)])
        return TaskGoal(p, self.cfg.ramp_gain, self.cfg.v_max)

    def _current_command(self):
        return command_twist(self.goal, self.world.state.q[:2],
                             self.world.state.q[3:7])

    # ------------------------------------------------------------------ step

    def _map_action(self, action):
        xi = np.tanh(action[:6]) * self.mpc.nlp.xi_bounds
        chi = action[6:]
        norm = np.concatenate([np.tanh(action[:6]), np.tanh(action[6:])])
        return xi, chi, norm

    def env_step(self, action):
        action = np.asarray(action, dtype=float)
        if action.shape != (self.act_dim,):
            raise ValueError(f"action must have shape ({self.act_dim},)")
        cfg = self.cfg
        xi_mpc, chi, norm_action = self._map_action(action)
        xi_cmd = self._xi_cmd  # the command the policy acted on

        twist_acc = np.zeros(6)
        power_acc = 0.0
        diag = None
        sim_failed = False
        for _ in range(cfg.n_rep):
            meas = self.world.measurement() if self.mpc.mode == CLP else None
            ref, diag = self.mpc.step(meas, McpCommand(xi_mpc, chi))
            self._last_ref = ref
            if self.collect_solve_stats:
                self.solve_log.append(diag.stats.to_dict())
            try:
                info = self.world.step(ref, self.gains, self.n_sub)
            except sim.SimError:
                sim_failed = True
                break
            twist_acc += info.mean_twist
            power_acc += info.mean_joint_power
        self._last_diag = diag

        xi_bar = twist_acc / cfg.n_rep
        mean_power = power_acc / cfg.n_rep
        g_n = self.world.sensors()[0]
        cmd_speed = float(np.linalg.norm(xi_cmd[:3]))

        da = norm_action - self._prev_norm_action
        r_xi = reward_tracking(xi_bar, xi_cmd, g_n, cfg.w_xi, cfg.kappa_xi)
        r_a = reward_action_rate(da[:6], da[6:], cfg.w_a, cfg.kappa_a)
        r_cot = reward_cot(mean_power, self.model.mass, self.model.gravity,
                           cmd_speed, cfg.w_cot, cfg.kappa_cot, cfg.eps_cot)
        reward = RewardBreakdown(r_xi, r_a, r_cot)

        self._prev_norm_action = norm_action
        self._action_hist = np.roll(self._action_hist, 1, axis=0)
        self._action_hist[0] = action
        self.step_count += 1

        capsized = bool(-g_n[2] < cfg.capsize_cos)
        diverged = bool(diag.delta > self.delta_max) or sim_failed
        terminated = capsized or diverged
        truncated = (not terminated) and self.step_count >= self.max_steps

        reason = ("capsize" if capsized else
                  "mpc_diverged" if diverged else
                  "truncated" if truncated else "")
        info = {
            "reason": reason,
            "delta": diag.delta,
            "cot": max(0.0, mean_power) / (self.model.mass * self.model.gravity * cmd_speed + cfg.eps_cot),
            "goal": self.goal.p_cmd.copy(),
            "reward_inputs": {
                "xi_bar": xi_bar.copy(), "xi_cmd": xi_cmd.copy(),
                "g_n": g_n.copy(), "da_xi": da[:6].copy(),
                "da_chi": da[6:].copy(), "mean_power": mean_power,
                "cmd_speed": cmd_speed,
            },
        }

        self._xi_cmd = self._current_command()
        if truncated:
            # goal resample only; simulation state is preserved
            self.goal = self._sample_goal()
            self.step_count = 0
            self._xi_cmd = self._current_command()
        obs = self.build_observation()
        if self._log_hook is not None:
            self._log_hook(obs, action, reward, terminated, truncated, info)
        return obs, reward, terminated, truncated, info

    # ------------------------------------------------------------ observation

    def build_observation(self):
        lay = self.layout
        obs = np.zeros(lay.dim)
        obs[lay["xi_cmd"]] = self._xi_cmd
        g_n, omega, q_jnt, dq_jnt = self.world.sensors()
        obs[lay["g_n"]] = g_n
        obs[lay["omega"]] = omega
        obs[lay["q_jnt"]] = q_jnt
        obs[lay["dq_jnt"]] = dq_jnt
        # MPC-sourced slots: predictions from the latest solution, never
        # simulator ground truth
        if self._last_diag is not None:
            diag = self._last_diag
            obs[lay["v_hat"]] = diag.v_hat
            quat_pred = self.mpc.traj.q[1, 3:7]
            R_pred = rbd.quat_to_rot(quat_pred)
            obs[lay["lam_hat"]] = (diag.lam_hat @ R_pred).ravel()
            obs[lay["delta"]] = diag.delta
            obs[lay["d_fl"]] = diag.d_fl
            obs[lay["s_fl"]] = diag.s_fl
        else:
            d0, s0 = self.mpc.plan.snapshot()
            obs[lay["d_fl"]] = d0
            obs[lay["s_fl"]] = s0
        obs[lay["q_star"]] = self._last_ref.q_star
        obs[lay["dq_star"]] = self._last_ref.dq_star
        obs[lay["tau_ff"]] = self._last_ref.tau_ff
        obs[lay["actions"]] = self._action_hist.ravel()
        return obs
