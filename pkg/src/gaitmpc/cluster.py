"""Vectorized experience collection and the batch-environment protocol.

Each environment (simulator + MPC + MDP harness) lives in its own worker
process; the coordinator steps them in lockstep through pipes.  The cluster
adds no semantics: batch results are identical to stepping the same
per-seed environments sequentially.  A newline-delimited JSON TCP server
exposes spec/reset/step/close to external trainers.
"""

import json
import multiprocessing as mp
import socket
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import models, rbd
from .env import EnvConfig, GaitEnv
from .ocp import MpcConfig
from .sim import SimConfig


@dataclass
class ClusterConfig:
    n_env: int = 8
    seed: int = 0
    model_text: str = field(default_factory=models.desk_quad_text)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    use_stance: bool = True  # start from the desk-quad stance posture


@dataclass
class BatchFrame:
    obs: np.ndarray
    rew: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    infos: list


def make_env(config, index):
    model = rbd.load_model(config.model_text)
    env_cfg = EnvConfig(**{**config.env.__dict__, "seed": config.seed + index})
    stance = models.desk_quad_stance_q(model) if config.use_stance else None
    return GaitEnv(model, mpc_config=config.mpc, env_config=env_cfg,
                   sim_config=config.sim, stance_q=stance)


def _digest(reward, info):
    return {
        "reason": info["reason"],
        "delta": float(info["delta"]),
        "cot": float(info["cot"]),
        "r_xi": reward.r_xi,
        "r_a": reward.r_a,
        "r_cot": reward.r_cot,
    }


def _worker_main(pipe, config, index):
    env = make_env(config, index)
    obs = env.reset(seed=config.seed + index)
    try:
        while True:
            msg = pipe.recv()
            op = msg[0]
            if op == "step":
                obs, rew, term, trunc, info = env.env_step(msg[1])
                if term:
                    obs = env.reset()
                pipe.send((obs, rew.total, bool(term), bool(trunc), _digest(rew, info)))
            elif op == "reset":
                obs = env.reset(seed=msg[1])
                pipe.send(obs)
            elif op == "close":
                return
            else:
                pipe.send(("error", f"unknown op {op}"))
    except (KeyboardInterrupt, EOFError, BrokenPipeError):
        pass
    except Exception:
        try:
            pipe.send(("error", traceback.format_exc()))
        except BrokenPipeError:
            pass


class ClusterHandle:
    """Coordinator side: n_env worker processes stepped in lockstep."""

    def __init__(self, config):
        if config.n_env < 1:
            raise ValueError("n_env must be >= 1")
        self.config = config
        self.n_env = config.n_env
        probe = make_env(config, 0)
        self.obs_dim = probe.obs_dim
        self.act_dim = probe.act_dim
        del probe
        self._pipes = [None] * self.n_env
        self._procs = [None] * self.n_env
        ctx = mp.get_context("fork")
        try:
            for i in range(self.n_env):
                self._spawn_worker(ctx, i)
        except Exception:
            self.close()
            raise

    def _spawn_worker(self, ctx, i):
        parent, child = ctx.Pipe()
        proc = ctx.Process(target=_worker_main, args=(child, self.config, i),
                           daemon=True)
        proc.start()
        child.close()
        self._pipes[i] = parent
        self._procs[i] = proc

    def _respawn(self, i):
        try:
            if self._procs[i] is not None:
                self._procs[i].kill()
                self._procs[i].join(timeout=2)
        except Exception:
            pass
        self._spawn_worker(mp.get_context("fork"), i)

    def reset(self, mask=None, seeds=None):
        """Reset selected envs (all by default); returns the full obs matrix."""
        mask = np.ones(self.n_env, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        obs = np.zeros((self.n_env, self.obs_dim))
        pending = []
        for i in range(self.n_env):
            if not mask[i]:
                continue
            seed = (self.config.seed + i) if seeds is None else int(seeds[len(pending)])
            self._pipes[i].send(("reset", seed))
            pending.append(i)
        for i in pending:
            obs[i] = self._recv(i)
        self._last_obs = obs
        return obs

    def _recv(self, i):
        out = self._pipes[i].recv()
        if isinstance(out, tuple) and len(out) == 2 and out[0] == "error":
            raise RuntimeError(f"worker {i} failed:\n{out[1]}")
        return out

    def batch_step(self, actions):
        """Advance every env one policy step; auto-resets terminated rows."""
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_env, self.act_dim):
            raise ValueError(f"actions must have shape ({self.n_env}, {self.act_dim})")
        frame = BatchFrame(
            np.zeros((self.n_env, self.obs_dim)), np.zeros(self.n_env),
            np.zeros(self.n_env, dtype=bool), np.zeros(self.n_env, dtype=bool),
            [None] * self.n_env,
        )
        alive = []
        for i in range(self.n_env):
            try:
                self._pipes[i].send(("step", actions[i]))
                alive.append(i)
            except (BrokenPipeError, OSError):
                self._mark_dead(frame, i)
        for i in alive:
            try:
                obs, rew, term, trunc, digest = self._recv(i)
            except (EOFError, OSError):
                self._mark_dead(frame, i)
                continue
            frame.obs[i] = obs
            frame.rew[i] = rew
            frame.terminated[i] = term
            frame.truncated[i] = trunc
            frame.infos[i] = digest
        return frame

    def _mark_dead(self, frame, i):
        """A dead worker is respawned fresh; its row reports a termination."""
        self._respawn(i)
        self._pipes[i].send(("reset", self.config.seed + i))
        frame.obs[i] = self._recv(i)
        frame.terminated[i] = True
        frame.infos[i] = {"reason": "worker_respawned", "delta": 0.0, "cot": 0.0,
                          "r_xi": 0.0, "r_a": 0.0, "r_cot": 0.0}

    def close(self):
        for p in self._pipes:
            if p is None:
                continue
            try:
                p.send(("close",))
            except (BrokenPipeError, OSError):
                pass
        for proc in self._procs:
            if proc is None:
                continue
            proc.join(timeout=3)
            if proc.is_alive():
                proc.kill()


def spawn(config):
    return ClusterHandle(config)


# ---------------------------------------------------------------------------
# newline-delimited JSON protocol
# ---------------------------------------------------------------------------

def _reply(conn, payload):
    conn.sendall((json.dumps(payload) + "\n").encode("utf-8"))


def _handle_request(handle, req):
    op = req.get("op")
    if op == "spec":
        return {"op": "spec", "obs_dim": handle.obs_dim,
                "act_dim": handle.act_dim, "n_env": handle.n_env}
    if op == "reset":
        mask = req.get("mask")
        seeds = req.get("seeds")
        obs = handle.reset(mask=mask, seeds=seeds)
        return {"op": "reset", "obs": [float(v) for v in obs.ravel()]}
    if op == "step":
        acts = req.get("actions")
        if not isinstance(acts, list) or len(acts) != handle.n_env * handle.act_dim:
            return {"error": "shape"}
        actions = np.asarray(acts, dtype=float).reshape(handle.n_env, handle.act_dim)
        frame = handle.batch_step(actions)
        return {
            "op": "step",
            "obs": [float(v) for v in frame.obs.ravel()],
            "rew": [float(v) for v in frame.rew],
            "term": [bool(v) for v in frame.terminated],
            "trunc": [bool(v) for v in frame.truncated],
        }
    if op == "close":
        return {"op": "close"}
    return {"error": "unknown_op"}


def serve_protocol(handle, endpoint, ready_event=None, max_sessions=None):
    """Serve the batch-environment protocol until a client sends close.

    endpoint: (host, port).  One client session at a time; malformed lines
    get {"error": "parse"} and the connection stays open.
    """
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        srv.bind(endpoint)
    except OSError:
        srv.close()
        raise
    srv.listen(1)
    if ready_event is not None:
        ready_event.set()
    sessions = 0
    closing = False
    try:
        while not closing and (max_sessions is None or sessions < max_sessions):
            conn, _ = srv.accept()
            sessions += 1
            with conn:
                buf = b""
                while True:
                    data = conn.recv(1 << 16)
                    if not data:
                        break
                    buf += data
                    while b"\n" in buf:
                        line, buf = buf.split(b"\n", 1)
                        if not line.strip():
                            continue
                        try:
                            req = json.loads(line)
                        except json.JSONDecodeError:
                            _reply(conn, {"error": "parse"})
                            continue
                        out = _handle_request(handle, req)
                        _reply(conn, out)
                        if out.get("op") == "close":
                            closing = True
                            break
                    if closing:
                        break
    finally:
        srv.close()
