"""Command-line entry points: rollout, train-cem, serve.

Configs are flat `key: value` files (same grammar as the weight table);
flags override file values.  Every artifact starts with a header carrying
a hash of the effective config so runs are attributable.
"""

import argparse
import hashlib
import json
import signal
import sys
from pathlib import Path

import numpy as np

from . import cluster as cl
from . import models, ocp, policies, rbd, sim
from .env import EnvConfig, GaitEnv


def parse_config_file(text):
    out = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ValueError(f"config line {ln}: expected 'key: value'")
        k, v = (s.strip() for s in line.split(":", 1))
        out[k] = v
    return out


_DEFAULTS = {
    "model": "desk-quad",
    "mode": "CLP",
    "N": 30, "dt": 0.03, "injection_node": 4, "flight_duration": 0.6,
    "clearance": 0.1, "landing": 0.0,
    "n_rep": 5, "v_max": 1.0, "n_h": 3,
    "n_env": 4, "seed": 0,
    "population": 16, "elite_frac": 0.25, "iterations": 8,
    "episodes": 2, "sigma_init": 0.5,
    "weights_file": "",
}


def load_config(path, overrides=None):
    cfg = dict(_DEFAULTS)
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        raw = parse_config_file(p.read_text())
        for k, v in raw.items():
            if k not in cfg:
                raise ValueError(f"unknown config key '{k}'")
            cfg[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    for k in ("N", "injection_node", "n_rep", "n_h", "n_env", "seed",
              "population", "iterations", "episodes"):
        cfg[k] = int(cfg[k])
    for k in ("dt", "flight_duration", "clearance", "landing", "v_max",
              "elite_frac", "sigma_init"):
        cfg[k] = float(cfg[k])
    return cfg


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def build_cluster_config(cfg):
    if cfg["model"] == "desk-quad":
        model_text = models.desk_quad_text()
    else:
        p = Path(cfg["model"])
        if not p.exists():
            raise FileNotFoundError(f"robot model file not found: {cfg['model']}")
        model_text = p.read_text()
    weights = {}
    if cfg["weights_file"]:
        weights = ocp.parse_weights(Path(cfg["weights_file"]).read_text())
    mpc = ocp.MpcConfig(N=cfg["N"], dt=cfg["dt"],
                        injection_node=cfg["injection_node"],
                        flight_duration=cfg["flight_duration"],
                        clearance=cfg["clearance"], landing=cfg["landing"],
                        weights=weights)
    env = EnvConfig(n_rep=cfg["n_rep"], v_max=cfg["v_max"], n_h=cfg["n_h"],
                    seed=cfg["seed"])
    return cl.ClusterConfig(n_env=cfg["n_env"], seed=cfg["seed"],
                            model_text=model_text, mpc=mpc, env=env)


def make_single_env(cfg):
    ccfg = build_cluster_config(cfg)
    env = cl.make_env(ccfg, 0)
    if cfg["mode"] == "OL":
        env = GaitEnv(env.model, mpc_config=ccfg.mpc, env_config=ccfg.env,
                      sim_config=ccfg.sim, stance_q=env.stance_q, mode="OL")
    return env


class _TrianglePath:
    """Cyclic triangular waypoints around the start, for direction changes."""

    def __init__(self, center, side=2.0):
        self.vertices = [center + side * np.array([np.cos(a), np.sin(a)])
                         for a in (0.0, 2.094395102393195, -2.094395102393195)]
        self.k = 0

    def next_goal(self):
        v = self.vertices[self.k % 3]
        self.k += 1
        return v


def _policy_fn(source, env, seed):
    rng = np.random.default_rng(seed)
    scales = policies.observation_scales(env.layout)
    if source.startswith("trot"):
        kv = dict(s.split("=") for s in source.split(":")[1].split(",")) if ":" in source else {}
        period = float(kv.get("period", 1.0))
        duty = float(kv.get("duty", 0.8))
        step_period = env.cfg.n_rep * env.mpc_config.dt

        def fn(obs, k):
            return policies.scripted_trot(k * step_period, period, duty, env.model.n_c)
        return fn
    if source == "zero":
        return lambda obs, k: np.zeros(env.act_dim)
    if source == "random":
        return lambda obs, k: rng.uniform(-1, 1, env.act_dim)
    params = policies.load_checkpoint(source)

    def fn(obs, k):
        return policies.policy_forward(params, obs, scales)
    return fn


def cmd_rollout(args):
    cfg = load_config(args.config, {"seed": args.seed, "n_env": 1})
    h = config_hash(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    env = make_single_env(cfg)
    env.collect_solve_stats = bool(args.dump_solves)
    obs = env.reset(seed=cfg["seed"])
    path = _TrianglePath(env.world.state.q[:2].copy(), side=args.waypoint_side) \
        if args.waypoints == "triangle" else None
    if path is not None:
        env.goal.p_cmd = path.next_goal()
        env._xi_cmd = env._current_command()
    try:
        policy = _policy_fn(args.policy, env, cfg["seed"])
    except FileNotFoundError:
        print(f"error: policy checkpoint not found: {args.policy}", file=sys.stderr)
        return 2

    steps = int(round(args.duration / (cfg["n_rep"] * cfg["dt"])))
    sched_rows = []
    trace_rows = []
    rew_lines = []
    t = 0.0
    for k in range(steps):
        a = policy(obs, k)
        obs, rew, term, trunc, info = env.env_step(a)
        t += cfg["n_rep"] * cfg["dt"]
        for f, tl in enumerate(env.mpc.plan.timelines):
            sched_rows.append((t, f, 0 if tl.in_flight(0) else 1))
        st = env.world.state
        forces = env.world.contact_forces().ravel()
        trace_rows.append([t, *st.q[:7], *st.dq[:6], *st.q[7:], *forces])
        rew_lines.append(json.dumps({
            "step": k, "time": t,
            "obs": [float(v) for v in obs],
            "action": [float(v) for v in a],
            "reward": {"r_xi": rew.r_xi, "r_a": rew.r_a, "r_cot": rew.r_cot,
                       "total": rew.total},
            "terminated": bool(term), "truncated": bool(trunc),
            "reason": info["reason"], "cot": info["cot"],
        }))
        if term:
            obs = env.reset()
        if trunc or (path is not None and
                     np.linalg.norm(env.world.state.q[:2] - env.goal.p_cmd) < 0.5):
            if path is not None:
                env.goal.p_cmd = path.next_goal()
                env._xi_cmd = env._current_command()

    hdr = f"# config_hash={h}\n"
    with open(out / "schedule.csv", "w") as f:
        f.write(hdr + "time,foot,in_contact\n")
        f.writelines(f"{t:.6f},{ft},{c}\n" for t, ft, c in sched_rows)
    with open(out / "state_trace.csv", "w") as f:
        n_jnt, n_c = env.model.n_jnt, env.model.n_c
        cols = (["time", "px", "py", "pz", "qw", "qx", "qy", "qz"]
                + [f"tw{i}" for i in range(6)]
                + [f"q{i}" for i in range(n_jnt)]
                + [f"f{i}_{ax}" for i in range(n_c) for ax in "xyz"])
        f.write(hdr + ",".join(cols) + "\n")
        f.writelines(",".join(repr(float(v)) for v in row) + "\n" for row in trace_rows)
    with open(out / "rewards.jsonl", "w") as f:
        f.write(f'{{"config_hash": "{h}"}}\n')
        f.writelines(line + "\n" for line in rew_lines)
    if args.dump_solves:
        with open(out / "solves.jsonl", "w") as f:
            f.write(f'{{"config_hash": "{h}"}}\n')
            f.writelines(json.dumps(rec) + "\n" for rec in env.solve_log)
    print(f"rollout complete: {steps} steps -> {out}")
    return 0


def cmd_train_cem(args):
    cfg = load_config(args.config, {"seed": args.seed, "n_env": args.n_env})
    h = config_hash(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handle = cl.spawn(build_cluster_config(cfg))
    probe = cl.make_env(build_cluster_config(cfg), 0)
    cem = policies.CemConfig(population=cfg["population"],
                             elite_frac=cfg["elite_frac"],
                             iterations=cfg["iterations"],
                             episodes=cfg["episodes"],
                             sigma_init=cfg["sigma_init"], seed=cfg["seed"])
    curves = []
    best = None
    try:
        best, curves = policies.cem_train(
            handle, cem, probe.layout,
            progress=lambda rec: print(
                f"iter {rec['iteration']}: mean={rec['mean_return']:.2f} "
                f"best={rec['best_return']:.2f} elite={rec['elite_mean_return']:.2f} "
                f"cot={rec['mean_cot']:.3f}"))
    finally:
        handle.close()
        if best is not None:
            policies.save_checkpoint(out / "checkpoint.json", best)
        if curves:
            keys = list(curves[0].keys())
            with open(out / "curves.csv", "w") as f:
                f.write(f"# config_hash={h}\n" + ",".join(keys) + "\n")
                f.writelines(",".join(repr(rec[k]) for k in keys) + "\n" for rec in curves)
    print(f"training complete -> {out}")
    return 0


def cmd_serve(args):
    cfg = load_config(args.config, {"seed": args.seed, "n_env": args.n_env})
    host, port = args.endpoint.rsplit(":", 1)
    handle = cl.spawn(build_cluster_config(cfg))
    handle.reset()
    stop = lambda *a: (_ for _ in ()).throw(KeyboardInterrupt())
    signal.signal(signal.SIGTERM, stop)
    try:
        print(f"serving batch-environment protocol on {host}:{port} "
              f"(n_env={handle.n_env}, obs_dim={handle.obs_dim}, act_dim={handle.act_dim})")
        cl.serve_protocol(handle, (host, int(port)))
    except OSError as e:
        print(f"error: cannot bind {args.endpoint}: {e}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        pass
    finally:
        handle.close()
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gaitmpc",
                                 description="Contact-schedule-editing MPC locomotion stack")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("rollout", help="run a policy and export artifacts")
    p.add_argument("--config", default="")
    p.add_argument("--policy", default="trot",
                   help="trot[:period=..,duty=..] | zero | random | checkpoint.json")
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="rollout_out")
    p.add_argument("--waypoints", choices=["none", "triangle"], default="none")
    p.add_argument("--waypoint-side", type=float, default=2.0)
    p.add_argument("--dump-solves", action="store_true",
                   help="write per-solve diagnostics to solves.jsonl")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("train-cem", help="cross-entropy-method training")
    p.add_argument("--config", default="")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-env", type=int, default=None)
    p.add_argument("--out", default="cem_out")
    p.set_defaults(fn=cmd_train_cem)

    p = sub.add_parser("serve", help="serve the batch-environment TCP protocol")
    p.add_argument("--config", default="")
    p.add_argument("--endpoint", default="127.0.0.1:8942")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-env", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
