"""Baseline policies and a cross-entropy-method trainer.

The feedforward policy uses three tanh hidden layers of width 60% of the
observation dimension and a tanh output head.  Weights are stored unscaled
and multiplied by 1/sqrt(fan_in) in the forward pass, and observations are
normalized by fixed per-block scales, so isotropic CEM noise is meaningful
across layers.  Zero weights give the zero action (standing, no injection
requests).
"""

import json
from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# scripted gait
# ---------------------------------------------------------------------------

def scripted_trot(t, period, duty, n_c, forward=0.45):
    """Raw action for a clock-driven trot.

    Diagonal pairs request flight phases once per period, half a period
    apart; the window where chi < 0 is the (1 - duty) fraction of the
    period.  duty = 1 never requests an injection.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    a = np.zeros(6 + n_c)
    a[0] = np.arctanh(np.clip(forward, -0.99, 0.99))
    window = 1.0 - duty
    frac = (t % period) / period
    frac_b = (frac + 0.5) % 1.0
    chi = np.ones(n_c)
    pair_a = [i for i in range(n_c) if i % 3 == 0]   # fl, hr on the desk-quad
    pair_b = [i for i in range(n_c) if i % 3 != 0]
    if frac < window:
        for i in pair_a:
            chi[i] = -1.0
    if frac_b < window:
        for i in pair_b:
            chi[i] = -1.0
    a[6:] = chi
    return a


# ---------------------------------------------------------------------------
# feedforward policy
# ---------------------------------------------------------------------------

@dataclass
class PolicyParams:
    """Three hidden tanh layers at 60% of the input width, tanh output."""
    weights: list  # [(W, b), ...] unscaled; forward applies 1/sqrt(fan_in)
    obs_dim: int
    act_dim: int

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in self.weights)


def policy_init(obs_dim, act_dim):
    width = int(round(0.6 * obs_dim))
    dims = [obs_dim, width, width, width, act_dim]
    weights = [(np.zeros((dims[i + 1], dims[i])), np.zeros(dims[i + 1]))
               for i in range(len(dims) - 1)]
    return PolicyParams(weights, obs_dim, act_dim)


def params_to_vector(params):
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in params.weights])


def vector_to_params(vec, obs_dim, act_dim):
    params = policy_init(obs_dim, act_dim)
    off = 0
    for i, (W, b) in enumerate(params.weights):
        n = W.size
        params.weights[i] = (vec[off:off + n].reshape(W.shape), vec[off + n:off + n + b.size].copy())
        off += n + b.size
    if off != vec.size:
        raise ValueError("parameter vector length mismatch")
    return params


def observation_scales(layout):
    """Fixed per-block normalization derived from the documented layout."""
    s = np.ones(layout.dim)
    s[layout["omega"]] = 2.0
    s[layout["dq_jnt"]] = 5.0
    s[layout["v_hat"]] = 1.0
    s[layout["lam_hat"]] = 150.0
    s[layout["delta"]] = 50.0
    s[layout["d_fl"]] = 4.0
    s[layout["s_fl"]] = 20.0
    s[layout["dq_star"]] = 5.0
    s[layout["tau_ff"]] = 50.0
    return s


def policy_forward(params, obs, scales=None):
    """Deterministic evaluation head: bounded action via the output tanh."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != params.obs_dim:
        raise ValueError(f"observation length {obs.shape[-1]} != {params.obs_dim}")
    h = obs / scales if scales is not None else obs.copy()
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(params.weights):
        h = h @ (W.T / np.sqrt(W.shape[1])) + b
        h = np.tanh(h) if i < last else h
    return np.tanh(h)


def save_checkpoint(path, params):
    """JSON checkpoint: layer dims plus row-major weight arrays."""
    payload = {
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        "layers": [{"shape": list(W.shape), "W": W.ravel().tolist(),
                    "b": b.tolist()} for W, b in params.weights],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    weights = [(np.asarray(l["W"], dtype=float).reshape(l["shape"]),
                np.asarray(l["b"], dtype=float)) for l in payload["layers"]]
    return PolicyParams(weights, payload["obs_dim"], payload["act_dim"])


# ---------------------------------------------------------------------------
# cross-entropy method
# ---------------------------------------------------------------------------

@dataclass
class CemConfig:
    population: int = 16
    elite_frac: float = 0.25
    iterations: int = 10
    episodes: int = 2
    sigma_init: float = 0.05
    sigma_decay: float = 0.92
    sigma_floor: float = 0.015
    seed: int = 0
    target_return: float = None  # early stop when elite mean clears this
    patience: int = 2
    max_steps: int = None        # cap on training-episode length (policy steps)

    def __post_init__(self):
        if not 0.0 < self.elite_frac < 1.0:
            raise ValueError("elite fraction must be in (0, 1)")


def rollout_returns(handle, params_list, episode_seeds, scales, max_steps):
    """Evaluate candidates on the cluster with common episode seeds.

    Returns (returns, cots): arrays of shape (n_candidates, n_episodes);
    each return is the undiscounted reward sum over one truncation window.
    """
    jobs = [(c, e) for c in range(len(params_list)) for e in range(len(episode_seeds))]
    returns = np.zeros((len(params_list), len(episode_seeds)))
    cots = np.zeros_like(returns)
    n_env = handle.n_env
    for start in range(0, len(jobs), n_env):
        chunk = jobs[start:start + n_env]
        mask = np.zeros(n_env, dtype=bool)
        mask[:len(chunk)] = True
        seeds = [episode_seeds[e] for _, e in chunk]
        obs = handle.reset(mask=mask, seeds=seeds)
        done = np.zeros(n_env, dtype=bool)
        cot_acc = np.zeros(n_env)
        cot_n = np.zeros(n_env)
        for _ in range(max_steps):
            actions = np.zeros((n_env, handle.act_dim))
            for row, (c, _) in enumerate(chunk):
                if not done[row]:
                    actions[row] = policy_forward(params_list[c], obs[row], scales)
            frame = handle.batch_step(actions)
            obs = frame.obs
            for row, (c, e) in enumerate(chunk):
                if done[row]:
                    continue
                returns[c, e] += frame.rew[row]
                if frame.infos[row] is not None:
                    cot_acc[row] += frame.infos[row]["cot"]
                    cot_n[row] += 1
                if frame.terminated[row] or frame.truncated[row]:
                    done[row] = True
            if done[:len(chunk)].all():
                break
        for row, (c, e) in enumerate(chunk):
            cots[c, e] = cot_acc[row] / max(cot_n[row], 1)
    return returns, cots


def cem_train(handle, config, layout, progress=None):
    """Derivative-free policy search: sample, evaluate, refit to elites.

    Returns (best PolicyParams, per-iteration statistics records).
    """
    rng = np.random.default_rng(config.seed)
    scales = observation_scales(layout) if layout is not None else None
    base = policy_init(handle.obs_dim, handle.act_dim)
    mu = params_to_vector(base)
    sigma = np.full(mu.size, config.sigma_init)
    max_steps = _probe_max_steps(handle)
    n_elite = max(1, int(round(config.elite_frac * config.population)))

    best_params = base
    best_vec = mu.copy()
    best_return = -np.inf
    curves = []
    cleared = 0
    train_steps = config.max_steps or max_steps
    for it in range(config.iterations):
        # elitist center: the current mean is always candidate 0, so the
        # search can only improve on the best refit found so far
        noise = rng.standard_normal((config.population, mu.size))
        noise[0] = 0.0
        pop = mu[None, :] + sigma[None, :] * noise
        cands = [vector_to_params(v, handle.obs_dim, handle.act_dim) for v in pop]
        # common seeds within the iteration (fair comparison); varying across
        # iterations so elites must handle different goal directions
        episode_seeds = [10_000 + 101 * it + 37 * e for e in range(config.episodes)]
        rets, cots = rollout_returns(handle, cands, episode_seeds, scales, train_steps)
        mean_ret = rets.mean(axis=1)
        order = np.argsort(mean_ret)[::-1]
        elite_idx = order[:n_elite]
        elites = pop[elite_idx]
        mu = elites.mean(axis=0)
        # refit sigma from the elites but keep it under a decaying envelope;
        # dispersed early elites must not blow the sampling distribution up
        envelope = config.sigma_init * (config.sigma_decay ** (it + 1))
        sigma = np.minimum(elites.std(axis=0), envelope) + config.sigma_floor
        if mean_ret[order[0]] > best_return:
            best_return = float(mean_ret[order[0]])
            best_params = cands[order[0]]
            best_vec = pop[order[0]].copy()
        rec = {
            "iteration": it,
            "mean_return": float(mean_ret.mean()),
            "best_return": float(mean_ret.max()),
            "best_return_so_far": best_return,
            "elite_mean_return": float(mean_ret[elite_idx].mean()),
            "q1_return": float(np.quantile(mean_ret, 0.25)),
            "q3_return": float(np.quantile(mean_ret, 0.75)),
            "mean_cot": float(cots.mean()),
            "elite_mean_cot": float(cots[elite_idx].mean()),
            "sigma_mean": float(sigma.mean()),
        }
        curves.append(rec)
        if progress is not None:
            progress(rec)
        if config.target_return is not None:
            cleared = cleared + 1 if rec["elite_mean_return"] >= config.target_return else 0
            if cleared >= config.patience:
                break

    # final shootout on fresh seeds: the refit mean vs the best-ever sample
    finalists = [vector_to_params(mu, handle.obs_dim, handle.act_dim),
                 vector_to_params(best_vec, handle.obs_dim, handle.act_dim)]
    seeds = [77_000 + 13 * e for e in range(max(2, config.episodes))]
    rets, _ = rollout_returns(handle, finalists, seeds, scales, max_steps)
    winner = int(np.argmax(rets.mean(axis=1)))
    return finalists[winner], curves


def _probe_max_steps(handle):
    env_cfg = handle.config.env
    return env_cfg.episode_budget // env_cfg.n_rep


def random_policy_actions(rng, n_env, act_dim):
    """The random baseline: i.i.d. uniform raw actions in [-1, 1]."""
    return rng.uniform(-1.0, 1.0, (n_env, act_dim))
