"""Desk-scale CEM learning experiment (redesigned): elitist center, small
sigma, short training episodes, full-length evaluation."""
import json
import time

import numpy as np

from gaitmpc import cluster as cl
from gaitmpc import policies as pol
from gaitmpc.cluster import ClusterConfig


def eval_on(handle, action_fn, seeds, max_steps):
    """Parallel evaluation: one seed per cluster row."""
    n = len(seeds)
    assert n <= handle.n_env
    mask = np.zeros(handle.n_env, dtype=bool)
    mask[:n] = True
    obs = handle.reset(mask=mask, seeds=list(seeds))
    totals = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    for _ in range(max_steps):
        acts = np.zeros((handle.n_env, handle.act_dim))
        for r in range(n):
            if not done[r]:
                acts[r] = action_fn(obs[r])
        frame = handle.batch_step(acts)
        obs = frame.obs
        for r in range(n):
            if not done[r]:
                totals[r] += frame.rew[r]
                done[r] = frame.terminated[r] or frame.truncated[r]
        if done.all():
            break
    return [float(t) for t in totals]


def main():
    t0 = time.time()
    handle = cl.spawn(ClusterConfig(n_env=8, seed=0))
    probe = cl.make_env(handle.config, 0)
    scales = pol.observation_scales(probe.layout)
    eval_seeds = [91_000 + 7 * k for k in range(4)]

    stand = eval_on(handle, lambda o: np.zeros(10), eval_seeds, 51)
    rng = np.random.default_rng(5)
    rand = eval_on(handle, lambda o: rng.uniform(-1, 1, 10), eval_seeds, 51)
    stand34 = eval_on(handle, lambda o: np.zeros(10), [10_000], 34)
    print(f"standing(51): {np.mean(stand):.2f}  random(51): {np.mean(rand):.2f} "
          f"standing(34): {np.mean(stand34):.2f}", flush=True)

    cfg = pol.CemConfig(population=16, elite_frac=0.25, iterations=14,
                        episodes=1, seed=0, max_steps=34,
                        target_return=1.35 * np.mean(stand34), patience=2)
    best, curves = pol.cem_train(
        handle, cfg, probe.layout,
        progress=lambda r: print(f"it {r['iteration']}: mean={r['mean_return']:.2f} "
                                 f"best={r['best_return']:.2f} elite={r['elite_mean_return']:.2f} "
                                 f"cot={r['mean_cot']:.3f} sig={r['sigma_mean']:.3f} "
                                 f"[{(time.time()-t0)/60:.1f} min]", flush=True))

    trained = eval_on(handle, lambda o: pol.policy_forward(best, o, scales), eval_seeds, 51)
    print(f"trained(51): {np.mean(trained):.2f} {np.round(trained,1).tolist()}", flush=True)
    print(f"PASS 2x-random: {np.mean(trained) >= 2*np.mean(rand) or np.mean(rand) <= 0}", flush=True)
    print(f"PASS >standing: {np.mean(trained) > np.mean(stand)} "
          f"({np.mean(trained):.2f} vs {np.mean(stand):.2f})", flush=True)
    print(f"total wall: {(time.time()-t0)/60:.1f} min", flush=True)
    pol.save_checkpoint("/root/pkg/experiments/cem_best.json", best)
    with open("/root/pkg/experiments/cem_curves.json", "w") as f:
        json.dump({"curves": curves, "standing": stand, "random": rand,
                   "trained": trained}, f, indent=1)
    handle.close()


if __name__ == "__main__":
    main()
