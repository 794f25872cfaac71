import { describe, expect, it } from "vitest";

import { batchSizeFor, defaultConfig, replayCapacity } from "../src/config.js";
import { ReplayBuffer, makeRng } from "../src/replay.js";
import { SacAgent } from "../src/sac.js";

describe("config sizing rules", () => {
    it("replay capacity 15 * floor(256/n_rep) * n_env", () => {
        expect(replayCapacity(5, 8)).toBe(6120);
        expect(replayCapacity(1, 800)).toBe(15 * 256 * 800);
        expect(replayCapacity(4, 16)).toBe(15 * 64 * 16);
    });

    it("batch scales from 16384@800 envs, power of two, min 256", () => {
        expect(batchSizeFor(800)).toBe(16384);
        expect(batchSizeFor(8)).toBe(256);
        expect(batchSizeFor(400)).toBe(8192);
        expect(batchSizeFor(64)).toBe(1024);
    });

    it("default config is internally consistent", () => {
        const cfg = defaultConfig(8, 5, 10);
        expect(cfg.batchSize).toBeLessThanOrEqual(cfg.replayCapacity);
        expect(cfg.entropyTarget).toBe(-10);
    });
});

describe("replay buffer", () => {
    it("stores, wraps and samples", () => {
        const buf = new ReplayBuffer(4, 2, 1);
        for (let i = 0; i < 6; i++) {
            buf.add(Float64Array.of(i, i), Float64Array.of(i), i, Float64Array.of(i + 1, i + 1), false);
        }
        expect(buf.size).toBe(4);
        const rand = makeRng(3);
        const batch = buf.sample(8, rand);
        expect(batch.rewards.length).toBe(8);
        // wrapped: only rewards 2..5 remain
        for (const r of batch.rewards) {
            expect(r).toBeGreaterThanOrEqual(2);
            expect(r).toBeLessThanOrEqual(5);
        }
    });

    it("rejects sampling when empty", () => {
        const buf = new ReplayBuffer(4, 2, 1);
        expect(() => buf.sample(1, makeRng(0))).toThrow();
    });

    it("rng is deterministic", () => {
        const a = makeRng(42);
        const b = makeRng(42);
        for (let i = 0; i < 10; i++) expect(a()).toBe(b());
    });
});

describe("sac agent", () => {
    it("network sizing follows the 60%-width rule", () => {
        const cfg = defaultConfig(8, 5, 2);
        const agent = new SacAgent(20, 2, cfg);
        const w0 = agent.actor.getWeights()[0];
        expect(w0.shape).toEqual([20, 12]); // hidden = round(0.6*20)
    });

    it("actions are bounded and deterministic eval repeats", () => {
        const cfg = defaultConfig(8, 5, 2);
        const agent = new SacAgent(6, 2, cfg);
        const obs = Float64Array.of(0.5, -1, 2, 0, 1, -0.5);
        const a1 = agent.act(obs, true);
        const a2 = agent.act(obs, true);
        expect(Array.from(a1)).toEqual(Array.from(a2));
        for (const v of a1) {
            expect(Math.abs(v)).toBeLessThan(1.0);
        }
    });

    it("checkpoint round-trips the policy", () => {
        const cfg = defaultConfig(8, 5, 2);
        const a = new SacAgent(6, 2, cfg);
        const b = new SacAgent(6, 2, cfg);
        const obs = Float64Array.of(1, 2, 3, -1, -2, -3);
        b.restore(JSON.parse(JSON.stringify(a.checkpoint())));
        expect(Array.from(b.act(obs, true))).toEqual(Array.from(a.act(obs, true)));
    });

    it("learns a one-step bandit toward the reward optimum", () => {
        const cfg = defaultConfig(8, 5, 2);
        cfg.batchSize = 64;
        cfg.entropyTarget = -4;  // low-entropy optimum for a deterministic bandit
        cfg.actorLr = 1e-3;
        cfg.criticLr = 1e-3;
        const agent = new SacAgent(3, 2, cfg);
        const buf = new ReplayBuffer(4096, 3, 2);
        const rand = makeRng(7);
        const target = [0.6, -0.4];
        const obs = Float64Array.of(0.1, 0.2, 0.3);
        // reward = -||a - target||^2, episodic one-step transitions
        for (let i = 0; i < 1024; i++) {
            const a = Float64Array.of(2 * rand() - 1, 2 * rand() - 1);
            const r = -((a[0] - target[0]) ** 2 + (a[1] - target[1]) ** 2);
            buf.add(obs, a, r, obs, true);
        }
        const before = agent.act(obs, true);
        const err0 = (before[0] - target[0]) ** 2 + (before[1] - target[1]) ** 2;
        for (let u = 0; u < 500; u++) {
            agent.update(buf.sample(cfg.batchSize, rand));
        }
        const after = agent.act(obs, true);
        const err1 = (after[0] - target[0]) ** 2 + (after[1] - target[1]) ** 2;
        expect(err1).toBeLessThan(err0);
        expect(err1).toBeLessThan(0.2);
    }, 120_000);
});
