import * as fs from "node:fs";
import * as net from "node:net";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { defaultConfig } from "../src/config.js";
import { train } from "../src/train.js";

/**
 * Deterministic toy environment behind the real wire protocol: the reward
 * is highest for actions matching a fixed target, episodes truncate every
 * 16 steps. Lets the full training loop (collection, replay, updates,
 * evaluation, checkpointing) run end-to-end in seconds.
 */
function toyServer(obsDim: number, actDim: number, nEnv: number): Promise<number> {
    const target = Array.from({ length: actDim }, (_, i) => (i % 2 === 0 ? 0.5 : -0.5));
    let steps = 0;
    const srv = net.createServer((conn) => {
        let buf = "";
        conn.on("data", (chunk) => {
            buf += chunk.toString("utf8");
            let idx: number;
            while ((idx = buf.indexOf("\n")) >= 0) {
                const line = buf.slice(0, idx);
                buf = buf.slice(idx + 1);
                const req = JSON.parse(line);
                if (req.op === "spec") {
                    conn.write(JSON.stringify({ op: "spec", obs_dim: obsDim, act_dim: actDim, n_env: nEnv }) + "\n");
                } else if (req.op === "reset") {
                    steps = 0;
                    conn.write(JSON.stringify({ op: "reset", obs: new Array(nEnv * obsDim).fill(0.1) }) + "\n");
                } else if (req.op === "step") {
                    steps += 1;
                    const rew: number[] = [];
                    for (let e = 0; e < nEnv; e++) {
                        let s = 0;
                        for (let i = 0; i < actDim; i++) {
                            const d = req.actions[e * actDim + i] - target[i];
                            s += d * d;
                        }
                        rew.push(1.0 - s);
                    }
                    const obs = new Array(nEnv * obsDim).fill(0).map((_, i) => 0.1 + 0.01 * ((steps + i) % 7));
                    conn.write(JSON.stringify({
                        op: "step", obs, rew,
                        term: new Array(nEnv).fill(false),
                        trunc: new Array(nEnv).fill(steps % 16 === 0),
                    }) + "\n");
                } else if (req.op === "close") {
                    conn.write(JSON.stringify({ op: "close" }) + "\n");
                    conn.end();
                    srv.close();
                }
            }
        });
    });
    return new Promise((resolve) => {
        srv.listen(0, "127.0.0.1", () => {
            resolve((srv.address() as net.AddressInfo).port);
        });
    });
}

describe("training loop", () => {
    it("collects, updates, evaluates and improves on the toy server", async () => {
        const port = await toyServer(6, 3, 4);
        const cfg = defaultConfig(4, 5, 3);
        cfg.batchSize = 64;
        cfg.warmupTransitions = 128;
        cfg.evalEvery = 100;
        cfg.evalEpisodes = 1;
        cfg.replayCapacity = 4096;
        cfg.entropyTarget = -3;
        const out = fs.mkdtempSync(path.join(os.tmpdir(), "sac-train-"));
        const res = await train("127.0.0.1", port, cfg, 1600, out, () => {});
        expect(res.transitions).toBe(1600);
        expect(res.evals.length).toBeGreaterThanOrEqual(2);
        expect(fs.existsSync(res.checkpointPath)).toBe(true);
        const curve = fs.readFileSync(path.join(out, "curve.csv"), "utf8").trim().split("\n");
        expect(curve[0]).toBe("transitions,mean_return");
        expect(curve.length).toBe(res.evals.length + 1);
        // on the trivial bandit the trained policy must beat the first checkpoint
        expect(res.lastEval).toBeGreaterThan(res.firstEval);
    }, 240_000);
});
