/**
 * Training loop: environment stepping over the wire alternates with SAC
 * updates (no asynchronous actors). Checkpoints are flushed on connection
 * loss so runs are resumable; evaluation episodes use the deterministic
 * policy head and are logged to a CSV return curve.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { SacConfig } from "./config.js";
import { EnvClient } from "./protocol.js";
import { ReplayBuffer, makeRng } from "./replay.js";
import { SacAgent } from "./sac.js";

export interface TrainResult {
    transitions: number;
    evals: Array<{ transitions: number; meanReturn: number }>;
    firstEval: number;
    lastEval: number;
    checkpointPath: string;
}

function rowsOf(flat: Float64Array, n: number, dim: number): Float64Array[] {
    const out: Float64Array[] = [];
    for (let i = 0; i < n; i++) out.push(flat.slice(i * dim, (i + 1) * dim));
    return out;
}

export async function evaluate(client: EnvClient, agent: SacAgent,
                               nEnv: number, episodes: number,
                               maxSteps: number): Promise<number> {
    const returns: number[] = [];
    for (let ep = 0; ep < episodes; ep++) {
        const mask = new Array(nEnv).fill(false);
        mask[0] = true;
        let obs = await client.reset(mask, [123_000 + 17 * ep]);
        let total = 0;
        for (let k = 0; k < maxSteps; k++) {
            const rows = rowsOf(obs, nEnv, agent.obsDim);
            const act = agent.act(rows[0], true);
            const actions = new Float64Array(nEnv * agent.actDim);
            actions.set(act, 0);
            const frame = await client.step(actions);
            total += frame.rew[0];
            obs = frame.obs;
            if (frame.term[0] || frame.trunc[0]) break;
        }
        returns.push(total);
    }
    return returns.reduce((a, b) => a + b, 0) / returns.length;
}

/**
 * Train for `totalTransitions` collected transitions against a running
 * server. Returns the evaluation curve; `outDir` receives checkpoint.json
 * and curve.csv.
 */
export async function train(host: string, port: number, cfg: SacConfig,
                            totalTransitions: number, outDir: string,
                            log: (s: string) => void = console.log): Promise<TrainResult> {
    fs.mkdirSync(outDir, { recursive: true });
    const client = await EnvClient.connect(host, port);
    const spec = await client.spec();
    if (spec.nEnv !== cfg.nEnv) {
        throw new Error(`server has n_env=${spec.nEnv}, config expects ${cfg.nEnv}`);
    }
    const agent = new SacAgent(spec.obsDim, spec.actDim, cfg);
    const buffer = new ReplayBuffer(cfg.replayCapacity, spec.obsDim, spec.actDim);
    const rand = makeRng(cfg.seed);
    const maxSteps = Math.floor(256 / cfg.nRep);
    const ckptPath = path.join(outDir, "checkpoint.json");
    const curvePath = path.join(outDir, "curve.csv");
    fs.writeFileSync(curvePath, "transitions,mean_return\n");

    const evals: Array<{ transitions: number; meanReturn: number }> = [];
    const saveCkpt = () =>
        fs.writeFileSync(ckptPath, JSON.stringify(agent.checkpoint()));

    const runEval = async (transitions: number) => {
        const mean = await evaluate(client, agent, spec.nEnv, cfg.evalEpisodes, maxSteps);
        evals.push({ transitions, meanReturn: mean });
        fs.appendFileSync(curvePath, `${transitions},${mean}\n`);
        saveCkpt();
        log(`eval @ ${transitions} transitions: mean return ${mean.toFixed(2)}`);
    };

    let obs = await client.reset();
    let transitions = 0;
    let batchSteps = 0;
    try {
        await runEval(0); // the first checkpoint, before any training
        obs = await client.reset();
        while (transitions < totalTransitions) {
            const rows = rowsOf(obs, spec.nEnv, spec.obsDim);
            let actRows: Float64Array[];
            if (transitions < cfg.warmupTransitions) {
                actRows = rows.map(() => {
                    const a = new Float64Array(spec.actDim);
                    for (let i = 0; i < a.length; i++) a[i] = 2 * rand() - 1;
                    return a;
                });
            } else {
                actRows = agent.actBatch(rows, false);
            }
            const actions = new Float64Array(spec.nEnv * spec.actDim);
            actRows.forEach((a, i) => actions.set(a, i * spec.actDim));
            const frame = await client.step(actions);
            const dones = frame.term.map((t, i) => t || frame.trunc[i]);
            buffer.addBatch(obs, actions, frame.rew, frame.obs, frame.term);
            for (const row of rowsOf(frame.obs, spec.nEnv, spec.obsDim)) {
                agent.normalizer.update(row);
            }
            obs = frame.obs;
            transitions += spec.nEnv;
            batchSteps += 1;
            if (buffer.size >= Math.max(cfg.batchSize, cfg.warmupTransitions)) {
                for (let u = 0; u < cfg.updatesPerStep; u++) {
                    agent.update(buffer.sample(cfg.batchSize, rand));
                }
            }
            if (batchSteps % cfg.evalEvery === 0) {
                await runEval(transitions);
            }
        }
        await runEval(transitions);
    } catch (err) {
        saveCkpt(); // resumable on connection loss
        client.disconnect();
        throw err;
    }
    client.disconnect();
    return {
        transitions,
        evals,
        firstEval: evals[0]?.meanReturn ?? NaN,
        lastEval: evals[evals.length - 1]?.meanReturn ?? NaN,
        checkpointPath: ckptPath,
    };
}
