/** SAC configuration with the documented desk-scale sizing rules. */

export interface SacConfig {
    nEnv: number;
    nRep: number;
    batchSize: number;
    replayCapacity: number;
    hiddenWidthFrac: number; // hidden width = round(frac * input dim)
    gamma: number;
    tau: number;             // target-network Polyak rate
    actorLr: number;
    criticLr: number;
    alphaLr: number;
    entropyTarget: number;   // per-dimension target is -1 when NaN
    warmupTransitions: number;
    updatesPerStep: number;
    evalEvery: number;       // environment batch steps between evaluations
    evalEpisodes: number;
    seed: number;
}

/** Replay capacity 15 * floor(256 / n_rep) * n_env. */
export function replayCapacity(nRep: number, nEnv: number): number {
    return 15 * Math.floor(256 / nRep) * nEnv;
}

/**
 * Batch size scales the reference 16384 (at 800 envs) down proportionally,
 * rounded to a power of two, floored at 256.
 */
export function batchSizeFor(nEnv: number): number {
    const scaled = 16384 * (nEnv / 800);
    const pow2 = Math.pow(2, Math.round(Math.log2(Math.max(scaled, 1))));
    return Math.max(256, pow2);
}

export function defaultConfig(nEnv = 8, nRep = 5, actDim = 10): SacConfig {
    return {
        nEnv,
        nRep,
        batchSize: batchSizeFor(nEnv),
        replayCapacity: replayCapacity(nRep, nEnv),
        hiddenWidthFrac: 0.6,
        gamma: 0.99,
        tau: 0.005,
        actorLr: 3e-4,
        criticLr: 3e-4,
        alphaLr: 3e-4,
        entropyTarget: -actDim,
        warmupTransitions: 512,
        updatesPerStep: 1,
        evalEvery: 200,
        evalEpisodes: 2,
        seed: 0,
    };
}
