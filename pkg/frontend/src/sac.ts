/**
 * Soft actor-critic with twin critics, target networks and entropy
 * auto-tuning. Networks use three hidden layers at 60% of the input width.
 * Actions live in [-1, 1]^actDim via a tanh-squashed gaussian head.
 */

import * as tf from "@tensorflow/tfjs";

import { SacConfig } from "./config.js";

const LOG_STD_MIN = -8;
const LOG_STD_MAX = 2;

let initSeed = 1234;

function mlp(inputDim: number, hidden: number, outDim: number): tf.LayersModel {
    const model = tf.sequential();
    const init = () => tf.initializers.glorotUniform({ seed: initSeed++ });
    model.add(tf.layers.dense({ inputShape: [inputDim], units: hidden, activation: "relu", kernelInitializer: init() }));
    model.add(tf.layers.dense({ units: hidden, activation: "relu", kernelInitializer: init() }));
    model.add(tf.layers.dense({ units: hidden, activation: "relu", kernelInitializer: init() }));
    model.add(tf.layers.dense({ units: outDim, kernelInitializer: init() }));
    return model;
}

/** Streaming observation normalizer (Welford), frozen during evaluation. */
export class Normalizer {
    mean: Float64Array;
    m2: Float64Array;
    count = 1e-4;

    constructor(dim: number) {
        this.mean = new Float64Array(dim);
        this.m2 = new Float64Array(dim).fill(1.0);
    }

    update(x: Float64Array): void {
        this.count += 1;
        for (let i = 0; i < this.mean.length; i++) {
            const d = x[i] - this.mean[i];
            this.mean[i] += d / this.count;
            this.m2[i] += d * (x[i] - this.mean[i]);
        }
    }

    apply(x: Float64Array): Float64Array {
        const out = new Float64Array(x.length);
        for (let i = 0; i < x.length; i++) {
            const std = Math.sqrt(this.m2[i] / this.count) + 1e-6;
            out[i] = Math.min(10, Math.max(-10, (x[i] - this.mean[i]) / std));
        }
        return out;
    }

    toJSON() {
        return { mean: Array.from(this.mean), m2: Array.from(this.m2), count: this.count };
    }

    static fromJSON(obj: any): Normalizer {
        const n = new Normalizer(obj.mean.length);
        n.mean = Float64Array.from(obj.mean);
        n.m2 = Float64Array.from(obj.m2);
        n.count = obj.count;
        return n;
    }
}

export class SacAgent {
    readonly obsDim: number;
    readonly actDim: number;
    readonly cfg: SacConfig;
    actor: tf.LayersModel;
    q1: tf.LayersModel;
    q2: tf.LayersModel;
    q1t: tf.LayersModel;
    q2t: tf.LayersModel;
    logAlpha: tf.Variable;
    normalizer: Normalizer;
    private actorOpt: tf.Optimizer;
    private criticOpt: tf.Optimizer;
    private alphaOpt: tf.Optimizer;

    constructor(obsDim: number, actDim: number, cfg: SacConfig) {
        this.obsDim = obsDim;
        this.actDim = actDim;
        this.cfg = cfg;
        const hidden = Math.round(cfg.hiddenWidthFrac * obsDim);
        this.actor = mlp(obsDim, hidden, 2 * actDim);
        this.q1 = mlp(obsDim + actDim, hidden, 1);
        this.q2 = mlp(obsDim + actDim, hidden, 1);
        this.q1t = mlp(obsDim + actDim, hidden, 1);
        this.q2t = mlp(obsDim + actDim, hidden, 1);
        this.copyTargets(1.0);
        this.logAlpha = tf.variable(tf.scalar(Math.log(0.2)));
        this.actorOpt = tf.train.adam(cfg.actorLr);
        this.criticOpt = tf.train.adam(cfg.criticLr);
        this.alphaOpt = tf.train.adam(cfg.alphaLr);
        this.normalizer = new Normalizer(obsDim);
    }

    private copyTargets(tau: number): void {
        const pairs: Array<[tf.LayersModel, tf.LayersModel]> = [
            [this.q1, this.q1t],
            [this.q2, this.q2t],
        ];
        for (const [src, dst] of pairs) {
            const sw = src.getWeights();
            const dw = dst.getWeights();
            dst.setWeights(sw.map((w, i) =>
                tf.tidy(() => w.mul(tau).add(dw[i].mul(1 - tau)))));
        }
    }

    /** (mean, logStd) heads from the trunk output. */
    private heads(obs: tf.Tensor2D): [tf.Tensor2D, tf.Tensor2D] {
        const out = this.actor.apply(obs) as tf.Tensor2D;
        const mu = out.slice([0, 0], [-1, this.actDim]) as tf.Tensor2D;
        const logStd = tf.clipByValue(
            out.slice([0, this.actDim], [-1, this.actDim]), LOG_STD_MIN, LOG_STD_MAX,
        ) as tf.Tensor2D;
        return [mu, logStd];
    }

    /** Tanh-squashed gaussian sample with its log-probability. */
    private sampleWithLogp(obs: tf.Tensor2D): [tf.Tensor2D, tf.Tensor1D] {
        const [mu, logStd] = this.heads(obs);
        const std = logStd.exp();
        const noise = tf.randomNormal(mu.shape as [number, number]);
        const pre = mu.add(std.mul(noise)) as tf.Tensor2D;
        const act = tf.tanh(pre) as tf.Tensor2D;
        // N(pre; mu, std) log density minus the tanh volume correction
        const logpGauss = noise.square().mul(-0.5)
            .sub(logStd)
            .sub(Math.log(Math.sqrt(2 * Math.PI)))
            .sum(1);
        const corr = tf.log(tf.scalar(1).sub(act.square()).add(1e-6)).sum(1);
        return [act, logpGauss.sub(corr) as tf.Tensor1D];
    }

    act(obs: Float64Array, deterministic: boolean): Float64Array {
        let out!: Float64Array;
        tf.tidy(() => {
            const x = tf.tensor2d(Array.from(this.normalizer.apply(obs)), [1, this.obsDim]);
            if (deterministic) {
                const [mu] = this.heads(x as tf.Tensor2D);
                out = Float64Array.from(tf.tanh(mu).dataSync());
            } else {
                const [a] = this.sampleWithLogp(x as tf.Tensor2D);
                out = Float64Array.from(a.dataSync());
            }
        });
        return out;
    }

    actBatch(obsRows: Float64Array[], deterministic: boolean): Float64Array[] {
        let out!: Float64Array[];
        tf.tidy(() => {
            const flat: number[] = [];
            for (const row of obsRows) flat.push(...Array.from(this.normalizer.apply(row)));
            const x = tf.tensor2d(flat, [obsRows.length, this.obsDim]);
            let a: tf.Tensor2D;
            if (deterministic) {
                const [mu] = this.heads(x as tf.Tensor2D);
                a = tf.tanh(mu) as tf.Tensor2D;
            } else {
                [a] = this.sampleWithLogp(x as tf.Tensor2D);
            }
            const data = a.dataSync();
            out = obsRows.map((_, i) =>
                Float64Array.from(data.slice(i * this.actDim, (i + 1) * this.actDim)));
        });
        return out;
    }

    /** One gradient update on a sampled batch; returns scalar diagnostics. */
    update(batch: {
        states: Float64Array; actions: Float64Array; rewards: Float64Array;
        nextStates: Float64Array; dones: Float64Array;
    }): { criticLoss: number; actorLoss: number; alpha: number } {
        const B = batch.rewards.length;
        const toRows = (a: Float64Array, dim: number) => {
            const rows: number[] = [];
            for (let k = 0; k < B; k++) {
                const row = this.normalizer.apply(a.subarray(k * dim, (k + 1) * dim));
                rows.push(...Array.from(row));
            }
            return rows;
        };
        const s = tf.tensor2d(toRows(batch.states, this.obsDim), [B, this.obsDim]);
        const ns = tf.tensor2d(toRows(batch.nextStates, this.obsDim), [B, this.obsDim]);
        const a = tf.tensor2d(Array.from(batch.actions), [B, this.actDim]);
        const r = tf.tensor1d(Array.from(batch.rewards));
        const d = tf.tensor1d(Array.from(batch.dones));

        const target = tf.tidy(() => {
            const [na, nlogp] = this.sampleWithLogp(ns as tf.Tensor2D);
            const nq1 = this.q1t.apply(tf.concat([ns, na], 1)) as tf.Tensor2D;
            const nq2 = this.q2t.apply(tf.concat([ns, na], 1)) as tf.Tensor2D;
            const minq = tf.minimum(nq1, nq2).squeeze([1]);
            const alpha = this.logAlpha.exp();
            return r.add(tf.scalar(this.cfg.gamma).mul(tf.scalar(1).sub(d))
                .mul(minq.sub(alpha.mul(nlogp))));
        });

        let criticLossVal = 0;
        const criticVars = [...this.q1.trainableWeights, ...this.q2.trainableWeights]
            .map((w) => (w as any).val as tf.Variable);
        this.criticOpt.minimize(() => {
            const q1v = (this.q1.apply(tf.concat([s, a], 1)) as tf.Tensor2D).squeeze([1]);
            const q2v = (this.q2.apply(tf.concat([s, a], 1)) as tf.Tensor2D).squeeze([1]);
            const loss = q1v.sub(target).square().mean()
                .add(q2v.sub(target).square().mean()) as tf.Scalar;
            criticLossVal = loss.dataSync()[0];
            return loss;
        }, false, criticVars);

        let actorLossVal = 0;
        let logpMean = 0;
        const actorVars = this.actor.trainableWeights
            .map((w) => (w as any).val as tf.Variable);
        this.actorOpt.minimize(() => {
            const [pa, logp] = this.sampleWithLogp(s as tf.Tensor2D);
            const q1v = (this.q1.apply(tf.concat([s, pa], 1)) as tf.Tensor2D).squeeze([1]);
            const q2v = (this.q2.apply(tf.concat([s, pa], 1)) as tf.Tensor2D).squeeze([1]);
            const minq = tf.minimum(q1v, q2v);
            const alpha = this.logAlpha.exp();
            const loss = alpha.mul(logp).sub(minq).mean() as tf.Scalar;
            actorLossVal = loss.dataSync()[0];
            logpMean = logp.mean().dataSync()[0];
            return loss;
        }, false, actorVars);

        this.alphaOpt.minimize(() => {
            const loss = this.logAlpha.exp()
                .mul(tf.scalar(-logpMean - this.cfg.entropyTarget)) as tf.Scalar;
            return loss;
        }, false, [this.logAlpha]);

        this.copyTargets(this.cfg.tau);
        const alphaVal = this.logAlpha.exp().dataSync()[0];
        tf.dispose([s, ns, a, r, d, target]);
        return { criticLoss: criticLossVal, actorLoss: actorLossVal, alpha: alphaVal };
    }

    /** Serializable checkpoint: layer dims plus row-major weight arrays. */
    checkpoint(): object {
        const dump = (m: tf.LayersModel) =>
            m.getWeights().map((w) => ({ shape: w.shape, data: Array.from(w.dataSync()) }));
        return {
            obsDim: this.obsDim,
            actDim: this.actDim,
            actor: dump(this.actor),
            q1: dump(this.q1),
            q2: dump(this.q2),
            logAlpha: this.logAlpha.dataSync()[0],
            normalizer: this.normalizer.toJSON(),
        };
    }

    restore(ckpt: any): void {
        const load = (m: tf.LayersModel, ws: any[]) =>
            m.setWeights(ws.map((w) => tf.tensor(w.data, w.shape)));
        load(this.actor, ckpt.actor);
        load(this.q1, ckpt.q1);
        load(this.q2, ckpt.q2);
        this.copyTargets(1.0);
        this.logAlpha.assign(tf.scalar(ckpt.logAlpha));
        this.normalizer = Normalizer.fromJSON(ckpt.normalizer);
    }
}
