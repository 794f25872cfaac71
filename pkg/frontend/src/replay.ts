/**
 * Uniform-sampling ring replay buffer for (s, a, r, s', done) transitions.
 * Storage is flat Float64Arrays sized at construction; writes overwrite the
 * oldest transitions once the capacity wraps.
 */

export class ReplayBuffer {
    readonly capacity: number;
    readonly obsDim: number;
    readonly actDim: number;
    private states: Float64Array;
    private actions: Float64Array;
    private rewards: Float64Array;
    private nextStates: Float64Array;
    private dones: Uint8Array;
    private index = 0;
    private filled = 0;

    constructor(capacity: number, obsDim: number, actDim: number) {
        if (capacity <= 0) throw new Error("capacity must be positive");
        this.capacity = capacity;
        this.obsDim = obsDim;
        this.actDim = actDim;
        this.states = new Float64Array(capacity * obsDim);
        this.actions = new Float64Array(capacity * actDim);
        this.rewards = new Float64Array(capacity);
        this.nextStates = new Float64Array(capacity * obsDim);
        this.dones = new Uint8Array(capacity);
    }

    get size(): number {
        return this.filled;
    }

    add(state: Float64Array, action: Float64Array, reward: number,
        nextState: Float64Array, done: boolean): void {
        const i = this.index;
        this.states.set(state, i * this.obsDim);
        this.actions.set(action, i * this.actDim);
        this.rewards[i] = reward;
        this.nextStates.set(nextState, i * this.obsDim);
        this.dones[i] = done ? 1 : 0;
        this.index = (i + 1) % this.capacity;
        this.filled = Math.min(this.filled + 1, this.capacity);
    }

    /** Add one row per environment from flat row-major batch arrays. */
    addBatch(states: Float64Array, actions: Float64Array, rewards: Float64Array,
             nextStates: Float64Array, dones: boolean[]): void {
        const n = rewards.length;
        for (let e = 0; e < n; e++) {
            this.add(
                states.subarray(e * this.obsDim, (e + 1) * this.obsDim),
                actions.subarray(e * this.actDim, (e + 1) * this.actDim),
                rewards[e],
                nextStates.subarray(e * this.obsDim, (e + 1) * this.obsDim),
                dones[e],
            );
        }
    }

    sample(batch: number, rand: () => number): {
        states: Float64Array; actions: Float64Array; rewards: Float64Array;
        nextStates: Float64Array; dones: Float64Array;
    } {
        if (this.filled === 0) throw new Error("cannot sample from an empty buffer");
        const s = new Float64Array(batch * this.obsDim);
        const a = new Float64Array(batch * this.actDim);
        const r = new Float64Array(batch);
        const ns = new Float64Array(batch * this.obsDim);
        const d = new Float64Array(batch);
        for (let k = 0; k < batch; k++) {
            const i = Math.floor(rand() * this.filled);
            s.set(this.states.subarray(i * this.obsDim, (i + 1) * this.obsDim), k * this.obsDim);
            a.set(this.actions.subarray(i * this.actDim, (i + 1) * this.actDim), k * this.actDim);
            r[k] = this.rewards[i];
            ns.set(this.nextStates.subarray(i * this.obsDim, (i + 1) * this.obsDim), k * this.obsDim);
            d[k] = this.dones[i];
        }
        return { states: s, actions: a, rewards: r, nextStates: ns, dones: d };
    }
}

/** Deterministic xorshift RNG so training runs are reproducible. */
export function makeRng(seed: number): () => number {
    let state = (seed >>> 0) || 0x9e3779b9;
    return () => {
        state ^= state << 13;
        state >>>= 0;
        state ^= state >> 17;
        state ^= state << 5;
        state >>>= 0;
        return state / 0x100000000;
    };
}
