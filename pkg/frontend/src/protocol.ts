/**
 * Client for the gaitmpc batch-environment protocol: newline-delimited JSON
 * over TCP, numbers as decimal-serialized IEEE-754 doubles, matrices as flat
 * row-major arrays.
 */

import * as net from "node:net";

export interface EnvSpec {
    obsDim: number;
    actDim: number;
    nEnv: number;
}

export interface StepFrame {
    obs: Float64Array;       // nEnv x obsDim, row-major
    rew: Float64Array;       // nEnv
    term: boolean[];
    trunc: boolean[];
}

export class ProtocolError extends Error {}

/** Line-buffered request/reply socket; one outstanding request at a time. */
export class EnvClient {
    private socket: net.Socket;
    private buffer = "";
    private waiters: Array<(line: string) => void> = [];
    private closed = false;

    private constructor(socket: net.Socket) {
        this.socket = socket;
        socket.setEncoding("utf8");
        socket.on("data", (chunk: string) => {
            this.buffer += chunk;
            let idx: number;
            while ((idx = this.buffer.indexOf("\n")) >= 0) {
                const line = this.buffer.slice(0, idx);
                this.buffer = this.buffer.slice(idx + 1);
                const w = this.waiters.shift();
                if (w) w(line);
            }
        });
        socket.on("close", () => {
            this.closed = true;
        });
    }

    static connect(host: string, port: number, timeoutMs = 10000): Promise<EnvClient> {
        return new Promise((resolve, reject) => {
            const socket = net.createConnection({ host, port });
            const timer = setTimeout(
                () => reject(new ProtocolError(`connect timeout to ${host}:${port}`)),
                timeoutMs,
            );
            socket.once("connect", () => {
                clearTimeout(timer);
                resolve(new EnvClient(socket));
            });
            socket.once("error", (e) => {
                clearTimeout(timer);
                reject(e);
            });
        });
    }

    private call(payload: object): Promise<any> {
        if (this.closed) {
            return Promise.reject(new ProtocolError("connection closed"));
        }
        return new Promise((resolve, reject) => {
            this.waiters.push((line) => {
                try {
                    const out = JSON.parse(line);
                    if (out.error) reject(new ProtocolError(`server error: ${out.error}`));
                    else resolve(out);
                } catch (e) {
                    reject(e);
                }
            });
            this.socket.write(JSON.stringify(payload) + "\n", (err) => {
                if (err) reject(err);
            });
        });
    }

    async spec(): Promise<EnvSpec> {
        const out = await this.call({ op: "spec" });
        return { obsDim: out.obs_dim, actDim: out.act_dim, nEnv: out.n_env };
    }

    async reset(mask?: boolean[], seeds?: number[]): Promise<Float64Array> {
        const req: any = { op: "reset" };
        if (mask) req.mask = mask;
        if (seeds) req.seeds = seeds;
        const out = await this.call(req);
        return Float64Array.from(out.obs);
    }

    async step(actions: Float64Array | number[]): Promise<StepFrame> {
        const out = await this.call({ op: "step", actions: Array.from(actions) });
        return {
            obs: Float64Array.from(out.obs),
            rew: Float64Array.from(out.rew),
            term: out.term,
            trunc: out.trunc,
        };
    }

    async close(): Promise<void> {
        try {
            await this.call({ op: "close" });
        } finally {
            this.socket.end();
            this.socket.destroy();
        }
    }

    /** Closes only the local socket (server keeps running). */
    disconnect(): void {
        this.socket.end();
        this.socket.destroy();
    }
}

/** Parse one newline-JSON frame line into doubles (used by fidelity tests). */
export function parseNumberLine(line: string): Float64Array {
    const obj = JSON.parse(line);
    return Float64Array.from(obj.values);
}
