/** CLI entry: train against a running `gaitmpc serve` endpoint. */

import { defaultConfig } from "./config.js";
import { train } from "./train.js";

async function main(): Promise<void> {
    const args = new Map<string, string>();
    for (const arg of process.argv.slice(2)) {
        const m = arg.match(/^--([^=]+)=(.*)$/);
        if (m) args.set(m[1], m[2]);
    }
    const endpoint = args.get("endpoint") ?? "127.0.0.1:8942";
    const [host, portStr] = endpoint.split(":");
    const steps = Number(args.get("steps") ?? 50_000);
    const nEnv = Number(args.get("n-env") ?? 8);
    const nRep = Number(args.get("n-rep") ?? 5);
    const out = args.get("out") ?? "sac_out";
    const cfg = defaultConfig(nEnv, nRep);
    if (args.get("seed")) cfg.seed = Number(args.get("seed"));

    console.log(`training: ${steps} transitions against ${endpoint} ` +
        `(batch ${cfg.batchSize}, replay ${cfg.replayCapacity})`);
    const res = await train(host, Number(portStr), cfg, steps, out);
    console.log(`done: first eval ${res.firstEval.toFixed(2)} -> ` +
        `last eval ${res.lastEval.toFixed(2)}`);
    const improved = res.lastEval > res.firstEval;
    console.log(improved ? "improved over the first checkpoint"
        : "no improvement over the first checkpoint");
    process.exit(improved ? 0 : 1);
}

main().catch((e) => {
    console.error(e);
    process.exit(2);
});
