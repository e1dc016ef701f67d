#!/usr/bin/env node
import { promises as fs } from "node:fs";

import { DEFAULT_MODEL, resolveEmbedder } from "./embedder.js";
import { exportEmbeddings } from "./exportEmbeddings.js";
import {
    AcceptAllBackend, DecisionBackend, DEFAULT_TEMPLATE, HeuristicBackend,
    LlmBackend, createValidatorServer,
} from "./validatorService.js";

interface Flags {
    [key: string]: string | boolean;
}

function parseFlags(argv: string[]): Flags {
    const flags: Flags = {};
    for (let i = 0; i < argv.length; i += 1) {
        const arg = argv[i];
        if (!arg.startsWith("--")) {
            throw new Error(`unexpected argument ${arg}`);
        }
        const key = arg.slice(2);
        const next = argv[i + 1];
        if (next === undefined || next.startsWith("--")) {
            flags[key] = true;
        } else {
            flags[key] = next;
            i += 1;
        }
    }
    return flags;
}

function required(flags: Flags, name: string): string {
    const value = flags[name];
    if (typeof value !== "string") {
        throw new Error(`--${name} is required`);
    }
    return value;
}

function optional(flags: Flags, name: string, fallback: string): string {
    const value = flags[name];
    return typeof value === "string" ? value : fallback;
}

async function runExport(flags: Flags): Promise<number> {
    const model = optional(flags, "model", DEFAULT_MODEL);
    const embedder = resolveEmbedder(optional(flags, "backend", "auto"), model);
    const count = await exportEmbeddings(
        {
            labelsPath: required(flags, "labels"),
            outPath: required(flags, "out"),
            indexPath: required(flags, "index"),
            normalize: flags.normalize === true,
            batchSize: Number.parseInt(optional(flags, "batch-size", "32"), 10),
        },
        embedder,
    );
    console.log(`embedded ${count} labels (dim ${embedder.dim}) via ${embedder.name}`);
    return 0;
}

async function runServe(flags: Flags): Promise<number> {
    const kind = optional(flags, "backend", "heuristic");
    let backend: DecisionBackend;
    if (kind === "accept-all") {
        backend = new AcceptAllBackend();
    } else if (kind === "heuristic") {
        backend = new HeuristicBackend();
    } else if (kind === "llm") {
        let template = DEFAULT_TEMPLATE;
        if (typeof flags.template === "string") {
            template = await fs.readFile(flags.template, "utf-8");
        }
        backend = new LlmBackend(
            required(flags, "endpoint"),
            optional(flags, "model", "deepseek-reasoner"),
            typeof flags["api-key"] === "string" ? (flags["api-key"] as string) : process.env.LLM_API_KEY,
            template,
            Number.parseInt(optional(flags, "timeout-ms", "30000"), 10),
        );
    } else {
        throw new Error(`unknown validator backend ${kind}`);
    }
    const port = Number.parseInt(optional(flags, "port", "8700"), 10);
    const batchSize = Number.parseInt(optional(flags, "batch-size", "32"), 10);
    const server = createValidatorServer({ backend, batchSize });
    await new Promise<void>((resolve) => server.listen(port, resolve));
    console.log(`validator (${backend.name}) listening on port ${port}`);
    return new Promise<number>(() => undefined); // runs until killed
}

const USAGE = `kgssl-bridge <command>

commands:
  export-embeddings --labels FILE --out FEATURES.ntdf --index INDEX.tsv
                    [--model ID] [--backend auto|xenova|hash|hash:DIM|http(s)://URL]
                    [--normalize] [--batch-size N]
  serve-validator   [--port 8700] [--backend heuristic|accept-all|llm]
                    [--endpoint URL] [--model ID] [--api-key KEY]
                    [--template FILE] [--batch-size N] [--timeout-ms N]
`;

async function main(): Promise<number> {
    const [command, ...rest] = process.argv.slice(2);
    try {
        if (command === "export-embeddings") {
            return await runExport(parseFlags(rest));
        }
        if (command === "serve-validator") {
            return await runServe(parseFlags(rest));
        }
        console.error(USAGE);
        return 1;
    } catch (error) {
        console.error(`error: ${(error as Error).message}`);
        return 1;
    }
}

main().then((code) => {
    if (code !== 0) {
        process.exitCode = code;
    }
});
