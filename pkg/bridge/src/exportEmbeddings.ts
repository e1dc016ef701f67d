import { promises as fs } from "node:fs";

import { Embedder } from "./embedder.js";
import { l2Normalize, writeFeatureFile, writeIndexFile } from "./ntdf.js";

export interface EmbedJob {
    labelsPath: string;
    outPath: string;
    indexPath: string;
    normalize: boolean;
    batchSize: number;
}

export async function readLabels(path: string): Promise<string[]> {
    const text = await fs.readFile(path, "utf-8");
    const labels = text
        .split("\n")
        .map((line) => line.trimEnd())
        .filter((line) => line.length > 0 && !line.startsWith("#"));
    if (labels.length === 0) {
        throw new Error(`${path}: no labels found`);
    }
    return labels;
}

/**
 * Embed every label in file order and write the feature + index pair.
 * Rows come out one per label; identical labels produce identical rows.
 */
export async function exportEmbeddings(job: EmbedJob, embedder: Embedder): Promise<number> {
    const labels = await readLabels(job.labelsPath);
    const rows: number[][] = [];
    for (let start = 0; start < labels.length; start += job.batchSize) {
        const chunk = labels.slice(start, start + job.batchSize);
        const embedded = await embedder.embedBatch(chunk);
        for (const row of embedded) {
            if (row.length !== embedder.dim) {
                throw new Error(
                    `backend emitted width ${row.length}, expected ${embedder.dim}`,
                );
            }
            rows.push(job.normalize ? l2Normalize(row) : row);
        }
    }
    await writeFeatureFile(job.outPath, rows);
    await writeIndexFile(job.indexPath, labels);
    return rows.length;
}
