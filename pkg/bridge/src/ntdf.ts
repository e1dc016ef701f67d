import { promises as fs } from "node:fs";

export const FEATURE_MAGIC = "NTDF";
export const FORMAT_VERSION = 1;

/**
 * Serialize a feature matrix into the binary layout the graph workbench
 * ingests: magic "NTDF", u32 version, u64 row count, u32 dimension, then
 * row-major little-endian float32 values.
 */
export function encodeFeatureMatrix(rows: number[][]): Buffer {
    if (rows.length === 0) {
        throw new Error("feature matrix needs at least one row");
    }
    const dim = rows[0].length;
    if (dim <= 0) {
        throw new Error("feature dimension must be positive");
    }
    for (const row of rows) {
        if (row.length !== dim) {
            throw new Error(`ragged feature matrix: expected ${dim}, got ${row.length}`);
        }
    }
    const header = Buffer.alloc(20);
    header.write(FEATURE_MAGIC, 0, "ascii");
    header.writeUInt32LE(FORMAT_VERSION, 4);
    header.writeBigUInt64LE(BigInt(rows.length), 8);
    header.writeUInt32LE(dim, 16);
    const payload = Buffer.alloc(rows.length * dim * 4);
    let offset = 0;
    for (const row of rows) {
        for (const value of row) {
            if (!Number.isFinite(value)) {
                throw new Error("feature values must be finite");
            }
            payload.writeFloatLE(value, offset);
            offset += 4;
        }
    }
    return Buffer.concat([header, payload]);
}

export async function writeFeatureFile(path: string, rows: number[][]): Promise<void> {
    await fs.writeFile(path, encodeFeatureMatrix(rows));
}

/** Companion index: one `row<TAB>label` line per feature row. */
export async function writeIndexFile(path: string, labels: string[]): Promise<void> {
    const lines = labels.map((label, i) => `${i}\t${label}`);
    await fs.writeFile(path, lines.join("\n") + "\n", "utf-8");
}

export function l2Normalize(row: number[]): number[] {
    const norm = Math.sqrt(row.reduce((acc, v) => acc + v * v, 0));
    if (norm === 0) {
        return row.slice();
    }
    return row.map((v) => v / norm);
}
