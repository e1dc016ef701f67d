import { createServer, IncomingMessage, Server, ServerResponse } from "node:http";

export interface TripleItem {
    head: string;
    relation: string;
    tail: string;
    sentence: string;
}

export interface DecisionBackend {
    readonly name: string;
    judgeBatch(items: TripleItem[]): Promise<number[]>;
}

export class AcceptAllBackend implements DecisionBackend {
    readonly name = "accept-all";

    async judgeBatch(items: TripleItem[]): Promise<number[]> {
        return items.map(() => 1);
    }
}

/** Self-relations and configurable generic endpoints are rejected. */
export class HeuristicBackend implements DecisionBackend {
    readonly name = "heuristic";
    private readonly stoplist: Set<string>;

    constructor(stoplist: string[] = ["study", "outcome", "method", "approach", "result"]) {
        this.stoplist = new Set(stoplist.map((t) => t.trim().toLowerCase()));
    }

    async judgeBatch(items: TripleItem[]): Promise<number[]> {
        return items.map((item) => {
            const head = item.head.trim().toLowerCase();
            const tail = item.tail.trim().toLowerCase();
            if (head === tail || this.stoplist.has(head) || this.stoplist.has(tail)) {
                return 0;
            }
            return 1;
        });
    }
}

export const DEFAULT_TEMPLATE =
    "You check knowledge-graph triples against their source sentence. " +
    "Sentence: \"{sentence}\". Triple: ({head}, {relation}, {tail}). " +
    "Is the relation expressed by the triple supported by the sentence context " +
    "and your linguistic knowledge? Reply with a single character: 1 for " +
    "supported, 0 for unsupported or noisy.";

export function fillTemplate(template: string, item: TripleItem): string {
    return template
        .replaceAll("{head}", item.head)
        .replaceAll("{relation}", item.relation)
        .replaceAll("{tail}", item.tail)
        .replaceAll("{sentence}", item.sentence);
}

/**
 * Chat-completions backend: one prompt per triple against an OpenAI-style
 * endpoint; the first 0/1 digit in the reply is the verdict.
 */
export class LlmBackend implements DecisionBackend {
    readonly name = "llm";

    constructor(
        private readonly endpoint: string,
        private readonly model: string,
        private readonly apiKey: string | undefined,
        private readonly template: string = DEFAULT_TEMPLATE,
        private readonly timeoutMs: number = 30_000,
    ) {}

    async judgeBatch(items: TripleItem[]): Promise<number[]> {
        const verdicts: number[] = [];
        for (const item of items) {
            verdicts.push(await this.judgeOne(item));
        }
        return verdicts;
    }

    private async judgeOne(item: TripleItem): Promise<number> {
        const headers: Record<string, string> = { "Content-Type": "application/json" };
        if (this.apiKey) {
            headers.Authorization = `Bearer ${this.apiKey}`;
        }
        const response = await fetch(`${this.endpoint}/chat/completions`, {
            method: "POST",
            headers,
            body: JSON.stringify({
                model: this.model,
                messages: [{ role: "user", content: fillTemplate(this.template, item) }],
                temperature: 0,
            }),
            signal: AbortSignal.timeout(this.timeoutMs),
        });
        if (!response.ok) {
            throw new Error(`LLM backend returned HTTP ${response.status}`);
        }
        const body = (await response.json()) as {
            choices?: { message?: { content?: string } }[];
        };
        const content = body.choices?.[0]?.message?.content ?? "";
        const match = content.match(/[01]/);
        if (!match) {
            throw new Error(`LLM reply carried no 0/1 verdict: ${content.slice(0, 80)}`);
        }
        return Number.parseInt(match[0], 10);
    }
}

export interface ServiceOptions {
    backend: DecisionBackend;
    batchSize: number;
}

function readBody(request: IncomingMessage): Promise<string> {
    return new Promise((resolve, reject) => {
        const chunks: Buffer[] = [];
        request.on("data", (chunk) => chunks.push(chunk));
        request.on("end", () => resolve(Buffer.concat(chunks).toString("utf-8")));
        request.on("error", reject);
    });
}

function send(response: ServerResponse, status: number, payload: object): void {
    const body = JSON.stringify(payload);
    response.writeHead(status, {
        "Content-Type": "application/json",
        "Content-Length": Buffer.byteLength(body),
    });
    response.end(body);
}

function parseTriples(raw: string): TripleItem[] {
    let parsed: unknown;
    try {
        parsed = JSON.parse(raw === "" ? "{}" : raw);
    } catch {
        throw new Error("request body is not valid JSON");
    }
    const triples = (parsed as { triples?: unknown }).triples;
    if (!Array.isArray(triples)) {
        throw new Error('request body must carry a "triples" array');
    }
    return triples.map((entry, i) => {
        const item = entry as Partial<TripleItem>;
        if (typeof item.head !== "string" || typeof item.relation !== "string"
            || typeof item.tail !== "string") {
            throw new Error(`triples[${i}] needs string head, relation, and tail`);
        }
        return {
            head: item.head,
            relation: item.relation,
            tail: item.tail,
            sentence: typeof item.sentence === "string" ? item.sentence : "",
        };
    });
}

/**
 * The validation wire protocol: POST /validate with a triples array comes
 * back as {"verdicts": [...]} in request order; GET /health reports 200.
 * Backend failures surface as 503 so clients can retry.
 */
export function createValidatorServer(options: ServiceOptions): Server {
    return createServer(async (request, response) => {
        try {
            if (request.method === "GET" && request.url === "/health") {
                send(response, 200, { status: "ok", backend: options.backend.name });
                return;
            }
            if (request.method !== "POST" || request.url !== "/validate") {
                send(response, 404, { error: "not found" });
                return;
            }
            let items: TripleItem[];
            try {
                items = parseTriples(await readBody(request));
            } catch (error) {
                send(response, 400, { error: (error as Error).message });
                return;
            }
            const verdicts: number[] = [];
            for (let start = 0; start < items.length; start += options.batchSize) {
                const chunk = items.slice(start, start + options.batchSize);
                const judged = await options.backend.judgeBatch(chunk);
                if (judged.length !== chunk.length
                    || judged.some((v) => v !== 0 && v !== 1)) {
                    throw new Error("backend verdicts misaligned with batch");
                }
                verdicts.push(...judged);
            }
            send(response, 200, { verdicts });
        } catch (error) {
            console.error("validation error:", (error as Error).message);
            send(response, 503, { error: (error as Error).message });
        }
    });
}
