/**
 * HTTP wire protocol:
 *   POST /v1/act    {agent_id, cluster_id, persona, context} -> {text}
 *   POST /v1/survey ...same + {question, options}            -> {log_scores}
 *   GET  /v1/health                                          -> {model, adapters}
 * Every error, including unknown paths, is JSON with an "error" field.
 */

import http from "node:http";
import express, { type Request, type Response, type NextFunction } from "express";
import { z } from "zod";
import { loadAdapterDir } from "./adapters.js";
import type { BackendConfig } from "./config.js";
import {
  encode,
  fnv1a,
  generate,
  TinyCausalLM,
  type Adapter,
} from "./model.js";
import { buildActPrompt, buildSurveyPrompt } from "./prompts.js";
import { scoreOptions } from "./scoring.js";

const contextSchema = z.array(z.object({ author: z.string(), text: z.string() }));

const actSchema = z.object({
  agent_id: z.string().min(1),
  cluster_id: z.number().int().min(0),
  persona: z.string().min(1),
  context: contextSchema,
});

const surveySchema = actSchema.extend({
  question: z.string().min(1),
  options: z.array(z.string()).min(1),
});

/** FIFO gate: at most `limit` requests evaluate at once, the rest queue. */
export class Semaphore {
  private waiting: Array<() => void> = [];
  private free: number;

  constructor(limit: number) {
    this.free = limit;
  }

  async run<T>(fn: () => T | Promise<T>): Promise<T> {
    if (this.free > 0) this.free--;
    else await new Promise<void>((resolve) => this.waiting.push(resolve));
    try {
      return await fn();
    } finally {
      const next = this.waiting.shift();
      if (next) next();
      else this.free++;
    }
  }
}

export interface BackendState {
  config: BackendConfig;
  model: TinyCausalLM;
  adapters: Map<number, Adapter> | null;
}

/** Load the model and adapters, or throw. Nothing is served on failure. */
export function initBackend(config: BackendConfig): BackendState {
  const model = TinyCausalLM.load(config.model);
  const adapters = config.adapters ? loadAdapterDir(config.adapters) : null;
  return { config, model, adapters };
}

function mixSeed(a: number, b: number): number {
  let h = (a ^ 0x9e3779b9) >>> 0;
  h = Math.imul(h ^ b, 0x85ebca6b) >>> 0;
  return (h ^ (h >>> 15)) >>> 0;
}

export function createApp(state: BackendState): express.Express {
  const { config, model, adapters } = state;
  const gate = new Semaphore(config.maxConcurrency);
  const app = express();
  app.use(express.json({ limit: "1mb" }));

  const fail = (res: Response, status: number, message: string) =>
    res.status(status).json({ error: message });

  const requireObjectBody = (req: Request, res: Response): boolean => {
    if (typeof req.body !== "object" || req.body === null || Array.isArray(req.body)) {
      fail(res, 400, "request body must be a JSON object");
      return false;
    }
    return true;
  };

  // null when the cluster is unknown; the response has already been sent
  const resolveAdapter = (res: Response, clusterId: number): Adapter | undefined | null => {
    if (!adapters) return undefined; // open roster: base model for everyone
    const adapter = adapters.get(clusterId);
    if (!adapter) {
      fail(res, 422, `no adapter for cluster ${clusterId}`);
      return null;
    }
    return adapter;
  };

  app.get("/v1/health", (_req, res) => {
    const names = adapters
      ? [...adapters.entries()].sort((a, b) => a[0] - b[0]).map(([, a]) => a.name)
      : [];
    res.json({ model: model.name, adapters: names });
  });

  app.post("/v1/act", async (req, res) => {
    if (!requireObjectBody(req, res)) return;
    const parsed = actSchema.safeParse(req.body);
    if (!parsed.success) {
      return fail(res, 400, `invalid act request: ${parsed.error.issues[0].message}`);
    }
    const { agent_id, cluster_id, persona, context } = parsed.data;
    const adapter = resolveAdapter(res, cluster_id);
    if (adapter === null) return;
    const prompt = buildActPrompt(agent_id, persona, context);
    const text = await gate.run(() =>
      generate(
        model,
        encode(prompt),
        {
          maxTokens: config.maxTokens,
          temperature: config.temperature,
          seed: mixSeed(mixSeed(config.seed, fnv1a(agent_id)), fnv1a(prompt)),
        },
        adapter,
      ),
    );
    res.json({ text });
  });

  app.post("/v1/survey", async (req, res) => {
    if (!requireObjectBody(req, res)) return;
    const parsed = surveySchema.safeParse(req.body);
    if (!parsed.success) {
      return fail(res, 400, `invalid survey request: ${parsed.error.issues[0].message}`);
    }
    const { agent_id, cluster_id, persona, context, question, options } = parsed.data;
    const adapter = resolveAdapter(res, cluster_id);
    if (adapter === null) return;
    const prompt = buildSurveyPrompt(agent_id, persona, context, question);
    const logScores = await gate.run(() =>
      scoreOptions(model, encode(prompt), options, { normalize: config.normalizeScores }, adapter),
    );
    res.json({ log_scores: logScores });
  });

  app.use((req, res) => {
    fail(res, 404, `no such endpoint: ${req.method} ${req.path}`);
  });

  // body-parser syntax errors land here; keep them on the wire contract
  app.use((err: Error, _req: Request, res: Response, next: NextFunction) => {
    if (res.headersSent) return next(err);
    fail(res, 400, `bad request: ${err.message}`);
  });

  return app;
}

export function startServer(state: BackendState, port: number): Promise<http.Server> {
  const app = createApp(state);
  return new Promise((resolve, reject) => {
    const server = app.listen(port, "127.0.0.1");
    server.once("listening", () => resolve(server));
    server.once("error", reject);
  });
}
