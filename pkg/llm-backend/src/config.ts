import yargs from "yargs";

export interface BackendConfig {
  model: string;
  adapters?: string;
  port: number;
  maxTokens: number;
  temperature: number;
  normalizeScores: boolean;
  maxConcurrency: number;
  seed: number;
}

export const DEFAULTS = {
  model: "tinylm-a",
  port: 8787,
  // our defaults: 128-token generation cap, temperature 0.8 for acts
  maxTokens: 128,
  temperature: 0.8,
  normalizeScores: false,
  maxConcurrency: 4,
  seed: 0,
} as const;

export function parseConfig(argv: readonly string[]): BackendConfig {
  const parsed = yargs(argv)
    .option("model", {
      type: "string",
      default: DEFAULTS.model,
      describe: "model name to serve",
    })
    .option("adapters", {
      type: "string",
      describe: "directory of per-cluster adapter JSON files",
    })
    .option("port", { type: "number", default: DEFAULTS.port })
    .option("max-tokens", {
      type: "number",
      default: DEFAULTS.maxTokens,
      describe: "generation length cap in tokens",
    })
    .option("temperature", {
      type: "number",
      default: DEFAULTS.temperature,
      describe: "sampling temperature for /v1/act (0 = greedy)",
    })
    .option("normalize-scores", {
      type: "boolean",
      default: DEFAULTS.normalizeScores,
      describe: "divide survey option scores by token count",
    })
    .option("max-concurrency", {
      type: "number",
      default: DEFAULTS.maxConcurrency,
      describe: "requests evaluated at once; the rest queue",
    })
    .option("seed", {
      type: "number",
      default: DEFAULTS.seed,
      describe: "server seed mixed into act sampling",
    })
    .strict()
    .parseSync();

  if (!(parsed.temperature >= 0)) throw new Error("temperature must be >= 0");
  if (!(parsed["max-tokens"] > 0)) throw new Error("max-tokens must be > 0");
  if (!(parsed["max-concurrency"] >= 1)) throw new Error("max-concurrency must be >= 1");

  return {
    model: parsed.model,
    adapters: parsed.adapters,
    port: parsed.port,
    maxTokens: parsed["max-tokens"],
    temperature: parsed.temperature,
    normalizeScores: parsed["normalize-scores"],
    maxConcurrency: parsed["max-concurrency"],
    seed: parsed.seed >>> 0,
  };
}
