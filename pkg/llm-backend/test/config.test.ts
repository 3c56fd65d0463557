import { describe, expect, it } from "vitest";
import { parseConfig } from "../src/config.js";

describe("config parsing", () => {
  it("applies documented defaults", () => {
    const config = parseConfig([]);
    expect(config.model).toBe("tinylm-a");
    expect(config.port).toBe(8787);
    expect(config.maxTokens).toBe(128);
    expect(config.temperature).toBe(0.8);
    expect(config.normalizeScores).toBe(false);
    expect(config.maxConcurrency).toBe(4);
    expect(config.seed).toBe(0);
    expect(config.adapters).toBeUndefined();
  });

  it("reads every flag", () => {
    const config = parseConfig([
      "--model", "tinylm-b",
      "--adapters", "/tmp/adapters",
      "--port", "9001",
      "--max-tokens", "64",
      "--temperature", "0",
      "--normalize-scores",
      "--max-concurrency", "2",
      "--seed", "99",
    ]);
    expect(config.model).toBe("tinylm-b");
    expect(config.adapters).toBe("/tmp/adapters");
    expect(config.port).toBe(9001);
    expect(config.maxTokens).toBe(64);
    expect(config.temperature).toBe(0);
    expect(config.normalizeScores).toBe(true);
    expect(config.maxConcurrency).toBe(2);
    expect(config.seed).toBe(99);
  });

  it("rejects invalid values", () => {
    expect(() => parseConfig(["--temperature", "-1"])).toThrow(/temperature/);
    expect(() => parseConfig(["--max-tokens", "0"])).toThrow(/max-tokens/);
    expect(() => parseConfig(["--max-concurrency", "0"])).toThrow(/max-concurrency/);
  });
});
