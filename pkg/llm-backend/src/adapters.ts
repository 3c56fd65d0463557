/**
 * Per-cluster adapters: small additive logit deltas loaded from a directory
 * of JSON files, one per persona cluster. Loading is strict. A malformed
 * file is a startup error, not a warning, so a misconfigured server never
 * comes up half-working.
 */

import fs from "node:fs";
import path from "node:path";
import { z } from "zod";
import type { Adapter } from "./model.js";

const adapterSchema = z.object({
  cluster_id: z.number().int().min(0),
  name: z.string().min(1),
  seed: z.number().int(),
  scale: z.number().finite(),
});

export function parseAdapter(raw: unknown, source: string): Adapter {
  const parsed = adapterSchema.safeParse(raw);
  if (!parsed.success) {
    throw new Error(`bad adapter file ${source}: ${parsed.error.issues[0].message}`);
  }
  const { cluster_id, name, seed, scale } = parsed.data;
  return { clusterId: cluster_id, name, seed: seed >>> 0, scale };
}

/** Load every *.json in dir, keyed by cluster id. Duplicate ids are an error. */
export function loadAdapterDir(dir: string): Map<number, Adapter> {
  let entries: string[];
  try {
    entries = fs.readdirSync(dir);
  } catch (err) {
    throw new Error(`cannot read adapter directory ${dir}: ${(err as Error).message}`);
  }
  const adapters = new Map<number, Adapter>();
  for (const entry of entries.sort()) {
    if (!entry.endsWith(".json")) continue;
    const file = path.join(dir, entry);
    let raw: unknown;
    try {
      raw = JSON.parse(fs.readFileSync(file, "utf8"));
    } catch (err) {
      throw new Error(`bad adapter file ${file}: ${(err as Error).message}`);
    }
    const adapter = parseAdapter(raw, file);
    if (adapters.has(adapter.clusterId)) {
      throw new Error(`duplicate adapter for cluster ${adapter.clusterId} in ${file}`);
    }
    adapters.set(adapter.clusterId, adapter);
  }
  if (adapters.size === 0) {
    throw new Error(`adapter directory ${dir} contains no .json adapter files`);
  }
  return adapters;
}
