/**
 * Option scoring: log P(option | prompt) as a sum of token-level
 * conditional log-probs under the model. Pure lookups, no sampling, so
 * scores are deterministic regardless of temperature settings.
 */

import { encode, logSoftmax, TinyCausalLM, type Adapter } from "./model.js";

export interface ScoreSettings {
  /** divide each option score by its token count */
  normalize: boolean;
}

export function scoreOption(
  model: TinyCausalLM,
  promptIds: readonly number[],
  option: string,
  settings: ScoreSettings,
  adapter?: Adapter,
): number {
  const optionIds = encode(option);
  if (optionIds.length === 0) return 0.0;
  const prefix = [...promptIds];
  let total = 0;
  for (const id of optionIds) {
    const logProbs = logSoftmax(model.logits(prefix, adapter));
    total += logProbs[id];
    prefix.push(id);
  }
  return settings.normalize ? total / optionIds.length : total;
}

export function scoreOptions(
  model: TinyCausalLM,
  promptIds: readonly number[],
  options: readonly string[],
  settings: ScoreSettings,
  adapter?: Adapter,
): number[] {
  return options.map((option) => scoreOption(model, promptIds, option, settings, adapter));
}
