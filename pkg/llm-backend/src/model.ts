/**
 * A tiny self-contained causal language model.
 *
 * Character-level over printable ASCII. The "weights" are hashed n-gram
 * tables: every (context window, next token) pair maps through an integer
 * mix to a value in (-1, 1), so a model is fully determined by its seed and
 * needs no files or downloads. Next-token logits depend only on the prefix,
 * which is the property everything downstream (scoring, generation,
 * determinism guarantees) relies on.
 */

export const EOS = 0;
const NEWLINE_ID = 1;
const FIRST_CHAR = 32; // space
const LAST_CHAR = 126; // ~
export const VOCAB_SIZE = 2 + (LAST_CHAR - FIRST_CHAR + 1); // EOS + newline + printable

const UNKNOWN_CHAR = "?".charCodeAt(0) - FIRST_CHAR + 2;

export function encode(text: string): number[] {
  const ids: number[] = [];
  for (const ch of text) {
    const code = ch.codePointAt(0)!;
    if (ch === "\n") ids.push(NEWLINE_ID);
    else if (code >= FIRST_CHAR && code <= LAST_CHAR) ids.push(code - FIRST_CHAR + 2);
    else ids.push(UNKNOWN_CHAR);
  }
  return ids;
}

export function decode(ids: readonly number[]): string {
  let out = "";
  for (const id of ids) {
    if (id === EOS) break;
    out += id === NEWLINE_ID ? "\n" : String.fromCharCode(id - 2 + FIRST_CHAR);
  }
  return out;
}

function mix(h: number, x: number): number {
  h = (h ^ x) >>> 0;
  h = Math.imul(h, 0x85ebca6b) >>> 0;
  h = (h ^ (h >>> 13)) >>> 0;
  h = Math.imul(h, 0xc2b2ae35) >>> 0;
  return (h ^ (h >>> 16)) >>> 0;
}

/** Map a 32-bit hash to (-1, 1). */
function unit(h: number): number {
  return ((h >>> 8) / 0x1000000) * 2 - 1;
}

export function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h = (h ^ text.charCodeAt(i)) >>> 0;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Deterministic uniform stream on [0, 1). */
export function splitmix32(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (s + 0x9e3779b9) >>> 0;
    let z = s;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0;
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0;
    z = (z ^ (z >>> 15)) >>> 0;
    return z / 0x100000000;
  };
}

export interface Adapter {
  clusterId: number;
  name: string;
  seed: number;
  scale: number;
}

export interface ModelSpec {
  seed: number;
  /** longest n-gram context consulted */
  order: number;
  /** weight per context length, index n-1 */
  orderWeights: number[];
}

export const MODEL_REGISTRY: Record<string, ModelSpec> = {
  "tinylm-a": { seed: 0x000a11ce, order: 3, orderWeights: [1.0, 1.6, 2.2] },
  "tinylm-b": { seed: 0x0b0b5eed, order: 2, orderWeights: [1.2, 2.0] },
};

// character-class prior so samples look like text instead of line noise
const CHAR_PRIOR = new Float64Array(VOCAB_SIZE);
for (let id = 2; id < VOCAB_SIZE; id++) {
  const code = id - 2 + FIRST_CHAR;
  const ch = String.fromCharCode(code);
  if (ch >= "a" && ch <= "z") CHAR_PRIOR[id] = 1.2;
  else if (ch === " ") CHAR_PRIOR[id] = 0.9;
  else if (".,'!?".includes(ch)) CHAR_PRIOR[id] = 0.1;
  else if (ch >= "A" && ch <= "Z") CHAR_PRIOR[id] = -0.5;
  else if (ch >= "0" && ch <= "9") CHAR_PRIOR[id] = -0.7;
  else CHAR_PRIOR[id] = -1.2;
}
CHAR_PRIOR[NEWLINE_ID] = -1.6;
CHAR_PRIOR[EOS] = -4.0;

// EOS pressure grows with prefix length (still a pure function of the
// prefix), so generations end on their own after a paragraph or so
const EOS_RAMP = 0.025;
const EOS_RAMP_CAP = 5.0;

export class TinyCausalLM {
  readonly name: string;
  readonly spec: ModelSpec;

  constructor(name: string, spec: ModelSpec) {
    this.name = name;
    this.spec = spec;
  }

  static load(name: string): TinyCausalLM {
    const spec = MODEL_REGISTRY[name];
    if (!spec) {
      const known = Object.keys(MODEL_REGISTRY).join(", ");
      throw new Error(`unknown model '${name}' (known: ${known})`);
    }
    return new TinyCausalLM(name, spec);
  }

  /** Raw next-token logits given a prefix, with an optional adapter delta. */
  logits(prefix: readonly number[], adapter?: Adapter): Float64Array {
    const out = new Float64Array(VOCAB_SIZE);
    out.set(CHAR_PRIOR);
    out[EOS] += Math.min(EOS_RAMP * prefix.length, EOS_RAMP_CAP);

    const { seed, order, orderWeights } = this.spec;
    for (let n = 1; n <= order && n <= prefix.length + 1; n++) {
      // context of length n-1 is valid even at the very start of a text
      if (n - 1 > prefix.length) break;
      let h = mix(seed, n);
      for (let k = prefix.length - (n - 1); k < prefix.length; k++) {
        h = mix(h, prefix[k] + 1);
      }
      const w = orderWeights[n - 1];
      for (let v = 0; v < VOCAB_SIZE; v++) {
        out[v] += w * unit(mix(h, Math.imul(v + 1, 0x9e3779b1) >>> 0));
      }
    }
    if (adapter) {
      const last = prefix.length ? prefix[prefix.length - 1] : -1;
      const h = mix(adapter.seed, last + 2);
      for (let v = 0; v < VOCAB_SIZE; v++) {
        out[v] += adapter.scale * unit(mix(h, v + 1));
      }
    }
    return out;
  }

  /** Log-softmax of logits: log P(token | prefix) per token. */
  logProbs(prefix: readonly number[], adapter?: Adapter): Float64Array {
    return logSoftmax(this.logits(prefix, adapter));
  }
}

export function logSoftmax(logits: Float64Array): Float64Array {
  let max = -Infinity;
  for (const x of logits) if (x > max) max = x;
  let sum = 0;
  for (const x of logits) sum += Math.exp(x - max);
  const logZ = max + Math.log(sum);
  const out = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) out[i] = logits[i] - logZ;
  return out;
}

export function softmax(logits: Float64Array, temperature = 1.0): Float64Array {
  if (!(temperature > 0)) throw new Error(`temperature must be > 0, got ${temperature}`);
  let max = -Infinity;
  for (const x of logits) if (x > max) max = x;
  const out = new Float64Array(logits.length);
  let sum = 0;
  for (let i = 0; i < logits.length; i++) {
    out[i] = Math.exp((logits[i] - max) / temperature);
    sum += out[i];
  }
  for (let i = 0; i < logits.length; i++) out[i] /= sum;
  return out;
}

export function argmax(values: Float64Array): number {
  let best = 0;
  for (let i = 1; i < values.length; i++) if (values[i] > values[best]) best = i;
  return best;
}

export interface GenerateOptions {
  maxTokens: number;
  temperature: number;
  /** stream seed; ignored at temperature 0 (greedy) */
  seed?: number;
}

/**
 * Sample a continuation of the prompt. Temperature 0 is greedy and fully
 * deterministic; above 0 the draw stream is seeded, so identical
 * (prompt, options, seed) triples reproduce identical text.
 */
export function generate(
  model: TinyCausalLM,
  promptIds: readonly number[],
  options: GenerateOptions,
  adapter?: Adapter,
): string {
  const prefix = [...promptIds];
  const generated: number[] = [];
  const next = splitmix32(options.seed ?? 0);
  for (let step = 0; step < options.maxTokens; step++) {
    const logits = model.logits(prefix, adapter);
    let token: number;
    if (options.temperature === 0) {
      token = argmax(logits);
    } else {
      const probs = softmax(logits, options.temperature);
      let u = next();
      token = VOCAB_SIZE - 1;
      for (let v = 0; v < VOCAB_SIZE; v++) {
        u -= probs[v];
        if (u <= 0) {
          token = v;
          break;
        }
      }
    }
    if (token === EOS) break;
    generated.push(token);
    prefix.push(token);
  }
  return decode(generated);
}
