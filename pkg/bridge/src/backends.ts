/**
 * Embedding backends.
 *
 * The exporters only need something that maps prompts and image files to
 * fixed-width vectors. `DeterministicBackend` derives unit vectors from a
 * seeded hash of the input string: it needs no checkpoint, is byte-stable
 * across runs and platforms, and stands in for a real encoder in tests and
 * offline environments. Wire a real vision-language checkpoint by
 * implementing the same interface (e.g. around @xenova/transformers or
 * tfjs) and passing it to the exporters.
 */

export interface EmbeddingBackend {
  readonly textDim: number;
  readonly imageDim: number;
  embedText(prompt: string): Promise<Float32Array>;
  embedImage(imagePath: string): Promise<Float32Array>;
}

const MASK64 = (1n << 64n) - 1n;

/** splitmix64 step; matches the published constants. */
function mix(state: bigint): [bigint, bigint] {
  const next = (state + 0x9e3779b97f4a7c15n) & MASK64;
  let z = next;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK64;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK64;
  return [next, z ^ (z >> 31n)];
}

function hashString(text: string, seed: bigint): bigint {
  let h = seed;
  for (const byte of Buffer.from(text, "utf8")) {
    h = ((h ^ BigInt(byte)) * 0x100000001b3n) & MASK64;
  }
  return h;
}

function unitVectorFromSeed(seed: bigint, dim: number): Float32Array {
  let state = seed;
  const values = new Float64Array(dim);
  // Box-Muller pairs over splitmix64 uniforms
  for (let i = 0; i < dim; i += 2) {
    let u64: bigint;
    [state, u64] = mix(state);
    const u1 = 1 - Number(u64 >> 11n) * 2 ** -53;
    [state, u64] = mix(state);
    const u2 = Number(u64 >> 11n) * 2 ** -53;
    const radius = Math.sqrt(-2 * Math.log(u1));
    values[i] = radius * Math.cos(2 * Math.PI * u2);
    if (i + 1 < dim) values[i + 1] = radius * Math.sin(2 * Math.PI * u2);
  }
  let norm = 0;
  for (const v of values) norm += v * v;
  norm = Math.sqrt(norm);
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = values[i] / norm;
  return out;
}

export class DeterministicBackend implements EmbeddingBackend {
  constructor(
    readonly textDim: number = 32,
    readonly imageDim: number = 64,
    private readonly seed: bigint = 0n,
  ) {}

  async embedText(prompt: string): Promise<Float32Array> {
    return unitVectorFromSeed(hashString(`text:${prompt}`, this.seed), this.textDim);
  }

  async embedImage(imagePath: string): Promise<Float32Array> {
    return unitVectorFromSeed(hashString(`image:${imagePath}`, this.seed), this.imageDim);
  }
}

/**
 * Placeholder loader for a real checkpoint-backed encoder. Kept separate so
 * environments without model weights fail loudly and early.
 */
export async function loadCheckpointBackend(checkpointDir: string): Promise<EmbeddingBackend> {
  const { existsSync } = await import("node:fs");
  if (!existsSync(checkpointDir)) {
    throw new Error(`checkpoint not found: ${checkpointDir}`);
  }
  throw new Error(
    "no checkpoint adapter is bundled; implement EmbeddingBackend around your encoder",
  );
}
