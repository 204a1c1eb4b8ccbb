/**
 * Exporters producing the scenefuse on-disk formats.
 *
 * The bridge is a format adapter only: it never computes scores, losses, or
 * fusion math. Everything it writes is meant to be read back (and thereby
 * validated) by the scenefuse toolkit.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { EmbeddingBackend } from "./backends.js";
import { stackRows, writeTensor } from "./tensorfile.js";

export const DEFAULT_PROMPT_TEMPLATE = "there is a {category}";

export interface VocabCategory {
  id: number;
  name: string;
  split: "base" | "novel";
  group?: "rare" | "common" | "frequent";
}

export interface ImageEntry {
  imageId: string;
  /** Path or identifier handed to the embedding backend. */
  source: string;
  /** Category names present in the image, when labels are known. */
  labels?: string[];
}

/** One instance from an upstream detector dump: full per-category scores. */
export interface DumpInstance {
  box: [number, number, number, number];
  scores: number[];
}

export interface DetectorDump {
  /** Category names aligned with every instance's score array. */
  categories: string[];
  images: { imageId: string; instances: DumpInstance[] }[];
}

function jsonl(rows: unknown[]): string {
  return rows.map((row) => JSON.stringify(row)).join("\n") + "\n";
}

export function validateVocabulary(categories: VocabCategory[]): Map<string, number> {
  const byName = new Map<string, number>();
  categories.forEach((cat, index) => {
    if (cat.id !== index) throw new Error(`category ids must be contiguous, got ${cat.id} at ${index}`);
    if (!cat.name) throw new Error(`category ${cat.id} has an empty name`);
    if (byName.has(cat.name)) throw new Error(`duplicate category name: ${cat.name}`);
    byName.set(cat.name, cat.id);
  });
  if (!categories.some((cat) => cat.split === "base")) {
    throw new Error("vocabulary needs at least one base category");
  }
  return byName;
}

export function writeVocabulary(outDir: string, categories: VocabCategory[]): void {
  validateVocabulary(categories);
  const payload = {
    categories: categories.map((cat) => {
      const entry: Record<string, unknown> = { id: cat.id, name: cat.name, split: cat.split };
      if (cat.group) entry.group = cat.group;
      return entry;
    }),
  };
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "vocab.json"), JSON.stringify(payload, null, 2) + "\n");
}

/**
 * Embed every category name through the prompt template, in vocabulary
 * order, and write the C x d table. Rows are L2-normalized.
 */
export async function exportTextEmbeddings(
  outDir: string,
  categories: VocabCategory[],
  backend: EmbeddingBackend,
  template: string = DEFAULT_PROMPT_TEMPLATE,
): Promise<void> {
  validateVocabulary(categories);
  const rows: Float32Array[] = [];
  for (const cat of categories) {
    const prompt = template.replace("{category}", cat.name);
    rows.push(normalized(await backend.embedText(prompt)));
  }
  mkdirSync(outDir, { recursive: true });
  writeTensor(join(outDir, "text_embeddings.sict"), stackRows(rows));
}

function normalized(row: Float32Array): Float32Array {
  let norm = 0;
  for (const v of row) norm += v * v;
  norm = Math.sqrt(norm);
  if (norm === 0) throw new Error("embedding backend returned a zero vector");
  const out = new Float32Array(row.length);
  for (let i = 0; i < row.length; i++) out[i] = row[i] / norm;
  return out;
}

/**
 * Embed an image list into teacher embeddings (text-space width) and global
 * features, with an images.jsonl manifest whose row indices are dense.
 */
export async function exportImageFeatures(
  outDir: string,
  images: ImageEntry[],
  categories: VocabCategory[],
  backend: EmbeddingBackend,
): Promise<void> {
  const byName = validateVocabulary(categories);
  const manifest: unknown[] = [];
  const teachers: Float32Array[] = [];
  const globals: Float32Array[] = [];
  const seen = new Set<string>();
  for (const [row, image] of images.entries()) {
    if (seen.has(image.imageId)) throw new Error(`duplicate image id: ${image.imageId}`);
    seen.add(image.imageId);
    const labels = (image.labels ?? []).map((name) => {
      const id = byName.get(name);
      if (id === undefined) throw new Error(`unmapped category name: ${name}`);
      return id;
    });
    teachers.push(normalized(await backend.embedText(`scene:${image.source}`)));
    globals.push(await backend.embedImage(image.source));
    manifest.push({
      image_id: image.imageId,
      labels: [...labels].sort((a, b) => a - b),
      global_row: row,
      teacher_row: row,
    });
  }
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "images.jsonl"), jsonl(manifest));
  writeTensor(join(outDir, "teacher_embeddings.sict"), stackRows(teachers));
  writeTensor(join(outDir, "global_features.sict"), stackRows(globals));
}

/**
 * Convert an upstream detector dump into sparse detections.jsonl, keeping
 * the top-k scores per instance (descending, ties by category id) and
 * remapping category names to vocabulary ids.
 */
export function exportDetections(
  outDir: string,
  dump: DetectorDump,
  categories: VocabCategory[],
  topK: number = 5,
): void {
  const byName = validateVocabulary(categories);
  const idOf = dump.categories.map((name) => {
    const id = byName.get(name);
    if (id === undefined) throw new Error(`unmapped category name: ${name}`);
    return id;
  });
  const rows = dump.images.map((image) => ({
    image_id: image.imageId,
    instances: image.instances.map((inst) => {
      const [x1, y1, x2, y2] = inst.box;
      if (![x1, y1, x2, y2].every(Number.isFinite) || x2 <= x1 || y2 <= y1) {
        throw new Error(`degenerate box in ${image.imageId}: ${JSON.stringify(inst.box)}`);
      }
      if (inst.scores.length !== dump.categories.length) {
        throw new Error(
          `instance in ${image.imageId} has ${inst.scores.length} scores, expected ${dump.categories.length}`,
        );
      }
      inst.scores.forEach((p) => {
        if (!Number.isFinite(p) || p < 0 || p > 1) {
          throw new Error(`score ${p} outside [0, 1] in ${image.imageId}`);
        }
      });
      const ranked = inst.scores
        .map((p, i) => [idOf[i], p] as [number, number])
        .sort((a, b) => b[1] - a[1] || a[0] - b[0])
        .slice(0, topK);
      return { box: inst.box, scores: ranked };
    }),
  }));
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "detections.jsonl"), jsonl(rows));
}

export interface GroundTruthEntry {
  imageId: string;
  objects: { box: [number, number, number, number]; categoryName: string }[];
}

/** Ground truth companion writer so exported datasets are evaluable. */
export function exportGroundTruth(
  outDir: string,
  entries: GroundTruthEntry[],
  categories: VocabCategory[],
): void {
  const byName = validateVocabulary(categories);
  const rows = entries.map((entry) => ({
    image_id: entry.imageId,
    objects: entry.objects.map((obj) => {
      const id = byName.get(obj.categoryName);
      if (id === undefined) throw new Error(`unmapped category name: ${obj.categoryName}`);
      return { box: obj.box, category_id: id };
    }),
  }));
  mkdirSync(outDir, { recursive: true });
  writeFileSync(join(outDir, "groundtruth.jsonl"), jsonl(rows));
}
