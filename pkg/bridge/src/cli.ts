/**
 * Export CLI.
 *
 *   node dist/cli.js export-text --vocab vocab.json --out DIR [--dim D]
 *   node dist/cli.js export-images --vocab vocab.json --images list.json --out DIR
 *   node dist/cli.js export-detections --vocab vocab.json --dump dump.json --out DIR [--k K]
 *
 * The deterministic hash backend is used unless --checkpoint points at a
 * real encoder adapter.
 */

import { readFileSync } from "node:fs";
import process from "node:process";

import { DeterministicBackend, EmbeddingBackend, loadCheckpointBackend } from "./backends.js";
import {
  DetectorDump,
  ImageEntry,
  VocabCategory,
  exportDetections,
  exportImageFeatures,
  exportTextEmbeddings,
  writeVocabulary,
} from "./exporters.js";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new UsageError(`unexpected argument: ${key}`);
    }
    flags[key.slice(2)] = argv[i + 1];
  }
  return flags;
}

class UsageError extends Error {}

function requireFlag(flags: Flags, name: string): string {
  const value = flags[name];
  if (value === undefined) throw new UsageError(`missing required flag --${name}`);
  return value;
}

function loadVocab(path: string): VocabCategory[] {
  const payload = JSON.parse(readFileSync(path, "utf8"));
  return payload.categories as VocabCategory[];
}

async function backendFrom(flags: Flags): Promise<EmbeddingBackend> {
  if (flags.checkpoint) return loadCheckpointBackend(flags.checkpoint);
  return new DeterministicBackend(
    flags.dim ? Number(flags.dim) : 32,
    flags["global-dim"] ? Number(flags["global-dim"]) : 64,
  );
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    switch (command) {
      case "export-text": {
        const vocab = loadVocab(requireFlag(flags, "vocab"));
        const out = requireFlag(flags, "out");
        await exportTextEmbeddings(out, vocab, await backendFrom(flags), flags.template);
        writeVocabulary(out, vocab);
        return 0;
      }
      case "export-images": {
        const vocab = loadVocab(requireFlag(flags, "vocab"));
        const images = JSON.parse(
          readFileSync(requireFlag(flags, "images"), "utf8"),
        ) as ImageEntry[];
        await exportImageFeatures(requireFlag(flags, "out"), images, vocab, await backendFrom(flags));
        return 0;
      }
      case "export-detections": {
        const vocab = loadVocab(requireFlag(flags, "vocab"));
        const dump = JSON.parse(readFileSync(requireFlag(flags, "dump"), "utf8")) as DetectorDump;
        exportDetections(requireFlag(flags, "out"), dump, vocab, flags.k ? Number(flags.k) : 5);
        return 0;
      }
      default:
        throw new UsageError(`unknown command: ${command ?? "(none)"}`);
    }
  } catch (error) {
    if (error instanceof UsageError) {
      console.error(`usage error: ${error.message}`);
      return 1;
    }
    console.error(`error: ${(error as Error).message}`);
    return 2;
  }
}

const isDirectRun = process.argv[1]?.endsWith("cli.js");
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
