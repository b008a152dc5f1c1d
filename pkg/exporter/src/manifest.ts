/**
 * Export manifest: which checkpoint layers map to which container names, plus
 * the normalization means the checkpoint was trained with.
 */

import * as fs from 'node:fs';

export interface ExportManifest {
  /** Base name for the emitted .vrelw / .json pair. */
  name: string;
  /** Checkpoint layer name -> container parameter base name. */
  mapping: Record<string, string>;
  /** Per-channel normalization means used in training, if any. */
  means?: number[];
}

export function parseManifest(raw: unknown): ExportManifest {
  if (typeof raw !== 'object' || raw === null) {
    throw new Error('manifest must be a JSON object');
  }
  const obj = raw as Record<string, unknown>;
  const mapping = obj.mapping;
  if (typeof mapping !== 'object' || mapping === null || Array.isArray(mapping)) {
    throw new Error('manifest.mapping must be an object of layer name -> container name');
  }
  const targets = new Set<string>();
  for (const [source, target] of Object.entries(mapping)) {
    if (typeof target !== 'string' || target.length === 0) {
      throw new Error(`manifest.mapping[${source}] must be a non-empty string`);
    }
    if (targets.has(target)) {
      throw new Error(`duplicate mapping target ${target}`);
    }
    targets.add(target);
  }
  let means: number[] | undefined;
  if (obj.means !== undefined) {
    if (!Array.isArray(obj.means) || obj.means.some((v) => typeof v !== 'number')) {
      throw new Error('manifest.means must be an array of numbers');
    }
    means = obj.means as number[];
  }
  const name = obj.name === undefined ? 'model' : String(obj.name);
  return { name, mapping: mapping as Record<string, string>, means };
}

export function loadManifest(filePath: string): ExportManifest {
  if (!fs.existsSync(filePath)) {
    throw new Error(`manifest not found: ${filePath}`);
  }
  return parseManifest(JSON.parse(fs.readFileSync(filePath, 'utf-8')));
}
