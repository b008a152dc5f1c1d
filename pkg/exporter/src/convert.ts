/**
 * Convert a TensorFlow.js C3D-style checkpoint into the engine's formats.
 *
 * The engine is channels-first (C, T, H, W) while tfjs layers are channels
 * last, so three things need rearranging:
 *   - conv3d kernels [kt, kh, kw, in, out] -> (out, in, kt, kh, kw),
 *   - dense kernels [in, out] -> (out, in),
 *   - the first dense layer after a flatten additionally gets its input
 *     dimension permuted from (t, h, w, c) flattening order to (c, t, h, w).
 *
 * Batch norm parameters are exported raw (gamma/beta/mean/var); the engine
 * folds them into the preceding convolution at bind time.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { TensorEntry, writeWeightContainer } from './container.js';
import { ExportManifest } from './manifest.js';

export interface EngineLayer {
  kind: string;
  name?: string;
  in_channels?: number;
  out_channels?: number;
  in_features?: number;
  out_features?: number;
  kernel?: number[];
  stride?: number[];
  padding?: number[];
  channels?: number;
  eps?: number;
}

export interface EngineConfig {
  name: string;
  input_shape: number[];
  num_classes: number;
  normalization_mean?: number[];
  layers: EngineLayer[];
}

export interface ExportResult {
  entries: Map<string, TensorEntry>;
  config: EngineConfig;
}

const WEIGHTED = new Set(['Conv3D', 'Dense', 'BatchNormalization']);

function variableByName(layer: tf.layers.Layer, needle: string): tf.Tensor | null {
  for (const v of layer.weights) {
    if (v.name.includes(needle)) {
      return v.read();
    }
  }
  return null;
}

function toEntry(t: tf.Tensor): TensorEntry {
  return { shape: t.shape.slice(), data: t.dataSync() as Float32Array };
}

function samePadding(layerName: string, kernel: number[], strides: number[]): number[] {
  if (strides.some((s) => s !== 1) || kernel.some((k) => k % 2 === 0)) {
    throw new Error(`layer ${layerName}: 'same' padding is only exportable for stride-1 ` +
      'odd kernels (it is asymmetric otherwise)');
  }
  return kernel.map((k) => (k - 1) / 2);
}

/** Column permutation mapping engine flatten order (c,t,h,w) to tfjs (t,h,w,c). */
function flattenPermutation(preFlatten: number[]): Int32Array {
  const [t, h, w, c] = preFlatten;
  const perm = new Int32Array(t * h * w * c);
  let f = 0;
  for (let ci = 0; ci < c; ci++) {
    for (let ti = 0; ti < t; ti++) {
      for (let hi = 0; hi < h; hi++) {
        for (let wi = 0; wi < w; wi++) {
          perm[f++] = ((ti * h + hi) * w + wi) * c + ci;
        }
      }
    }
  }
  return perm;
}

function checkMapping(model: tf.LayersModel, manifest: ExportManifest): void {
  const weighted = model.layers.filter((l) => WEIGHTED.has(l.getClassName()));
  for (const layer of weighted) {
    if (!(layer.name in manifest.mapping)) {
      throw new Error(`unmapped parameter layer ${layer.name} (${layer.getClassName()})`);
    }
  }
  const known = new Set(model.layers.map((l) => l.name));
  for (const source of Object.keys(manifest.mapping)) {
    if (!known.has(source)) {
      throw new Error(`manifest maps unknown layer ${source}`);
    }
  }
}

export function exportModel(model: tf.LayersModel, manifest: ExportManifest): ExportResult {
  checkMapping(model, manifest);
  const entries = new Map<string, TensorEntry>();
  const layers: EngineLayer[] = [];
  const inputShape = model.inputs[0].shape;  // [null, T, H, W, C]
  if (inputShape.length !== 5) {
    throw new Error(`expected a 5D (batch, T, H, W, C) model input, got ${inputShape}`);
  }

  let prevShape: (number | null)[] = inputShape;
  let pendingFlattenShape: number[] | null = null;
  const last = model.layers[model.layers.length - 1];

  for (const layer of model.layers) {
    const cls = layer.getClassName();
    const cfg = layer.getConfig() as Record<string, any>;
    const outShape = layer.outputShape as (number | null)[];

    if (cls === 'InputLayer' || cls === 'Dropout') {
      prevShape = outShape;
      continue;
    }
    if (cls === 'Conv3D') {
      if (cfg.dataFormat === 'channelsFirst') {
        throw new Error(`layer ${layer.name}: channelsFirst checkpoints are not supported`);
      }
      const name = manifest.mapping[layer.name];
      const kernel = cfg.kernelSize as number[];
      const strides = cfg.strides as number[];
      const padding = cfg.padding === 'same'
        ? samePadding(layer.name, kernel, strides) : [0, 0, 0];
      const kernelVar = variableByName(layer, 'kernel');
      if (kernelVar === null) {
        throw new Error(`layer ${layer.name} has no kernel variable`);
      }
      const [, , , inC, outC] = kernelVar.shape;
      entries.set(`${name}.weight`, toEntry(tf.tidy(() => tf.transpose(kernelVar, [4, 3, 0, 1, 2]))));
      const bias = variableByName(layer, 'bias');
      entries.set(`${name}.bias`,
        bias ? toEntry(bias) : { shape: [outC], data: new Float32Array(outC) });
      layers.push({ kind: 'conv3d', name, in_channels: inC, out_channels: outC,
                    kernel, stride: strides, padding });
      if (cfg.activation === 'relu') {
        layers.push({ kind: 'relu' });
      } else if (cfg.activation !== 'linear') {
        throw new Error(`layer ${layer.name}: unsupported activation ${cfg.activation}`);
      }
    } else if (cls === 'MaxPooling3D' || cls === 'AveragePooling3D') {
      if (cfg.padding !== 'valid') {
        throw new Error(`layer ${layer.name}: only 'valid' pooling is exportable`);
      }
      layers.push({
        kind: cls === 'MaxPooling3D' ? 'maxpool3d' : 'avgpool3d',
        kernel: cfg.poolSize as number[],
        stride: (cfg.strides ?? cfg.poolSize) as number[],
        padding: [0, 0, 0],
      });
    } else if (cls === 'Flatten') {
      const dims = prevShape.slice(1);
      if (dims.some((d) => d === null)) {
        throw new Error(`layer ${layer.name}: cannot flatten a partially unknown shape`);
      }
      pendingFlattenShape = dims as number[];
      layers.push({ kind: 'flatten' });
    } else if (cls === 'Dense') {
      const name = manifest.mapping[layer.name];
      const kernelVar = variableByName(layer, 'kernel');
      if (kernelVar === null) {
        throw new Error(`layer ${layer.name} has no kernel variable`);
      }
      const [inF, outF] = kernelVar.shape;
      let weight = toEntry(tf.tidy(() => tf.transpose(kernelVar, [1, 0])));
      if (pendingFlattenShape !== null) {
        if (pendingFlattenShape.length === 4) {
          const perm = flattenPermutation(pendingFlattenShape);
          const permuted = new Float32Array(weight.data.length);
          for (let j = 0; j < outF; j++) {
            const row = j * inF;
            for (let f = 0; f < inF; f++) {
              permuted[row + f] = weight.data[row + perm[f]];
            }
          }
          weight = { shape: weight.shape, data: permuted };
        }
        pendingFlattenShape = null;
      }
      entries.set(`${name}.weight`, weight);
      const bias = variableByName(layer, 'bias');
      entries.set(`${name}.bias`,
        bias ? toEntry(bias) : { shape: [outF], data: new Float32Array(outF) });
      layers.push({ kind: 'linear', name, in_features: inF, out_features: outF });
      if (cfg.activation === 'relu') {
        layers.push({ kind: 'relu' });
      } else if (cfg.activation === 'softmax' && layer === last) {
        console.warn(`layer ${layer.name}: dropping final softmax; the engine explains logits`);
      } else if (cfg.activation !== 'linear') {
        throw new Error(`layer ${layer.name}: unsupported activation ${cfg.activation}`);
      }
    } else if (cls === 'BatchNormalization') {
      const name = manifest.mapping[layer.name];
      const parts: Record<string, string> = {
        gamma: 'gamma', beta: 'beta', moving_mean: 'mean', moving_variance: 'var',
      };
      let channels = 0;
      for (const [needle, suffix] of Object.entries(parts)) {
        const v = variableByName(layer, needle);
        if (v === null) {
          throw new Error(`layer ${layer.name} is missing ${needle}; export requires ` +
            'center and scale parameters');
        }
        channels = v.shape[0];
        entries.set(`${name}.${suffix}`, toEntry(v));
      }
      layers.push({ kind: 'batchnorm', name, channels, eps: cfg.epsilon as number });
    } else if (cls === 'Activation') {
      if (cfg.activation === 'relu') {
        layers.push({ kind: 'relu' });
      } else if (cfg.activation === 'softmax' && layer === last) {
        console.warn(`layer ${layer.name}: dropping final softmax; the engine explains logits`);
      } else {
        throw new Error(`layer ${layer.name}: unsupported activation ${cfg.activation}`);
      }
    } else {
      throw new Error(`layer ${layer.name}: no conversion for ${cls}`);
    }
    prevShape = outShape;
  }

  const lastLinear = [...layers].reverse().find((l) => l.kind === 'linear');
  if (!lastLinear) {
    throw new Error('checkpoint has no dense layer; cannot determine the class count');
  }
  const [, t, h, w, c] = inputShape as number[];
  const config: EngineConfig = {
    name: manifest.name,
    input_shape: [c, t, h, w],
    num_classes: lastLinear.out_features!,
    layers,
  };
  if (manifest.means !== undefined) {
    config.normalization_mean = manifest.means;
  }
  return { entries, config };
}

export function writeExport(result: ExportResult, outDir: string,
                            name: string): { weights: string; config: string } {
  fs.mkdirSync(outDir, { recursive: true });
  const weightsPath = path.join(outDir, `${name}.vrelw`);
  const configPath = path.join(outDir, `${name}.json`);
  writeWeightContainer(result.entries, weightsPath);
  fs.writeFileSync(configPath, JSON.stringify(result.config, null, 2) + '\n');
  return { weights: weightsPath, config: configPath };
}
