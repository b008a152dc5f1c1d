/**
 * Load and save TensorFlow.js layers-model checkpoints (model.json plus
 * weights.bin) from plain directories, without tfjs-node.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

function toArrayBuffer(weightData: ArrayBuffer | ArrayBuffer[]): ArrayBuffer {
  if (Array.isArray(weightData)) {
    return tf.io.concatenateArrayBuffers(weightData);
  }
  return weightData;
}

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(tf.io.withSaveHandler(async (artifacts) => {
    const modelJson = {
      modelTopology: artifacts.modelTopology,
      format: 'layers-model',
      generatedBy: artifacts.generatedBy,
      convertedBy: null,
      weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
    };
    fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(modelJson));
    const weightData = toArrayBuffer(artifacts.weightData as ArrayBuffer | ArrayBuffer[]);
    fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData));
    return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } };
  }));
}

export async function loadModelFromDir(dir: string): Promise<tf.LayersModel> {
  const modelJsonPath = path.join(dir, 'model.json');
  if (!fs.existsSync(modelJsonPath)) {
    throw new Error(`checkpoint not found: ${modelJsonPath}`);
  }
  const modelJson = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'));
  const specs: tf.io.WeightsManifestEntry[] = [];
  const buffers: ArrayBuffer[] = [];
  for (const group of modelJson.weightsManifest ?? []) {
    for (const p of group.paths) {
      const buf = fs.readFileSync(path.join(dir, p));
      buffers.push(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
    }
    specs.push(...group.weights);
  }
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: modelJson.modelTopology,
      weightSpecs: specs,
      weightData: tf.io.concatenateArrayBuffers(buffers),
    }),
  });
}
