/**
 * Checkpoint exporter CLI.
 *
 * Usage:
 *   vrel-export --checkpoint <dir> --manifest <manifest.json> --out <dir>
 *
 * Reads a tfjs layers-model checkpoint (model.json + weights.bin), converts
 * it per the manifest, and writes <name>.vrelw plus <name>.json into the
 * output directory. Prints a JSON summary to stdout.
 */

import { loadModelFromDir } from './checkpoint.js';
import { exportModel, writeExport } from './convert.js';
import { loadManifest } from './manifest.js';

interface Args {
  checkpoint?: string;
  manifest?: string;
  out?: string;
  help?: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {};
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--checkpoint':
      case '-c':
        args.checkpoint = argv[++i];
        break;
      case '--manifest':
      case '-m':
        args.manifest = argv[++i];
        break;
      case '--out':
      case '-o':
        args.out = argv[++i];
        break;
      case '--help':
      case '-h':
        args.help = true;
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  return args;
}

const USAGE = 'usage: vrel-export --checkpoint <dir> --manifest <manifest.json> --out <dir>';

export async function main(argv: string[]): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (args.help) {
    console.log(USAGE);
    return 0;
  }
  if (!args.checkpoint || !args.manifest || !args.out) {
    console.error(`error: --checkpoint, --manifest and --out are required\n${USAGE}`);
    return 2;
  }
  try {
    const manifest = loadManifest(args.manifest);
    const model = await loadModelFromDir(args.checkpoint);
    const result = exportModel(model, manifest);
    const paths = writeExport(result, args.out, manifest.name);
    console.log(JSON.stringify({
      weights: paths.weights,
      config: paths.config,
      tensors: result.entries.size,
      layers: result.config.layers.length,
      num_classes: result.config.num_classes,
    }));
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] !== undefined
  && import.meta.url.endsWith(process.argv[1].split('/').pop() as string);
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => (process.exitCode = code));
}
