"""Command-line front door.

Machine-readable results go to standard output as JSON lines; progress and
human-readable summaries go to standard error. Every subcommand can either
run in-process (default) or act as a thin client against a running service
via --server. VREL_THREADS caps per-frame parallelism during decomposition.

    vrel predict   --arch c3d.json --weights c3d.vrelw --input clip/
    vrel explain   --arch ... --weights ... --input ... --out out/
    vrel decompose --arch ... --weights ... --input ... --out out/ --emit heatmaps,raw,predictions
    vrel serve     --host 127.0.0.1 --port 8000
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import VrelError

log = logging.getLogger("vrel")


def _parse_mean(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--mean expects comma-separated floats, got {text!r}")


def _parse_target(text: str):
    if text == "argmax":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--target expects 'argmax' or an int, got {text!r}")


def _parse_emit(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser, with_rule_flags: bool) -> None:
    p.add_argument("--arch", required=True, help="JSON architecture config")
    p.add_argument("--weights", required=True, help="VRELW001 weight container")
    p.add_argument("--input", required=True, help="clip: PNG frame directory or VRELV001 file")
    p.add_argument("--mean", type=_parse_mean, default=[0.0],
                   help="per-channel normalization mean, comma separated (default 0)")
    p.add_argument("--server", default=None,
                   help="base URL of a running vrel service; run remotely instead of in-process")
    p.add_argument("--model-id", default=None,
                   help="reuse a model already loaded on the server (with --server)")
    if with_rule_flags:
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--beta", type=float, default=0.0)
        p.add_argument("--eps", type=float, default=1e-9)
        p.add_argument("--target", type=_parse_target, default="argmax",
                       help="class index to explain, or 'argmax' (default)")
        p.add_argument("--emit", type=_parse_emit, default=None,
                       help="comma-separated subset of heatmaps,raw,predictions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vrel", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="top classes and logits for a clip")
    _add_common(p, with_rule_flags=False)
    p.add_argument("--top", type=int, default=5, help="number of classes to print (default 5)")

    p = sub.add_parser("explain", help="relevance map for a clip")
    _add_common(p, with_rule_flags=True)

    p = sub.add_parser("decompose", help="original / spatial / temporal decomposition")
    _add_common(p, with_rule_flags=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _emit_result(result: dict, summary: str) -> None:
    print(json.dumps(result), flush=True)
    print(summary, file=sys.stderr)


def _run_local(args) -> int:
    from . import pipeline

    net = pipeline.load_network(args.arch, args.weights)
    if args.command == "predict":
        result = pipeline.run_predict(net, args.input, mean=args.mean, top=args.top)
        for entry in result["predictions"]:
            print(json.dumps(entry), flush=True)
        print(f"top prediction: class {result['predictions'][0]['class']}", file=sys.stderr)
        return 0
    if args.command == "explain":
        result = pipeline.run_explain(net, args.input, out_dir=args.out, alpha=args.alpha,
                                      beta=args.beta, eps=args.eps, target=args.target,
                                      mean=args.mean, emit=args.emit)
        _emit_result(result, f"explained class {result['target_class']} "
                             f"(logit {result['target_logit']:.6g}), "
                             f"relevance sum {result['relevance_sum']:.6g}")
        return 0
    result = pipeline.run_decompose(net, args.input, out_dir=args.out, alpha=args.alpha,
                                    beta=args.beta, eps=args.eps, target=args.target,
                                    mean=args.mean, emit=args.emit)
    sums = result["abs_sums"]
    _emit_result(result, f"decomposed class {result['target_class']} in "
                         f"{result['explanation_passes']} passes; "
                         f"sum|original| {sums['original']:.6g}, "
                         f"sum|spatial| {sums['spatial']:.6g}, "
                         f"sum|temporal| {sums['temporal']:.6g}")
    return 0


def _run_remote(args) -> int:
    import httpx

    base = args.server.rstrip("/")
    with httpx.Client(base_url=base, timeout=600.0) as client:
        model_id = args.model_id
        if model_id is None:
            resp = client.post("/models", json={"arch_path": args.arch,
                                                "weights_path": args.weights,
                                                "mean": args.mean})
            if resp.status_code != 200:
                print(f"error: model load failed: {resp.text}", file=sys.stderr)
                return 1
            model_id = resp.json()["model_id"]
        if args.command == "predict":
            body = {"clip_path": args.input, "top": args.top}
        else:
            body = {"clip_path": args.input, "alpha": args.alpha, "beta": args.beta,
                    "eps": args.eps, "target": args.target, "out_dir": args.out,
                    "emit": args.emit}
        resp = client.post(f"/models/{model_id}/{args.command}", json=body)
        if resp.status_code != 200:
            print(f"error: {resp.text}", file=sys.stderr)
            return 1
        result = resp.json()
        if args.command == "predict":
            for entry in result["predictions"]:
                print(json.dumps(entry), flush=True)
        else:
            print(json.dumps(result), flush=True)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(name)s: %(message)s",
                        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING)
    if args.command == "serve":
        import uvicorn

        from .service import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0
    try:
        if args.server:
            return _run_remote(args)
        return _run_local(args)
    except (VrelError, FileNotFoundError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
