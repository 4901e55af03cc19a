"""Command-line entry point: dnn-test, build-model, quantize, metrics, serve."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from . import models, pipeline
from .inference import load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the CLI contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="movidnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    dnn = sub.add_parser("dnn-test", help="run a model over a video and report metrics")
    dnn.add_argument("--model", required=True, type=Path, help=".mvdnn model container")
    dnn.add_argument("--video", required=True, type=Path, help="input (degraded) video")
    dnn.add_argument("--reference", type=Path, help="ground-truth video at output resolution")
    dnn.add_argument("--backend", choices=["single", "parallel"], default="single")
    dnn.add_argument("--limit-seconds", type=float, default=10.0,
                     help="clip limit in seconds (default 10)")
    dnn.add_argument("--warmup", type=int, default=3,
                     help="leading frames excluded from timing statistics")
    dnn.add_argument("--out-dir", required=True, type=Path)
    dnn.add_argument("--dump-frames", action="store_true",
                     help="also write each output frame as a raw YUV file")
    _add_raw_flags(dnn)

    build = sub.add_parser("build-model", help="build a seeded fixture model")
    build.add_argument("--arch", required=True, choices=list(models.ARCHITECTURES))
    build.add_argument("--scale", type=int, help="upscale factor (default 2; dncnn fixes 1)")
    build.add_argument("--blocks", type=int, default=5, help="evsrnet residual blocks")
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--out", required=True, type=Path)

    quant = sub.add_parser("quantize", help="post-training int8 quantization")
    quant.add_argument("--model", required=True, type=Path, help="float .mvdnn container")
    quant.add_argument("--calib", required=True, type=Path, help="calibration video")
    quant.add_argument("--max-frames", type=int, default=16)
    quant.add_argument("--out", required=True, type=Path)
    _add_raw_flags(quant)

    met = sub.add_parser("metrics", help="PSNR/SSIM between two videos, no model")
    met.add_argument("--ref", required=True, type=Path)
    met.add_argument("--test", required=True, type=Path)
    met.add_argument("--out", required=True, type=Path, help="metrics CSV path")
    _add_raw_flags(met)

    serve = sub.add_parser("serve", help="host the subjective MOS test service")
    serve.add_argument("--port", type=int, default=8008)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--originals", required=True, type=Path)
    serve.add_argument("--enhanced", required=True, type=Path)
    serve.add_argument("--results", required=True, type=Path)
    serve.add_argument("--seed", type=int, help="base seed for session playlists")
    serve.add_argument("--ui", type=Path, help="directory of built UI files to serve at /")

    return parser


def dispatch_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"movidnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and friends
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        return _run(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary reports, exits 2
        print(f"movidnn: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _run(args: argparse.Namespace) -> int:
    if args.command == "dnn-test":
        cfg = pipeline.DnnTestConfig(
            model_path=args.model,
            video_path=args.video,
            out_dir=args.out_dir,
            reference_path=args.reference,
            backend=args.backend,
            limit_seconds=args.limit_seconds,
            warmup_frames=args.warmup,
            dump_frames=args.dump_frames,
            raw_width=args.width,
            raw_height=args.height,
            raw_fps=_parse_fps(args.fps),
        )
        result = pipeline.run_dnn_test(cfg)
        report = result.report
        print(f"wrote {result.output_video_path}")
        print(
            f"{report.total_frames} frames, {report.ms_per_frame:.4f} ms/frame "
            f"({report.fps:.2f} fps), psnr_avg="
            + (f"{report.psnr_avg:.4f}" if report.psnr_avg is not None else "identical")
            + f", ssim_all={report.ssim_all:.4f}"
        )
        return EXIT_OK

    if args.command == "build-model":
        scale = args.scale
        if scale is None:
            scale = 1 if args.arch == "dncnn" else 2
        cfg = models.ArchConfig(kind=args.arch, scale=scale, blocks=args.blocks, seed=args.seed)
        graph = models.build_architecture(cfg)
        args.out.write_bytes(save_model(graph))
        print(f"wrote {args.out} ({args.out.stat().st_size} bytes)")
        return EXIT_OK

    if args.command == "quantize":
        graph = load_model(args.model.read_bytes())
        calib = pipeline.load_video(args.calib, args.width, args.height, _parse_fps(args.fps))
        stats = models.calibrate(graph, calib, max_frames=args.max_frames)
        quantized = models.quantize_graph(graph, stats)
        args.out.write_bytes(save_model(quantized))
        print(f"wrote {args.out} ({args.out.stat().st_size} bytes, "
              f"calibrated on {stats.sample_count} frames)")
        return EXIT_OK

    if args.command == "metrics":
        ref = pipeline.load_video(args.ref, args.width, args.height, _parse_fps(args.fps))
        test = pipeline.load_video(args.test, args.width, args.height, _parse_fps(args.fps))
        result = pipeline.compare_videos(ref, test, label=args.test.name)
        pipeline.write_metrics_csv(result, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        app = create_app(
            originals_dir=args.originals,
            enhanced_dir=args.enhanced,
            results_dir=args.results,
            seed=args.seed,
            ui_dir=args.ui,
        )
        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    raise _UsageError(f"unknown command {args.command!r}")


def _add_raw_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--width", type=int, help="raw YUV input width")
    parser.add_argument("--height", type=int, help="raw YUV input height")
    parser.add_argument("--fps", help="raw YUV frame rate, e.g. 30 or 24000:1001")


def _parse_fps(text: str | None) -> Fraction | None:
    if text is None:
        return None
    if ":" in text:
        num, _, den = text.partition(":")
        return Fraction(int(num), int(den))
    return Fraction(text)  # "30" or a decimal like "29.97"


def main() -> None:
    sys.exit(dispatch_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
