"""Command line front end.

    cosketch pipeline sketch.png --out artifacts/   # batch: full transform
    cosketch load --users 8 --workers 4             # latency harness
    cosketch serve --port 8765                      # run the live service

Batch mode runs the whole per-blob transformation on sketch image files
with no server and (with the mock backend) no network: ink is lifted from
the image as horizontal pixel runs, which reproduce the drawing exactly
when re-rasterized and give the hull and describer real geometry.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ServiceConfig
from .errors import CosketchError, UnreadableInput, WriteFailure
from .geometry import Polyline
from .loadgen import LoadScript, run_virtual_load, run_wall_load
from .pipeline import CanvasView, HttpBackend, MockBackend, run_pipeline
from .raster import Raster
from .session import Blob, BlobState, Stroke


def ink_runs_from_image(image: Raster) -> list[Polyline]:
    """Horizontal runs of ink pixels, one short polyline per run."""
    if image.channels == 4:
        lum = image.array[:, :, :3].mean(axis=2)
        ink = (image.array[:, :, 3] > 0) & (lum < 200)
    else:
        ink = image.array < 128
        if not ink.any():
            ink = image.array > 127  # light-on-dark sketches
    if not ink.any():
        raise UnreadableInput("no ink found in image")
    lines: list[Polyline] = []
    cid = 0
    for y in range(ink.shape[0]):
        row = ink[y]
        xs = np.flatnonzero(np.diff(np.concatenate(([0], row.view(np.int8), [0]))))
        for x0, x1 in zip(xs[0::2], xs[1::2]):
            lines.append(Polyline([(float(x0), float(y)), (float(x1 - 1), float(y))],
                                  contact_id=cid))
            cid += 1
    return lines


def _batch_config(args) -> ServiceConfig:
    return ServiceConfig().with_overrides(
        thickness=args.thickness, feather_width=args.feather_width,
        denoise=args.denoise, gen_size=args.gen_size, seed=args.seed,
        canny_sigma=args.canny_sigma, canny_low=args.canny_low,
        canny_high=args.canny_high,
        style_registry=args.style_registry or "",
        backend=args.backend, backend_url=args.backend_url or "")


def run_batch(args) -> int:
    config = _batch_config(args)
    if config.backend == "http":
        backend = HttpBackend(config.backend_url, config.backend_timeout_ms)
    else:
        backend = MockBackend()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    for input_path in args.inputs:
        path = Path(input_path)
        try:
            image = Raster.from_png(str(path)).to_rgba()
        except Exception as e:
            raise UnreadableInput(f"{path}: {e}") from e
        strokes = ink_runs_from_image(image)
        blob = Blob(blob_id=1,
                    strokes=[Stroke(s.contact_id, "batch", s, 0.0, 0.0)
                             for s in strokes],
                    state=BlobState.GENERATING)
        view = CanvasView(region=(0, 0, image.width, image.height),
                          background=image)
        output = run_pipeline(blob, view, backend, config, keep_artifacts=True)

        stem = path.stem
        try:
            for name in ("mask", "feather", "edges", "coarse", "refined"):
                output.artifacts[name].save_png(str(out_dir / f"{stem}.{name}.png"))
            output.artifacts["composite"].save_png(
                str(out_dir / f"{stem}.composite.png"))
            meta = {
                "input": str(path),
                "seed": config.seed,
                "denoise": config.denoise,
                "thickness": config.thickness,
                "feather_width": config.feather_width,
                "style": output.style.style_id,
                "prompt": output.prompt,
                "keywords": list(output.descriptor.keywords),
                "tone": output.descriptor.tone,
                "stage_latency_ms": output.stage_latency_ms,
            }
            (out_dir / f"{stem}.latency.json").write_text(
                json.dumps(meta, indent=2, sort_keys=True))
        except OSError as e:
            raise WriteFailure(f"cannot write artifacts to {out_dir}: {e}") from e
        print(f"{path} -> {out_dir}/{stem}.*  style={output.style.style_id} "
              f"prompt={output.prompt!r}")
    return 0


def run_load(args) -> int:
    script = LoadScript(users=args.users, strokes_per_user=args.strokes_per_user,
                        seed=args.seed)
    if args.mode == "virtual":
        config = ServiceConfig().with_overrides(
            workers=args.workers, gen_size=args.gen_size, seed=args.seed,
            idle_ms=args.idle_ms,
            canvas_w=args.canvas_w, canvas_h=args.canvas_h)
        report = run_virtual_load(config, script,
                                  backend_stage_ms=args.backend_stage_ms)
    else:
        if not args.url:
            raise CosketchError("--mode wall needs --url ws://host:port/ws")
        report = run_wall_load(args.url, script)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def run_serve(args) -> int:
    import asyncio

    from .server import DrawingServer

    config = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    config = config.with_overrides(
        port=args.port, host=args.host, canvas_w=args.canvas_w,
        canvas_h=args.canvas_h, tile_size=args.tile_size, workers=args.workers,
        backend=args.backend, backend_url=args.backend_url, seed=args.seed,
        record=args.record, replay=args.replay, static_dir=args.static_dir,
        idle_ms=args.idle_ms, denoise=args.denoise)

    server = DrawingServer(config)

    async def main():
        task = asyncio.create_task(server.run())
        await server._started.wait()
        print(f"listening on ws://{config.host}:{server.bound_port}/ws "
              f"(canvas {config.canvas_w}x{config.canvas_h}, "
              f"{config.workers} workers, backend {config.backend})")
        await task

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cosketch",
                                description="collaborative sketch stylization service")
    sub = p.add_subparsers(dest="command", required=True)

    d = ServiceConfig()

    bp = sub.add_parser("pipeline", help="run the transform on sketch PNGs")
    bp.add_argument("inputs", nargs="+", help="sketch PNG file(s)")
    bp.add_argument("--out", default="artifacts", help="output directory")
    bp.add_argument("--seed", type=int, default=d.seed)
    bp.add_argument("--thickness", type=int, default=d.thickness)
    bp.add_argument("--feather-width", type=int, default=d.feather_width)
    bp.add_argument("--denoise", type=float, default=d.denoise)
    bp.add_argument("--gen-size", type=int, default=d.gen_size)
    bp.add_argument("--canny-sigma", type=float, default=d.canny_sigma)
    bp.add_argument("--canny-low", type=int, default=d.canny_low)
    bp.add_argument("--canny-high", type=int, default=d.canny_high)
    bp.add_argument("--style-registry", default=None)
    bp.add_argument("--backend", choices=("mock", "http"), default="mock")
    bp.add_argument("--backend-url", default=None)
    bp.set_defaults(func=run_batch)

    lp = sub.add_parser("load", help="latency load harness")
    lp.add_argument("--mode", choices=("virtual", "wall"), default="virtual")
    lp.add_argument("--users", type=int, default=8)
    lp.add_argument("--strokes-per-user", type=int, default=1)
    lp.add_argument("--workers", type=int, default=d.workers)
    lp.add_argument("--backend-stage-ms", type=float, default=400.0)
    lp.add_argument("--gen-size", type=int, default=64)
    lp.add_argument("--idle-ms", type=int, default=d.idle_ms)
    lp.add_argument("--canvas-w", type=int, default=d.canvas_w)
    lp.add_argument("--canvas-h", type=int, default=d.canvas_h)
    lp.add_argument("--seed", type=int, default=0)
    lp.add_argument("--url", default=None, help="ws://host:port/ws for wall mode")
    lp.add_argument("--out", default=None, help="write the JSON report here too")
    lp.set_defaults(func=run_load)

    sp = sub.add_parser("serve", help="run the WebSocket drawing service")
    sp.add_argument("--config", default=None, help="JSON config file")
    sp.add_argument("--port", type=int, default=None)
    sp.add_argument("--host", default=None)
    sp.add_argument("--canvas-w", type=int, default=None)
    sp.add_argument("--canvas-h", type=int, default=None)
    sp.add_argument("--tile-size", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--backend", choices=("mock", "http"), default=None)
    sp.add_argument("--backend-url", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--idle-ms", type=int, default=None)
    sp.add_argument("--denoise", type=float, default=None)
    sp.add_argument("--record", default=None, help="append stroke events to this log")
    sp.add_argument("--replay", default=None, help="replay stroke events at startup")
    sp.add_argument("--static-dir", default=None, help="webclient assets for /")
    sp.set_defaults(func=run_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CosketchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
