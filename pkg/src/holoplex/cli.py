"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
divergence, 1 anything else. Failures print one JSON object
``{"error": <category>, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, cards, core
from . import io as hio
from .color import replica_depth, replica_sweep, simulate
from .config import ConfigError, RunConfig, bundled_config_path
from .core import NumericalError, WaveSpec
from .metrics import evaluate_video, lsq_scaled
from .optimize import gd_solve, gs_solve, video_solve
from .propagate import make_transfer, reconstruct_amplitude
from .scan import LinearSSM, flatten_hwt, scan_order, ssm_scan_backward, ssm_scan_forward

log = logging.getLogger("holoplex")

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class _Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t = time.perf_counter()
        yield
        self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t


def _manifest(args, cfg: RunConfig, timer: _Timer, **extra) -> dict:
    return {
        "software": "holoplex",
        "version": __version__,
        "command": args.command,
        "argv": getattr(args, "replay_argv", []),
        "config": cfg.echo(),
        "seed": cfg["seed"],
        **extra,
        "timing": timer.stages,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _gray(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=0) if img.ndim == 3 else img


def _default_card(cfg: RunConfig) -> np.ndarray:
    g = cfg.grid()
    if g.height != g.width:
        raise ConfigError("the built-in test card needs a square grid; pass --target")
    return cards.test_card(g.height)


def _outdir(args) -> Path:
    p = Path(args.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_propagate(args, cfg: RunConfig) -> int:
    grid = cfg.grid()
    phi = hio.read_phase(args.phase)
    grid.check(phi, "phase file")
    z = cfg["plane.mono"] if args.z is None else args.z
    wl = cfg["wave.mono"] if args.wavelength is None else args.wavelength
    H = make_transfer(grid, WaveSpec(wl), z, cfg["propagate.pad"])
    inten = reconstruct_amplitude(phi, H) ** 2
    peak = inten.max()
    hio.write_image(args.output, inten / peak if (peak > 0 and not args.no_normalize) else inten)
    if args.raw:
        hio.write_raw(args.raw, inten)
    print(f"wrote {args.output} (z={z:g} m, lambda={wl:g} m, peak intensity {peak:.6g})")
    return 0


def _target(args, cfg: RunConfig) -> np.ndarray:
    if args.target:
        img = _gray(hio.read_image(args.target, cfg["io.srgb"]))
        cfg.grid().check(img, "target image")
        return img
    return _default_card(cfg)


def cmd_solve(args, cfg: RunConfig) -> int:
    timer = _Timer()
    grid = cfg.grid()
    with timer("load"):
        img = _target(args, cfg)
    H = make_transfer(grid, WaveSpec(cfg["wave.mono"]), cfg["plane.mono"], cfg["propagate.pad"])
    opt = cfg.optimizer()
    method = args.method or opt.method
    with timer("optimize"):
        if method == "gs":
            inten = img if cfg["loss.target_is_intensity"] else img**2
            sol = gs_solve(inten, H, iterations=opt.iterations)
        else:
            sol = gd_solve(img[None, None], [(H, None)], opt)
    out = _outdir(args)
    with timer("write"):
        amp_target = np.sqrt(img) if cfg["loss.target_is_intensity"] else img
        rec = lsq_scaled(amp_target, reconstruct_amplitude(sol.phases[0], H))
        hio.write_phase_png(out / "phase.png", sol.phases[0])
        hio.write_raw(out / "phase.raw", sol.phases[0])
        hio.write_image(out / "recon.png", rec)
        _write_loss_csv(out / "loss.csv", sol.loss_trace, sol.components)
    man = _manifest(args, cfg, timer, method=method, final_loss=sol.final_loss,
                    metrics={"psnr": sol.psnr[:, 0], "ssim": sol.ssim[:, 0]})
    _write_json(out / "manifest.json", man)
    print(f"{method}: final loss {sol.final_loss:.6g}, PSNR {sol.psnr[0, 0]:.3f} dB -> {out}")
    return 0


def _write_loss_csv(path: Path, trace: np.ndarray, comps: np.ndarray) -> None:
    rows = ["iteration,mse,ffl,total"]
    for i, (tot, (m, f)) in enumerate(zip(trace, comps)):
        rows.append(f"{i},{m:.12g},{f:.12g},{tot:.12g}")
    path.write_text("\n".join(rows) + "\n")


def cmd_solve_video(args, cfg: RunConfig) -> int:
    timer = _Timer()
    grid = cfg.grid()
    with timer("load"):
        if args.frames:
            vid = hio.read_sequence(args.frames, cfg["io.srgb"])
            vid = vid.mean(axis=1) if vid.ndim == 4 else vid
        else:
            if grid.height != grid.width:
                raise ConfigError("the built-in video needs a square grid; pass --frames")
            vid = cards.translating_video(grid.height, args.num_frames)
        grid.check(vid, "video frames")
    H = make_transfer(grid, WaveSpec(cfg["wave.mono"]), cfg["plane.mono"], cfg["propagate.pad"])
    warm = cfg["optimizer.warm_start"] if args.warm_start is None else args.warm_start
    with timer("optimize"):
        sol = video_solve(vid[:, None], [(H, None)], cfg.optimizer(), warm_start=warm)
    out = _outdir(args)
    with timer("metrics"):
        recs = np.stack([lsq_scaled(vid[t], reconstruct_amplitude(sol.phases[t], H)) for t in range(len(vid))])
        rep = evaluate_video(vid, recs)
    with timer("write"):
        for t in range(len(vid)):
            hio.write_phase_png(hio.sequence_path(out, "phase", t), sol.phases[t])
            hio.write_image(hio.sequence_path(out, "recon", t), recs[t])
        hio.write_raw(out / "phases.raw", sol.phases)
        (out / "metrics.csv").write_text(rep.to_csv())
    man = _manifest(args, cfg, timer, warm_start=warm, frame_final_losses=sol.frame_final_losses,
                    metrics={"psnr": rep.psnr, "ssim": rep.ssim, "warp": rep.warp})
    _write_json(out / "manifest.json", man)
    print(rep.summary())
    return 0


def cmd_color_sim(args, cfg: RunConfig) -> int:
    timer = _Timer()
    grid = cfg.grid()
    scheme = args.scheme or cfg["scheme"]
    supports = None
    with timer("load"):
        if args.target:
            y = hio.read_image(args.target, cfg["io.srgb"])
            if y.ndim != 3:
                raise ConfigError("color-sim needs an RGB target image")
        else:
            if grid.height != grid.width:
                raise ConfigError("the built-in desk card needs a square grid; pass --target")
            y = cards.rgb_desk_card(grid.height)
            supports = cards.rgb_supports(grid.height)
        grid.check(y, "target image")
    color = cfg.color(scheme)
    opt = cfg.optimizer()
    if scheme != "SGDDM" and opt.mask_learning:
        from dataclasses import replace

        opt = replace(opt, mask_learning=False)
    with timer("optimize"):
        res = simulate(y[None], color, grid, opt, supports=supports)
    out = _outdir(args)
    with timer("write"):
        for c in range(3):
            hio.write_image(out / f"recon_{'RGB'[c]}.png", lsq_scaled(y[c], res.reconstructions[0, c]))
        hio.write_raw(out / "phase.raw", res.phases.reshape((-1,) + grid.shape))
        (out / "crosstalk.csv").write_text(res.report.to_csv())
    masks = None if res.masks is None else [{"cx": m.cx, "cy": m.cy, "r": m.r} for m in res.masks]
    sep = None if res.separation is None else {f"{'RGB'[i]}{'RGB'[j]}": v for (i, j), v in res.separation.items()}
    man = _manifest(args, cfg, timer, scheme=scheme, planes=color.planes_z, masks=masks,
                    separation=sep, frame_rate_factor=res.report.frame_rate_factor,
                    crosstalk={"energy": res.report.energy, "psnr": res.report.psnr,
                               "off_diagonal": res.report.off_diagonal,
                               "diagonal_psnr": res.report.diagonal_psnr})
    _write_json(out / "manifest.json", man)
    print(f"{scheme}: off-diagonal crosstalk {res.report.off_diagonal:.4g}, "
          f"diagonal PSNR {res.report.diagonal_psnr:.2f} dB, frame-rate factor {res.report.frame_rate_factor}")
    if sep:
        print("depth separation: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in sep.items()))
    return 0


def cmd_replica_demo(args, cfg: RunConfig) -> int:
    grid = cfg.grid()
    img = _default_card(cfg)
    z_src = args.z_src or cfg["plane.mono"]
    H = make_transfer(grid, WaveSpec(args.lambda_src), z_src, cfg["propagate.pad"])
    sol = gs_solve(img**2, H, iterations=args.iterations)
    zs = np.linspace(args.span[0], args.span[1], args.samples) * z_src
    focus = replica_sweep(sol.phases[0], grid, args.lambda_probe, zs)
    pred = replica_depth(args.lambda_src, z_src, args.lambda_probe)
    out = _outdir(args)
    (out / "replica.csv").write_text("z,focus\n" + "".join(f"{z:.9g},{f:.9g}\n" for z, f in zip(zs, focus)))
    print(f"predicted replica plane {pred:.6g} m, sharpest sample {zs[np.argmax(focus)]:.6g} m")
    return 0


def cmd_metrics(args, cfg: RunConfig) -> int:
    def load(p):
        p = Path(p)
        return hio.read_sequence(p, cfg["io.srgb"]) if p.is_dir() else hio.read_image(p, cfg["io.srgb"])[None]

    ref, test = load(args.ref), load(args.test)
    rep = evaluate_video(ref, test, peak=args.peak, scale=not args.no_scale)
    print(rep.summary() if rep.warp.size else rep.summary() + "\nWarp   0.00000")
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    return 0


def cmd_scan_demo(args, cfg: RunConfig) -> int:
    T, Hh, W = args.frames, args.height, args.width
    order = scan_order(T, Hh, W)
    print("forward scan (t, y, x):")
    print("  " + " ".join(f"({t},{y},{x})" for t, y, x in order))
    print("backward scan (t, y, x):")
    print("  " + " ".join(f"({t},{y},{x})" for t, y, x in order[::-1]))
    seq = flatten_hwt(np.arange(T * Hh * W, dtype=float).reshape(T, Hh, W))
    ssm = LinearSSM.scalar(args.a, 1.0, 1.0)
    print("forward state:", np.array2string(ssm_scan_forward(seq.values[:, 0], ssm), precision=3))
    print("backward state:", np.array2string(ssm_scan_backward(seq.values[:, 0], ssm), precision=3))
    return 0


def cmd_rerun(args, cfg: RunConfig) -> int:
    man = json.loads(Path(args.manifest).read_text())
    argv = ["--config", str(args.manifest)] + list(man.get("argv", [])) + ["--output", args.output]
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="holoplex", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"holoplex {__version__}")
    p.add_argument("--config", help="config file (key = value, JSON, or a result manifest)")
    p.add_argument("--desk", action="store_true", help="start from the bundled desk-scale config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--threads", type=int, help="cap FFT worker threads")
    p.add_argument("--srgb", action="store_true", help="linearize sRGB-encoded input images")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("propagate", help="phase image in, intensity image out")
    s.add_argument("--phase", required=True)
    s.add_argument("--z", type=float)
    s.add_argument("--wavelength", type=float)
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--raw", help="also dump the exact intensity as a raw float64 file")
    s.add_argument("--no-normalize", action="store_true", help="write intensity as-is (clipped to 1)")
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("solve", help="phase hologram for one image")
    s.add_argument("--target", help="grayscale PNG/PGM (default: built-in test card)")
    s.add_argument("--method", choices=["gs", "adam"])
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("solve-video", help="phase holograms for a frame sequence")
    s.add_argument("--frames", help="directory of numbered frames (default: built-in translating card)")
    s.add_argument("--num-frames", type=int, default=3)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--warm-start", dest="warm_start", action="store_true", default=None)
    g.add_argument("--cold-start", dest="warm_start", action="store_false")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_solve_video)

    s = sub.add_parser("color-sim", help="full-color TM / DDM / SGDDM simulation")
    s.add_argument("--scheme", choices=["TM", "DDM", "SGDDM"])
    s.add_argument("--target", help="RGB PNG (default: built-in desk card)")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_color_sim)

    s = sub.add_parser("replica-demo", help="axial sweep showing the depth replica")
    s.add_argument("--lambda-src", type=float, default=520e-9)
    s.add_argument("--lambda-probe", type=float, default=638e-9)
    s.add_argument("--z-src", type=float)
    s.add_argument("--samples", type=int, default=21)
    s.add_argument("--span", type=float, nargs=2, default=(0.6, 1.2))
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_replica_demo)

    s = sub.add_parser("metrics", help="PSNR / SSIM / warp error between two images or frame folders")
    s.add_argument("--ref", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--peak", type=float, default=1.0)
    s.add_argument("--no-scale", action="store_true", help="skip least-squares scaling of the test images")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("scan-demo", help="print the bidirectional scan order")
    s.add_argument("--frames", type=int, default=2)
    s.add_argument("--height", type=int, default=2)
    s.add_argument("--width", type=int, default=2)
    s.add_argument("--a", type=float, default=0.5, help="state transition of the demo recurrence")
    s.set_defaults(func=cmd_scan_demo)

    s = sub.add_parser("rerun", help="repeat a run from its manifest")
    s.add_argument("manifest")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_rerun)
    return p


# options echoed into manifests so `rerun` can replay a command
_REPLAY = {"solve": ("target", "method"), "solve-video": ("frames", "num_frames", "warm_start"),
           "color-sim": ("scheme", "target")}


def _replay_argv(args) -> list[str]:
    out = [args.command]
    for name in _REPLAY.get(args.command, ()):
        v = getattr(args, name, None)
        if v is None:
            continue
        if name == "warm_start":
            out.append("--warm-start" if v else "--cold-start")
        else:
            out += [f"--{name.replace('_', '-')}", str(Path(v).resolve()) if name in ("target", "frames") else str(v)]
    return out


def _overrides(items: list[str]) -> dict:
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _fail(category: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": category, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    core.set_fft_workers(args.threads)
    try:
        path = args.config or (bundled_config_path() if args.desk else None)
        overrides = _overrides(args.set)
        if args.srgb:
            overrides["io.srgb"] = "true"
        cfg = RunConfig.load(path, overrides)
        args.replay_argv = _replay_argv(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except NumericalError as exc:
        return _fail("numerical", exc, EXIT_NUMERIC)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    except ValueError as exc:
        # invariant violations surfacing from inputs (shapes, domains)
        return _fail("config", exc, EXIT_CONFIG)
    finally:
        core.set_fft_workers(None)


if __name__ == "__main__":
    sys.exit(main())
