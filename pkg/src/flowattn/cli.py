"""Command-line entry point.

Every subcommand accepts ``--config FILE``: a plain-text file of
``key = value`` lines (``#`` starts a comment) whose keys are the long option
names of that subcommand. Precedence is command-line flag > config file >
built-in default. Commands that write a directory also write the effective
configuration to ``config.txt`` inside it.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attention import DEFAULT_ALPHA, DEFAULT_INJECT_FRACTION, DEFAULT_THRESHOLD, FloatConfig
from .flow import FlowParams, compute_mask, estimate_flow, read_flo, write_flo
from .imagecore import (
    ImageIOError,
    list_numbered_images,
    load_image,
    load_normal_image,
    load_normal_sequence,
    save_image,
    save_normal_image,
)
from .metrics import DEFAULT_FLOW_PEAK, DEFAULT_K, MetricReport, normal_condition_metrics, self_ssim
from .synth import ClothSceneParams, gen_cloth_sequence, gen_translation_sequence, random_normal_map
from .toygen import GenerationMode, build_toy_denoiser, generate_sequence, read_tensor, write_tensor
from .warp import bilinear_warp

MODE_CHOICES = ["plain", "featin", "featin-mask", "float"]


class ConfigError(ValueError):
    pass


def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text):
    try:
        return tuple(int(t) for t in str(text).split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_flow_args(p):
    d = FlowParams()
    p.add_argument("--levels", type=int, default=d.pyramid_levels, help="pyramid levels")
    p.add_argument("--iters", type=int, default=d.iterations_per_level, help="iterations per level")
    p.add_argument("--smooth", type=float, default=d.smoothness_weight, help="smoothness (Tikhonov) weight")


def _flow_params(args):
    return FlowParams(args.levels, args.iters, args.smooth)


def _add_model_args(p):
    p.add_argument("--prompt", default="a woman in a plain red dress", help="text prompt")
    p.add_argument("--mode", choices=MODE_CHOICES, default="float", help="generation mode")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="weight of the current attention map")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="flow magnitude threshold (px)")
    p.add_argument("--inject-frac", type=float, default=DEFAULT_INJECT_FRACTION, help="fraction of steps with KV injection")
    p.add_argument("--flip-flow", type=_bool, default=True, help="negate frame-pair flow before the backward warp")
    p.add_argument("--hook-layer", type=int, default=-1, help="index of the manipulated attention layer")
    p.add_argument("--seed", type=int, default=0, help="model and noise seed")
    p.add_argument("--latent-size", type=int, default=64, help="latent / attention grid size")
    p.add_argument("--channels", type=int, default=320, help="attention channels")
    p.add_argument("--steps", type=int, default=20, help="denoising steps")
    p.add_argument("--cond-weight", type=float, default=3.0, help="normal-map conditioning strength")
    p.add_argument("--layers", type=int, default=1, help="attention layers in the toy model")
    p.add_argument("--kv-pool", type=int, default=4, help="key/value pooling factor")
    p.add_argument("--flo-dir", default=None, help="directory of NNNN.flo frame-pair flows (else estimated)")
    _add_flow_args(p)


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="flowattn", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text, parent=sub):
        p = parent.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        p.add_argument("--config", default=None, help="key = value configuration file")
        return p

    p = add("synth", "write a synthetic normal-map sequence with ground-truth flows")
    p.add_argument("--kind", choices=["cloth", "translation"], default="cloth")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--amplitude", type=float, default=3.0, help="wave amplitude (cloth)")
    p.add_argument("--wave-count", type=float, default=2.0, help="waves across the image (cloth)")
    p.add_argument("--velocity", type=float, default=1.0, help="horizontal velocity, px/frame")
    p.add_argument("--velocity-y", type=float, default=0.0, help="vertical velocity, px/frame (translation)")
    p.add_argument("--region", type=_ints, default="32,16,96,112", help="cloth rectangle x0,y0,x1,y1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = add("flow", "estimate the flow between two normal-map images")
    p.add_argument("--a", required=True, help="first normal map")
    p.add_argument("--b", required=True, help="second normal map")
    p.add_argument("--out", required=True, help="output .flo file")
    p.add_argument("--color", default=None, help="also write a colour-coded flow image")
    _add_flow_args(p)
    p.set_defaults(func=cmd_flow)

    p = add("mask", "threshold a flow field into a binary motion mask")
    p.add_argument("--flo", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="magnitude threshold (px)")
    p.add_argument("--out", required=True, help="output mask image")
    p.set_defaults(func=cmd_mask)

    p = add("warp", "backward-warp an image by a flow field")
    p.add_argument("--field", required=True, help="input image")
    p.add_argument("--flo", required=True)
    p.add_argument("--flip", type=_bool, default=False, help="negate the flow first")
    p.add_argument("--out", required=True, help="output image")
    p.set_defaults(func=cmd_warp)

    p = add("gen", "generate frames from a normal-map sequence with the toy model")
    p.add_argument("--normals", required=True, help="directory of numbered normal-map images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--record", choices=["all", "final", "none"], default="final", help="attention tensors to dump")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="anchor frames for Self-SSIM")
    p.add_argument("--figures", type=_bool, default=True, help="render matplotlib figures")
    _add_model_args(p)
    p.set_defaults(func=cmd_gen)

    p = add("metrics", "normal-conditioning and coherence metrics")
    p.add_argument("--input", default=None, help="directory of input normal maps")
    p.add_argument("--estimated", default=None, help="directory of normal maps estimated from the output")
    p.add_argument("--frames", default=None, help="directory of generated frames (Self-SSIM)")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--flow-peak", type=float, default=DEFAULT_FLOW_PEAK)
    p.add_argument("--extra", action="append", default=[], help="externally computed metric, name=value")
    p.add_argument("--out", required=True, help="output directory")
    _add_flow_args(p)
    p.set_defaults(func=cmd_metrics)

    p = add("viz", "render attention heatmaps and flow images")
    vsub = p.add_subparsers(dest="viz_command", metavar="what")
    q = add("attn", "first-principal-component heatmap of an attention dump", vsub)
    q.add_argument("--dump", required=True, nargs="+", help="tensor file(s)")
    q.add_argument("--out", required=True, help="output image (first dump)")
    q.add_argument("--colormap", default="viridis")
    q.add_argument("--normalize", choices=["frame", "sequence"], default="frame")
    q.add_argument("--figure", default=None, help="also write a matplotlib figure of all dumps")
    q.set_defaults(func=cmd_viz_attn)
    q = add("flow", "colour-coded flow image", vsub)
    q.add_argument("--flo", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_viz_flow)

    p = add("ablate", "sweep alpha and report Self-SSIM per value")
    p.add_argument("--normals", default=None, help="normal-map directory (default: synthetic cloth)")
    p.add_argument("--frames", type=int, default=8, help="frames of the synthetic sequence")
    p.add_argument("--alphas", type=_floats, default="0.0,0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--figures", type=_bool, default=True)
    _add_model_args(p)
    p.set_defaults(func=cmd_ablate)
    return parser


# ---------------------------------------------------------------- config


def read_config(path):
    values = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, path):
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    values = read_config(path)
    converted = {}
    for key, value in values.items():
        if key in ("config", "help") or key not in actions:
            raise ConfigError(f"{path}: unknown key {key!r}")
        action = actions[key]
        try:
            if action.nargs in ("+", "*"):
                converted[key] = value.split()
            elif action.type is not None:
                converted[key] = action.type(value)
            else:
                converted[key] = value
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {exc}") from exc
        if action.choices is not None and converted[key] not in action.choices:
            raise ConfigError(f"{path}: {key!r} must be one of {list(action.choices)}")
        action.required = False
    parser.set_defaults(**converted)


def _subparser(parser, argv):
    """The innermost subparser selected by ``argv``."""
    current = parser
    for token in argv:
        subs = [a for a in current._actions if isinstance(a, argparse._SubParsersAction)]
        if not subs:
            break
        if token in subs[0].choices:
            current = subs[0].choices[token]
    return current


def effective_config(args):
    skip = {"func", "command", "viz_command", "config"}
    lines = []
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------- commands


def cmd_synth(args):
    out = _outdir(args.out)
    if args.kind == "cloth":
        params = ClothSceneParams(
            width=args.width,
            height=args.height,
            frames=args.frames,
            wave_amplitude=args.amplitude,
            wave_count=args.wave_count,
            phase_velocity=args.velocity,
            cloth_region=tuple(args.region),
            seed=args.seed,
        )
        normals, flows = gen_cloth_sequence(params)
    else:
        base = random_normal_map(args.width, args.height, seed=args.seed)
        normals, flows = gen_translation_sequence(base, (args.velocity, args.velocity_y), args.frames)
    (out / "flow").mkdir(exist_ok=True)
    for i, n in enumerate(normals):
        save_normal_image(n, out / f"{i:04d}.png")
        if i > 0:
            write_flo(flows[i], out / "flow" / f"{i:04d}.flo")
    (out / "config.txt").write_text(effective_config(args))
    print(f"wrote {len(normals)} normal maps to {out}")


def cmd_flow(args):
    a = load_normal_image(args.a)
    b = load_normal_image(args.b)
    f = estimate_flow(a, b, _flow_params(args))
    write_flo(f, args.out)
    if args.color:
        from .viz import flow_to_color

        save_image(flow_to_color(f), args.color)
    mag = np.hypot(f[..., 0], f[..., 1])
    print(f"mean_magnitude={mag.mean():.6f}\tmax_magnitude={mag.max():.6f}")


def cmd_mask(args):
    m = compute_mask(read_flo(args.flo), args.threshold)
    save_image(m.astype(np.float64), args.out)
    print(f"motion_fraction={m.mean():.6f}")


def cmd_warp(args):
    field = load_image(args.field)
    f = read_flo(args.flo)
    if args.flip:
        f = -f
    save_image(bilinear_warp(field, f), args.out)


def _load_flows(flo_dir, n):
    if flo_dir is None:
        return None
    flows = [None]
    for i in range(1, n):
        flows.append(read_flo(Path(flo_dir) / f"{i:04d}.flo"))
    flows[0] = np.zeros_like(flows[1]) if n > 1 else None
    return flows


def _model(args):
    den = build_toy_denoiser(
        seed=args.seed,
        latent_size=args.latent_size,
        channels=args.channels,
        steps=args.steps,
        cond_weight=args.cond_weight,
        n_layers=args.layers,
        kv_pool=args.kv_pool,
    )
    cfg = FloatConfig(
        alpha=args.alpha,
        threshold=args.threshold,
        inject_fraction=args.inject_frac,
        hook_layer=args.hook_layer,
        flip_flow=args.flip_flow,
    )
    return den, cfg


def cmd_gen(args):
    normals = load_normal_sequence(args.normals)
    flows = _load_flows(args.flo_dir, len(normals))
    den, cfg = _model(args)
    out = _outdir(args.out)
    frames_dir = _outdir(out / "frames")
    attn_dir = out / "attn"
    if args.record != "none":
        attn_dir.mkdir(exist_ok=True)

    seq = generate_sequence(
        normals,
        args.prompt,
        den,
        GenerationMode.parse(args.mode),
        cfg,
        flows=flows,
        flow_params=_flow_params(args),
        record=args.record,
    )
    for i, frame in enumerate(seq.frames):
        save_image(frame, frames_dir / f"{i:04d}.png")
        for k, a in enumerate(seq.attention[i]):
            if a is not None:
                write_tensor(a, attn_dir / f"frame{i:04d}_step{k:02d}.tns")

    score = self_ssim(seq, args.k)
    report = [f"{key}={value}" for key, value in sorted(seq.config.items())]
    report += [f"frames={len(seq)}", f"self_ssim={score:.6f}"]
    (out / "report.txt").write_text("\n".join(report) + "\n")
    (out / "config.txt").write_text(effective_config(args))

    if args.figures:
        from .plotting import plot_attention_strip, plot_frames
        from .viz import pca_heatmaps

        plot_frames(seq.frames, out / "frames.png")
        final = [att[-1] for att in seq.attention if att and att[-1] is not None]
        if len(final) == len(seq):
            plot_attention_strip(pca_heatmaps(final), out / "attention.png")
    print(f"wrote {len(seq)} frames to {frames_dir}\tself_ssim={score:.6f}")


def cmd_metrics(args):
    report = MetricReport(flow_peak=args.flow_peak)
    if (args.input is None) != (args.estimated is None):
        raise ValueError("--input and --estimated must be given together")
    if args.input is None and args.frames is None:
        raise ValueError("nothing to evaluate: give --input/--estimated and/or --frames")
    if args.input is not None:
        report = normal_condition_metrics(
            load_normal_sequence(args.input),
            load_normal_sequence(args.estimated),
            _flow_params(args),
            flow_peak=args.flow_peak,
        )
    if args.frames is not None:
        frames = [load_image(p) for p in list_numbered_images(args.frames)]
        if not frames:
            raise ValueError(f"no frames in {args.frames}")
        report.k = min(args.k, len(frames))
        report.self_ssim = self_ssim(frames, args.k)
    extra = {}
    for item in args.extra:
        if "=" not in item:
            raise ValueError(f"--extra expects name=value, got {item!r}")
        key, value = item.split("=", 1)
        extra[key.strip()] = float(value)
    report.merge(extra)
    out = _outdir(args.out)
    (out / "metrics.txt").write_text(report.to_text())
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "config.txt").write_text(effective_config(args))
    sys.stdout.write(report.to_text())


def cmd_viz_attn(args):
    from .viz import colorize, pca_heatmaps

    tensors = [read_tensor(p) for p in args.dump]
    maps = pca_heatmaps(tensors, args.normalize)
    for hm in maps:
        hm.colormap = args.colormap
    save_image(colorize(maps[0].values, args.colormap), args.out)
    if args.figure:
        from .plotting import plot_attention_strip

        plot_attention_strip(maps, args.figure, titles=[Path(p).stem for p in args.dump])
    for path, hm in zip(args.dump, maps):
        flag = "degenerate" if hm.degenerate else ("low_signal" if hm.low_signal else "ok")
        print(f"{path}\texplained_variance={hm.explained_variance:.6f}\t{flag}")


def cmd_viz_flow(args):
    from .viz import flow_to_color

    save_image(flow_to_color(read_flo(args.flo)), args.out)


def cmd_ablate(args):
    if args.normals is not None:
        normals = load_normal_sequence(args.normals)
        flows = _load_flows(args.flo_dir, len(normals))
    else:
        normals, flows = gen_cloth_sequence(ClothSceneParams(frames=args.frames, seed=args.seed))
    if not args.alphas:
        raise ValueError("no alpha values given")
    den, _ = _model(args)
    mode = GenerationMode.parse(args.mode)
    rows = []
    base_alpha = args.alpha
    for alpha in args.alphas:
        args.alpha = alpha
        _, cfg = _model(args)
        seq = generate_sequence(
            normals, args.prompt, den, mode, cfg, flows=flows, flow_params=_flow_params(args), record="none"
        )
        rows.append((alpha, self_ssim(seq, args.k)))
    args.alpha = base_alpha
    out = _outdir(args.out)
    table = "alpha\tself_ssim\n" + "".join(f"{a:g}\t{s:.6f}\n" for a, s in rows)
    (out / "ablation.tsv").write_text(table)
    scores = [s for _, s in rows]
    best = rows[int(np.argmax(scores))][0]
    (out / "report.txt").write_text(
        f"mode={mode.value}\nalphas={len(rows)}\nbest_alpha={best:g}\n"
        f"self_ssim_min={min(scores):.6f}\nself_ssim_max={max(scores):.6f}\n"
    )
    (out / "config.txt").write_text(effective_config(args))
    if args.figures:
        from .plotting import plot_ablation

        plot_ablation([a for a, _ in rows], scores, out / "ablation.png")
    sys.stdout.write(table)


# ------------------------------------------------------------------ entry


def run(argv=None):
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if "--config" in argv:
            idx = argv.index("--config")
            if idx + 1 >= len(argv):
                parser.error("--config needs a file")
            try:
                _apply_config(_subparser(parser, argv), argv[idx + 1])
            except (ConfigError, OSError) as exc:
                print(f"flowattn: invalid config: {exc}", file=sys.stderr)
                return 1
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        target = _subparser(parser, argv)
        target.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
    except (ValueError, OSError, KeyError, ImageIOError) as exc:
        print(f"flowattn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
