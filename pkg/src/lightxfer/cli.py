"""Command-line interface: ``lightxfer <subcommand> [flags]``.

Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
Errors go to stderr as ``error: <message>``. Before running, every
subcommand prints its resolved configuration as JSON to stderr.

A ``--config FILE`` in INI syntax may supply defaults: keys in a section named
after the subcommand (or in ``[DEFAULT]``) use the flag's long name with
dashes or underscores. Flags given on the command line win.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .images import RangeError, ShapeError
from .io import FormatError, dumps, read_image, read_json, write_json, write_pfm, write_png
from .losses import LOSS_SETS, loss_config
from .mesh import TopologyError
from .metrics import compute_metrics
from .network import Formulation, ModelFormatError, NetConfig, ShadingMode, load_model, save_model

DATA_ERRORS = (FormatError, ModelFormatError, ShapeError, RangeError, TopologyError, FileNotFoundError,
               pipeline.TrainingError, ValueError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _shapes(text: str) -> tuple:
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in pipeline.SHAPES]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"shapes must be a comma list from {','.join(pipeline.SHAPES)}")
    return names


def _pair(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


def _cells(text: str) -> tuple:
    by_name = {c.name: c for c in pipeline.ABLATION_CELLS}
    names = [s.strip() for s in text.split(";") if s.strip()]
    bad = [n for n in names if n not in by_name]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown cell {bad[0]!r}; known: {'; '.join(by_name)}")
    return tuple(by_name[n] for n in names)


def model_manifest_path(model_path) -> Path:
    """Run manifest stored next to a model file; it carries the network configuration."""
    return Path(str(model_path) + ".json")


def _load_trained(model_path):
    side = model_manifest_path(model_path)
    if not side.exists():
        raise FormatError(f"{side}: run manifest for {model_path} not found")
    run = read_json(side)
    try:
        cfg = NetConfig(**run["config"]["net"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{side}: no usable network config ({exc})") from None
    return load_model(model_path, cfg)


def _read_mask(path):
    m = read_image(path)
    if m.shape[2] != 1:
        m = m.mean(axis=2, keepdims=True)
    return m


# -- subcommands ------------------------------------------------------------------

def cmd_gen_data(a) -> dict:
    from .render import set_render_threads

    set_render_threads()
    gen = pipeline.GenConfig(
        scenes=a.scenes, shapes=a.shapes, views=a.views, size=a.size, noise_sigma=a.noise_sigma,
        subdiv=a.subdiv, seed=a.seed, energy_gain=a.energy_gain, light_jitter=a.light_jitter,
        test_scenes=a.test_scenes,
    )
    manifest = pipeline.generate_dataset(gen, a.out)
    splits = {}
    for rec in manifest["samples"]:
        splits[rec["split"]] = splits.get(rec["split"], 0) + 1
    return {"manifest": str(Path(a.out) / "manifest.json"), "samples": len(manifest["samples"]),
            "failed": len(manifest["failed"]), "splits": splits}


def cmd_train(a) -> dict:
    data = pipeline.load_dataset(a.data)
    net = NetConfig(a.base_channels, a.depth, data.size, Formulation(a.formulation), ShadingMode(a.shading))
    optim = pipeline.OptimConfig(lr=a.lr, batch_size=a.batch_size)
    model, run = pipeline.train(data, net, loss_config(a.loss), epochs=a.epochs, seed=a.seed, steps=a.steps,
                                optim=optim)
    save_model(model, a.out)
    write_json(model_manifest_path(a.out), run)
    return {"model": a.out, "run_manifest": str(model_manifest_path(a.out)), "final_loss": run["final_loss"],
            "final_metrics": run["final_metrics"]}


def cmd_eval(a) -> dict:
    data = pipeline.load_dataset(a.data)
    model = _load_trained(a.model)
    report = pipeline.evaluate(model, data, a.split, masked=a.masked)
    write_json(a.report, report)
    out = {"report": a.report, "full": report["full"]["mean"]}
    if a.masked:
        out["masked"] = report["masked"]["mean"]
    return out


def cmd_ablate(a) -> dict:
    data = pipeline.load_dataset(a.data)
    cells = a.cells or pipeline.ABLATION_CELLS
    result = pipeline.run_ablation(data, cells, seed=a.seed, steps=a.steps, epochs=a.epochs,
                                   base_channels=a.base_channels, depth=a.depth)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "ablation.json", result)
    (out / "ablation.md").write_text(ablation_table(result), encoding="utf-8")
    return {"report": str(out / "ablation.json"), "cells": len(result["cells"]),
            "identical_data_order": result["identical_data_order"]}


def ablation_table(result: dict) -> str:
    """Markdown table of ablation cells and their mean metrics."""
    lines = ["| cell | formulation | shading | loss | L1-Norm | PSNR | SSIM | Lab angle |",
             "|---|---|---|---|---|---|---|---|"]
    for c in result["cells"]:
        m = c["metrics"] or {}
        vals = " | ".join(f"{m[k]:.4f}" if isinstance(m.get(k), float) else str(m.get(k))
                          for k in ("l1_norm", "psnr", "ssim", "lab_angle"))
        lines.append(f"| {c['name']} | {c['formulation']} | {c['shading']} | {c['loss']} | {vals} |")
    return "\n".join(lines) + "\n"


def cmd_transfer(a) -> dict:
    model = _load_trained(a.model)
    I_s, S = read_image(a.source), read_image(a.shading)
    M = _read_mask(a.mask)
    out = pipeline.transfer(model, I_s, S, M)
    write_pfm(a.out, out)
    if a.png:
        write_png(a.png, out)
    return {"out": a.out}


def cmd_composite(a) -> dict:
    pbr, t = read_image(a.pbr), read_image(a.transferred)
    M = _read_mask(a.mask)
    if not np.isin(M, (0.0, 1.0)).all():
        raise ValueError(f"{a.mask}: mask must be binary (0 or 1)")
    out = pipeline.composite_scene(pbr, M, t, fill=a.fill)
    write_png(a.out, out, encode_srgb=not a.no_srgb)
    if a.pfm:
        write_pfm(a.pfm, out)
    return {"out": a.out}


def cmd_metrics(a) -> dict:
    x, y = read_image(a.a), read_image(a.b)
    mask = _read_mask(a.mask)[:, :, 0] if a.mask else None
    return compute_metrics(x, y, mask).to_dict()


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="lightxfer", description="Lighting transfer for inserting objects into rendered scenes.",
                formatter_class=fmt)
    p.add_argument("--config", help="INI file with per-subcommand defaults", default=None)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", help="render a synthetic training set", formatter_class=fmt)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--scenes", type=int, default=8, help="number of procedural scenes")
    g.add_argument("--shapes", type=_shapes, default=pipeline.SHAPES, help="comma list of target shapes")
    g.add_argument("--views", type=int, default=16, help="camera views per scene and shape")
    g.add_argument("--size", type=int, default=64, help="image width and height in pixels")
    g.add_argument("--noise-sigma", type=float, default=0.01, help="vertex noise, fraction of the bounding radius")
    g.add_argument("--subdiv", type=int, default=1, help="Loop subdivision levels of the rough mesh")
    g.add_argument("--seed", type=int, default=0, help="master seed")
    g.add_argument("--energy-gain", type=_pair, default=(1.5, 2.5), help="LO,HI light energy gain range")
    g.add_argument("--light-jitter", type=float, default=0.5, help="std of the light position jitter")
    g.add_argument("--test-scenes", type=int, default=None, help="scenes held out for testing (default scenes//4)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model", formatter_class=fmt)
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="model file; the run manifest goes to OUT.json")
    t.add_argument("--epochs", type=int, default=1, help="passes over the training split")
    t.add_argument("--steps", type=int, default=None, help="optimizer steps (overrides --epochs)")
    t.add_argument("--formulation", choices=[f.value for f in Formulation], default="full",
                   help="image composition formulation")
    t.add_argument("--shading", choices=[m.value for m in ShadingMode], default="residual", help="shading mode")
    t.add_argument("--loss", choices=sorted(LOSS_SETS), default="full", help="loss set")
    t.add_argument("--seed", type=int, default=0, help="initialisation and data-order seed")
    t.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    t.add_argument("--batch-size", type=int, default=2, help="samples per step")
    t.add_argument("--base-channels", type=int, default=16, help="channels at the first U-Net level")
    t.add_argument("--depth", type=int, default=3, help="U-Net downsampling levels")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a model on a dataset split", formatter_class=fmt)
    e.add_argument("--data", required=True, help="dataset directory")
    e.add_argument("--model", required=True, help="model file written by train")
    e.add_argument("--report", required=True, help="output JSON report")
    e.add_argument("--masked", action="store_true", help="also report metrics inside the object mask")
    e.add_argument("--split", default="test", help="dataset split to evaluate")
    e.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="train and evaluate the ablation grid", formatter_class=fmt)
    ab.add_argument("--data", required=True, help="dataset directory")
    ab.add_argument("--out", required=True, help="output directory")
    ab.add_argument("--seed", type=int, default=0, help="seed shared by every cell")
    ab.add_argument("--epochs", type=int, default=1, help="passes over the training split per cell")
    ab.add_argument("--steps", type=int, default=None, help="optimizer steps per cell (overrides --epochs)")
    ab.add_argument("--cells", type=_cells, default=None, help="semicolon list of cell names (default: all)")
    ab.add_argument("--base-channels", type=int, default=16, help="channels at the first U-Net level")
    ab.add_argument("--depth", type=int, default=3, help="U-Net downsampling levels")
    ab.set_defaults(func=cmd_ablate)

    tr = sub.add_parser("transfer", help="transfer lighting onto a source image", formatter_class=fmt)
    tr.add_argument("--model", required=True, help="model file written by train")
    tr.add_argument("--source", required=True, help="source image I_s (PFM, scaled)")
    tr.add_argument("--shading", required=True, help="rough shading S' (PFM, scaled)")
    tr.add_argument("--mask", required=True, help="object mask M (PFM)")
    tr.add_argument("--out", required=True, help="output PFM")
    tr.add_argument("--png", default=None, help="optional sRGB PNG preview")
    tr.set_defaults(func=cmd_transfer)

    c = sub.add_parser("composite", help="merge a transferred object into a rendered scene", formatter_class=fmt)
    c.add_argument("--pbr", required=True, help="scene render (PFM)")
    c.add_argument("--mask", required=True, help="binary object mask (PFM)")
    c.add_argument("--transferred", required=True, help="transferred object image (PFM)")
    c.add_argument("--out", required=True, help="output PNG")
    c.add_argument("--fill", choices=["none", "diffusion"], default="none", help="boundary fill for invalid pixels")
    c.add_argument("--pfm", default=None, help="also write the composite as PFM")
    c.add_argument("--no-srgb", action="store_true", help="write PNG code values without sRGB encoding")
    c.set_defaults(func=cmd_composite)

    m = sub.add_parser("metrics", help="L1-Norm, PSNR, SSIM and Lab angle between two images", formatter_class=fmt)
    m.add_argument("--a", required=True, help="first image (PFM or PNG)")
    m.add_argument("--b", required=True, help="second image (PFM or PNG)")
    m.add_argument("--mask", default=None, help="optional binary mask")
    m.set_defaults(func=cmd_metrics)
    return p


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def _apply_config(parser, argv):
    """Turn config-file entries for the chosen subcommand into parser defaults."""
    head = _Parser(prog="lightxfer", add_help=False)
    head.add_argument("--config", default=None)
    head.add_argument("-v", "--verbose", action="store_true")
    head.add_argument("command", nargs="?")
    head.add_argument("rest", nargs=argparse.REMAINDER)
    pre, _ = head.parse_known_args(argv)
    if not pre.config or _subparser(parser, pre.command) is None:
        return
    cp = configparser.ConfigParser()
    try:
        if not cp.read(pre.config, encoding="utf-8"):
            raise FormatError(f"{pre.config}: config file not found")
    except configparser.Error as exc:
        raise FormatError(f"{pre.config}: {exc}") from None
    section = cp[pre.command] if cp.has_section(pre.command) else cp.defaults()
    sp = _subparser(parser, pre.command)
    actions = {a.dest: a for a in sp._actions if a.option_strings}
    overrides = {}
    for key, raw in section.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{pre.config}: unknown option {key!r} for {pre.command}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            value = cp.BOOLEAN_STATES.get(raw.lower())
            if value is None:
                raise UsageError(f"{pre.config}: {key} expects a boolean")
        else:
            try:
                value = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{pre.config}: bad value for {key}: {exc}") from None
            if act.choices is not None and value not in act.choices:
                raise UsageError(f"{pre.config}: {key} must be one of {list(act.choices)}")
        overrides[dest] = value
        act.required = False
    sp.set_defaults(**overrides)


def _jsonable(value):
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    return list(value)


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    print(json.dumps({"command": args.command, "config": _resolved(args)}, default=_jsonable, sort_keys=True),
          file=sys.stderr)
    try:
        result = args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
