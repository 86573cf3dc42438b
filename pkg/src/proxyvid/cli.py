"""Command-line interface: ``proxyvid <command> [options]``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import appearance, editing, io, metrics, pipeline, renderer, representation, synth
from .config import load_config
from .estimator import make_tracker_from_config
from .exceptions import ProxyVidError
from .propagation import ProxyLayer, build_layer
from .tracking import OracleTracker
from .vectorizer import SeedNodes

log = logging.getLogger("proxyvid")

ABLATIONS = {
    "full": {},
    "w/o-layer": {"disable_layering": True},
    "F": {"schedule": "first"},
    "F&L": {"schedule": "first_last"},
    "w/o-pos": {"disable_position_input": True},
    "w/o-U": {"disable_freq_encoding": True},
}


# -- helpers ---------------------------------------------------------------------

def _layer_list(text):
    if not text:
        return []
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _load_dataset(path):
    """Frames + masks from a dataset directory; attaches motion if ``scene.json`` is present."""
    path = Path(path)
    video = io.read_video(path)
    spec_file = path / "scene.json"
    if spec_file.exists():
        spec = synth.SceneSpec.from_json(spec_file.read_text())
        video.motion = synth.SceneMotion(spec)
    return video


def _tracker(args, cfg, video):
    tcfg = cfg.tracker
    if args.tracker:
        tcfg = replace(tcfg, name=args.tracker)
    if tcfg.name == "oracle" and video.motion is None:
        raise ProxyVidError("the oracle tracker needs a synthetic dataset (scene.json)")
    return make_tracker_from_config(tcfg, video)


def _read_layers(directory):
    directory = Path(directory)
    records = {r["layer_id"]: r for r in io.read_jsonl(directory / "layers.jsonl")} \
        if (directory / "layers.jsonl").exists() else {}
    layers = []
    for pvt in sorted(directory.glob("layer_*.pvt")):
        lid, t0, pos, conf = io.read_pvt(pvt)
        rec = records.get(lid, {})
        g, n = conf.shape
        layers.append(ProxyLayer(lid, t0, t0 + n - 1, pos, rec.get("round_tag", np.zeros(g)),
                                 rec.get("source_frame", np.full(g, t0)), conf, rec.get("diagnostics", {})))
    if not layers:
        raise ProxyVidError(f"no layer_*.pvt files in {directory}")
    return layers


def _write_frames(out, frames, ppm=False, start=0):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for k, img in enumerate(frames):
        io.write_png(out / f"frame_{start + k:05d}.png", img)
        if ppm:
            io.write_ppm(out / f"frame_{start + k:05d}.ppm", img)


# -- commands --------------------------------------------------------------------

def cmd_synth(args, cfg):
    if args.scene:
        specs = {s.name: s for s in synth.standard_suite()}
        if args.scene not in specs:
            raise ProxyVidError(f"unknown suite scene {args.scene!r}; choose from {sorted(specs)}")
        spec = specs[args.scene]
    else:
        spec = synth.SceneSpec.from_json(Path(args.spec).read_text())
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    sv = synth.generate(spec)
    out = Path(args.out)
    io.write_video(out, sv.video)
    io.write_frames(out / "clean", sv.clean_background)
    (out / "scene.json").write_text(spec.to_json())
    log.info("wrote %d frames to %s", spec.n_frames, out)
    return 0


def cmd_vectorize(args, cfg):
    video = _load_dataset(args.frames)
    records = []
    for track in video.layers:
        seeds, truncated = pipeline.seed_layer(video, track, cfg.vectorizer)
        records.append({"layer_id": track.layer_id, "frame": seeds.frame, "truncated": truncated,
                        "edge_points": seeds.edge_points.tolist(),
                        "interior_points": seeds.interior_points.tolist()})
        log.info("layer %d: %d edge + %d interior seeds", track.layer_id, len(seeds.edge_points),
                 len(seeds.interior_points))
    io.write_jsonl(args.out, records)
    return 0


def cmd_build(args, cfg):
    video = _load_dataset(args.frames)
    tracker = _tracker(args, cfg, video)
    seeds = {}
    if args.seeds:
        for r in io.read_jsonl(args.seeds):
            seeds[r["layer_id"]] = (SeedNodes(np.asarray(r["edge_points"], dtype=np.float64).reshape(-1, 2),
                                              np.asarray(r["interior_points"], dtype=np.float64).reshape(-1, 2),
                                              r["frame"]), r["truncated"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for track in video.layers:
        s, truncated = seeds.get(track.layer_id) or pipeline.seed_layer(video, track, cfg.vectorizer)
        layer = build_layer(s, tracker, video, cfg.propagation, track=track, seed_truncated=truncated)
        io.write_layer_pvt(out / f"layer_{track.layer_id:02d}.pvt", layer)
        records.append({"layer_id": layer.layer_id, "round_tag": layer.round_tag,
                        "source_frame": layer.source_frame, "diagnostics": layer.diagnostics})
        log.info("layer %d: %d nodes in %d rounds", layer.layer_id, layer.n_nodes, layer.n_rounds)
    io.write_jsonl(out / "layers.jsonl", records)
    return 0


def cmd_fit(args, cfg):
    video = _load_dataset(args.frames)
    train = cfg.train
    if args.steps is not None:
        train = replace(train, steps=args.steps)
    if args.seed is not None:
        train = replace(train, seed=args.seed)
    if args.trajectories:
        layers = _read_layers(args.trajectories)
        by_id = {t.layer_id: t for t in video.layers}
        masks = [by_id[l.layer_id] for l in layers]
    else:
        layers = pipeline.build_layers(video, _tracker(args, cfg, video), cfg.vectorizer, cfg.propagation)
        masks = video.layers
    meta = {"eps_d": cfg.propagation.eps_d, "config": cfg.to_dict() | {"train": asdict(train)}}
    rep, losses = appearance.fit(video, layers, train, masks=masks, meta_extra=meta)
    io.save_pvr(args.out, rep)
    if args.loss_csv:
        appearance.write_loss_csv(args.loss_csv, losses)
    log.info("final loss %.6g (PSNR estimate %.2f dB); %d parameters", rep.meta["final_loss"],
             appearance.psnr_from_loss(rep.meta["final_loss"]), representation.param_count(rep))
    return 0


def cmd_render(args, cfg):
    rep = io.load_pvr(args.model)
    drop = editing.layer_indices(rep, _layer_list(args.drop_layers))
    if 0 in drop:
        raise ProxyVidError("the background layer cannot be dropped")
    mode = renderer.COMPOSITE if drop else renderer.RECONSTRUCT
    keep = [i for i in range(len(rep.layers)) if i not in drop] if drop else None
    out = Path(args.out)
    if args.time is not None:
        out.mkdir(parents=True, exist_ok=True)
        img = renderer.render_time(rep, args.time, mode, keep)
        io.write_png(out / f"time_{args.time:09.4f}.png", img)
        if args.ppm:
            io.write_ppm(out / f"time_{args.time:09.4f}.ppm", img)
        return 0
    for t in [args.frame] if args.frame is not None else range(rep.n_frames):
        if args.scale and args.scale != 1.0:
            img = renderer.render_superres(rep, t, args.scale, mode, keep)
        else:
            img = renderer.render_frame(rep, t, mode, keep)
        _write_frames(out, [img], args.ppm, start=t)
    return 0


def cmd_inpaint(args, cfg):
    rep = io.load_pvr(args.model)
    drop = _layer_list(args.drop_layers)
    if not drop:
        drop = [l.layer_id for l in rep.layers[1:]]
    frames = editing.inpaint(rep, drop)
    _write_frames(args.out, frames, args.ppm)
    return 0


def cmd_edit(args, cfg):
    rep = io.load_pvr(args.model)
    edited = io.read_png(args.edited)
    region = io.read_png(args.region, mask=True)
    ecfg = cfg.edit
    if args.steps is not None:
        ecfg = replace(ecfg, steps=args.steps)
    if args.lr is not None:
        ecfg = replace(ecfg, learning_rate=args.lr)
    new = editing.edit_keyframe(rep, args.keyframe, edited, region, ecfg)
    io.save_pvr(args.out, new)
    return 0


def cmd_eval(args, cfg):
    pred = io.read_frames(args.pred)
    ref = io.read_frames(args.ref)
    if pred.shape != ref.shape:
        raise ProxyVidError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    records = []
    for t in range(len(pred)):
        records.append({"frame": t, "psnr": metrics.psnr(pred[t], ref[t]), "ssim": metrics.ssim(pred[t], ref[t])})
    summary = {"frame": "mean", "psnr": float(np.mean([r["psnr"] for r in records])),
               "ssim": float(np.mean([r["ssim"] for r in records]))}
    if args.report:
        io.write_jsonl(args.report, records + [summary])
    print(json.dumps(summary))
    return 0


def run_ablation(video, cfg, variants=None, steps=None, tracker=None):
    """Fit each ablation variant; returns one record per variant."""
    tracker = tracker or (OracleTracker() if video.motion is not None else None)
    results = []
    for name in variants or ABLATIONS:
        flags = ABLATIONS[name]
        train = cfg.train
        if steps is not None:
            train = replace(train, steps=steps)
        train = replace(train, **{k: v for k, v in flags.items() if k != "schedule"})
        prop = replace(cfg.propagation, schedule=flags.get("schedule", cfg.propagation.schedule))
        v = video.single_layer() if train.disable_layering else video
        trk = tracker or make_tracker_from_config(cfg.tracker, v)
        layers = []
        for track in v.layers:
            s, truncated = pipeline.seed_layer(v, track, cfg.vectorizer)
            layers.append(build_layer(s, trk, v, prop, track=track, seed_truncated=truncated))
        rep, losses = appearance.fit(v, layers, train)
        recon = renderer.render_sequence(rep)
        psnr = float(np.mean([metrics.psnr(recon[t], video.frames[t]) for t in range(video.n_frames)]))
        results.append({"variant": name, "final_loss": rep.meta["final_loss"], "psnr": psnr,
                        "nodes": int(sum(l.n_nodes for l in layers))})
        log.info("%s: loss %.6g psnr %.2f", name, rep.meta["final_loss"], psnr)
    return results


def cmd_ablate(args, cfg):
    if args.scene:
        specs = {s.name: s for s in synth.standard_suite()}
        video = synth.generate(specs[args.scene]).video
    else:
        video = _load_dataset(args.frames)
    variants = args.variants.split(",") if args.variants else None
    if variants:
        bad = [v for v in variants if v not in ABLATIONS]
        if bad:
            raise ProxyVidError(f"unknown variants {bad}; choose from {list(ABLATIONS)}")
    results = run_ablation(video, cfg, variants, args.steps)
    if args.report:
        io.write_jsonl(args.report, results)
    for r in results:
        print(json.dumps(r))
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="proxyvid", description="Layered proxy-node video representation.")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread cap")
    p.add_argument("--config", default=None, help="TOML or JSON config file")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bit-reproducible mode")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="SceneSpec JSON")
    g.add_argument("--scene", help="standard suite scene name (S1..S6)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("vectorize", help="seed nodes per layer")
    s.add_argument("--frames", required=True, help="dataset directory (frames and layer masks)")
    s.add_argument("--out", required=True, help="seeds JSON-lines file")
    s.set_defaults(func=cmd_vectorize)

    s = sub.add_parser("build", help="track and supplement proxy nodes")
    s.add_argument("--frames", required=True)
    s.add_argument("--seeds", default=None, help="seeds from `vectorize` (computed if omitted)")
    s.add_argument("--tracker", choices=["auto", "oracle", "lk"], default=None)
    s.add_argument("--out", required=True, help="directory for layer_XX.pvt and layers.jsonl")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("fit", help="fit codes and decoder")
    s.add_argument("--frames", required=True)
    s.add_argument("--trajectories", default=None, help="output directory of `build`")
    s.add_argument("--tracker", choices=["auto", "oracle", "lk"], default=None)
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--loss-csv", default=None)
    s.add_argument("--out", required=True, help=".pvr file")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("render", help="render frames from a .pvr")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--frame", type=int, default=None)
    s.add_argument("--time", type=float, default=None)
    s.add_argument("--scale", type=float, default=None)
    s.add_argument("--drop-layers", default="", help="comma-separated layer ids")
    s.add_argument("--ppm", action="store_true", help="also write binary PPM")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("inpaint", help="render with foreground layers removed")
    s.add_argument("--model", required=True)
    s.add_argument("--drop-layers", default="", help="layer ids (default: all foreground)")
    s.add_argument("--out", required=True)
    s.add_argument("--ppm", action="store_true")
    s.set_defaults(func=cmd_inpaint)

    s = sub.add_parser("edit", help="propagate a keyframe edit")
    s.add_argument("--model", required=True)
    s.add_argument("--keyframe", type=int, required=True)
    s.add_argument("--edited", required=True, help="edited keyframe PNG")
    s.add_argument("--region", required=True, help="edit region mask PNG")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--out", required=True, help="edited .pvr")
    s.set_defaults(func=cmd_edit)

    s = sub.add_parser("eval", help="PSNR/SSIM against reference frames")
    s.add_argument("--pred", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--report", default=None, help="JSON-lines output")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="run the ablation matrix on a scene")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--scene")
    g.add_argument("--frames")
    s.add_argument("--variants", default=None, help=f"comma-separated subset of {list(ABLATIONS)}")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"proxyvid: bad config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed), edit=replace(cfg.edit, seed=args.seed))
    threads = 1 if args.deterministic else args.threads
    limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limits:
            return args.func(args, cfg)
    except (ProxyVidError, FileNotFoundError) as exc:
        print(f"proxyvid {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
