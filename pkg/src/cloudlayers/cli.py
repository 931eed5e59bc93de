"""Command-line entry points: detect, synth, score, fit.

Exit codes: 0 success, 1 input error, 2 internal failure. All runs are
deterministic given --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mixtures, pipeline, synth
from .flow import WlkConfig
from .imaging import load_sequence


class _InputError(Exception):
    pass


def _add_pipeline_flags(p):
    p.add_argument("--model", default="beta_T+vm_phi",
                   help="model id from the model zoo")
    p.add_argument("--alpha0", type=float, default=1.0,
                   help="Dirichlet prior, temperature component")
    p.add_argument("--alpha1", type=float, default=10.0,
                   help="Dirichlet prior, velocity component")
    p.add_argument("--beta", type=float, default=650.0,
                   help="transition stickiness of the sequential prior")
    p.add_argument("--window", type=int, default=8,
                   help="flow window half-width w (full width 2w+1)")
    p.add_argument("--tau", type=float, default=1e-8, help="WLS ridge")
    p.add_argument("--sigma", type=float, default=1.0,
                   help="temporal kernel amplitude")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-l", type=int, default=1, choices=(1, 2))


def _pipeline_config(args):
    try:
        return pipeline.PipelineConfig(
            model=args.model, alpha0=args.alpha0, alpha1=args.alpha1,
            hmm_beta=args.beta,
            wlk=WlkConfig(window_half_width=args.window, tau=args.tau,
                          sigma=args.sigma),
            restarts=args.restarts, seed=args.seed, init_l=args.init_l)
    except ValueError as exc:
        raise _InputError(str(exc))


def _cmd_detect(args):
    cfg = _pipeline_config(args)
    try:
        sequence = load_sequence(args.manifest)
    except (FileNotFoundError, ValueError) as exc:
        raise _InputError(str(exc))
    records = pipeline.process_sequence(sequence, cfg)
    out = Path(args.out)
    with out.open("w") as fh:
        for rec in records:
            fh.write(rec.to_json_line() + "\n")
    hist = {}
    for rec in records:
        hist[rec.chosen_l] = hist.get(rec.chosen_l, 0) + 1
    print(f"processed {len(records)} frames; "
          + " ".join(f"L={l}:{c}" for l, c in sorted(hist.items())),
          file=sys.stderr)
    return 0


def _cmd_synth(args):
    if args.layers not in (1, 2):
        raise _InputError("layer count must be 1 or 2")
    if args.spec:
        doc = json.loads(Path(args.spec).read_text())
        layers = tuple(synth.LayerSpec(**l) for l in doc.pop("layers"))
        doc["layers"] = tuple(
            synth.LayerSpec(**l) if isinstance(l, dict) else l for l in layers)
        spec = synth.SynthSpec(**doc)
    else:
        base = [synth.LayerSpec(base_temp=285.0, velocity=(1.0, 0.0)),
                synth.LayerSpec(base_temp=265.0, velocity=(-1.0, 1.0))]
        spec = synth.SynthSpec(
            shape=(args.height, args.width), frames=args.frames,
            layers=tuple(base[:args.layers]), noise_sigma=args.noise_sigma,
            change_point=args.change_point, seed=args.seed)
    try:
        sequence, truth = synth.generate(spec)
    except ValueError as exc:
        raise _InputError(str(exc))
    manifest, truth_path = synth.write_with_truth(args.out, sequence, truth)
    print(f"wrote {spec.frames} frames to {args.out} "
          f"(manifest {manifest.name}, truth {truth_path.name})",
          file=sys.stderr)
    return 0


def _cmd_score(args):
    try:
        truth_doc = json.loads(Path(args.truth).read_text())
        records = [json.loads(line)
                   for line in Path(args.detections).read_text().splitlines()
                   if line.strip()]
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise _InputError(str(exc))
    truth_by_t = {e["t"]: e["l"] for e in truth_doc["frames"]}
    if any(rec["t"] not in truth_by_t for rec in records):
        raise _InputError("detection records and truth frames do not align")
    if not records:
        raise _InputError("no detection records")
    correct = sum(rec["chosen_l"] == truth_by_t[rec["t"]] for rec in records)
    print(json.dumps({"accuracy": 100.0 * correct / len(records),
                      "frames": len(records)}, sort_keys=True))
    return 0


def _cmd_fit(args):
    cfg = _pipeline_config(args)
    try:
        sequence = load_sequence(args.manifest)
    except (FileNotFoundError, ValueError) as exc:
        raise _InputError(str(exc))
    by_t = {f.index: (f, m) for f, m in sequence}
    if args.t not in by_t:
        raise _InputError(f"frame index {args.t} not in sequence")
    frame, mask = by_t[args.t]
    feats = pipeline._temperature_features(frame, mask, cfg)
    feat, kind = pipeline.MODEL_ZOO[cfg.model].temperature
    spec = mixtures.MixtureSpec(
        n_clusters=args.l, components=((feat, kind),),
        dirichlet_alpha=(cfg.alpha0,) * args.l)
    fit = mixtures.fit(feats, spec, init_seed=cfg.seed,
                       restarts=cfg.restarts)
    text = json.dumps(fit.to_json_dict(), sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cloudlayers",
        description="Detect one vs. two cloud motion layers in thermal "
                    "image sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run the sequential detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="JSON-lines output path")
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("synth", help="generate a labeled synthetic sequence")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--frames", type=int, default=31)
    p.add_argument("--height", type=int, default=60)
    p.add_argument("--width", type=int, default=80)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--change-point", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", default=None, help="JSON spec file overriding flags")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("score", help="accuracy of a detection run vs. truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("fit", help="fit one temperature mixture and dump it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--l", type=int, default=2, choices=(1, 2))
    p.add_argument("--out", default=None)
    _add_pipeline_flags(p)
    p.set_defaults(func=_cmd_fit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
