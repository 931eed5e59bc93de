#!/usr/bin/env python3
"""Benchmark the detector on synthetic suites and compare transition priors.

Runs the default pipeline over a one-layer suite, a two-layer suite and a
noisy change-point suite, at beta = 650 (sticky sequential prior) and
beta = 0 (per-frame maximum likelihood), and prints per-suite accuracy.
"""

import argparse
import time

from cloudlayers.pipeline import PipelineConfig, process_sequence
from cloudlayers.synth import LayerSpec, SynthSpec, generate


def build_suites(n_seq, frames):
    one = [SynthSpec(frames=frames, seed=s,
                     layers=(LayerSpec(base_temp=278.0, velocity=(1, 0)),))
           for s in range(n_seq)]
    two = [SynthSpec(frames=frames, seed=100 + s,
                     layers=(LayerSpec(base_temp=285.0, velocity=(1, 0)),
                             LayerSpec(base_temp=265.0, velocity=(-1, 1))))
           for s in range(n_seq)]
    cp = [SynthSpec(frames=13, change_point=6, noise_sigma=3.0, seed=s,
                    layers=(LayerSpec(base_temp=278.0, velocity=(1, 0),
                                      amplitude=1.5),
                            LayerSpec(base_temp=266.0, velocity=(-1, 1),
                                      amplitude=1.5)))
          for s in (2, 3, 5, 6)]
    return {"one-layer": one, "two-layer": two, "change-point": cp}


def run_suite(specs, beta, seed, model):
    cfg = PipelineConfig(seed=seed, hmm_beta=beta, model=model)
    correct = total = 0
    for spec in specs:
        seq, truth = generate(spec)
        pairs = [(f, m) for f, m, _ in seq]
        recs = process_sequence(pairs, cfg)
        correct += sum(r.chosen_l == truth[r.t] for r in recs)
        total += len(recs)
    return correct, total


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sequences", type=int, default=5,
                    help="sequences per one/two-layer suite")
    ap.add_argument("--frames", type=int, default=31)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--model", default="beta_T+vm_phi")
    ap.add_argument("--betas", type=float, nargs="+", default=[650.0, 0.0])
    args = ap.parse_args()

    suites = build_suites(args.sequences, args.frames)
    print(f"model {args.model}, pipeline seed {args.seed}")
    print(f"{'suite':>14} {'beta':>8} {'correct':>9} {'accuracy':>9} "
          f"{'time':>7}")
    for name, specs in suites.items():
        for beta in args.betas:
            t0 = time.time()
            correct, total = run_suite(specs, beta, args.seed, args.model)
            print(f"{name:>14} {beta:>8.0f} {correct:>5}/{total:<3} "
                  f"{100.0 * correct / total:>8.2f}% "
                  f"{time.time() - t0:>6.1f}s")


if __name__ == "__main__":
    main()
