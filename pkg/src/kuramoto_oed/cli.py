"""Command-line interface: dataset generation, training, estimation,
ranking, campaigns, benchmarks, and plot-series export.

Every run writes a `<output>.manifest.json` recording the full
configuration, seeds, and package versions, so any output can be
reproduced from its manifest alone.  Exit codes: 0 success, 1 domain
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .control import SearchConfig, make_ml_predicate, make_ode_predicate
from .errors import KuramotoOedError
from .mocu import estimate_mocu, rank_experiments, scores_to_csv
from .model import SimConfig
from .nn import evaluate, load_classifier, save_classifier, train
from .oed import (
    Backends,
    Strategy,
    benchmark_speedup,
    campaign_to_jsonl,
    draw_true_model,
    run_campaign,
    true_model_from_class,
)
from .surrogate import generate_dataset, load_dataset, save_dataset
from .uncertainty import SETUP_NAMES, build_paper_class, load_class, true_coupling

THREADS_ENV = "KURAMOTO_OED_THREADS"

PAPER_SCALE = {
    "five_osc": {"per_class": 20000, "K": 20480},
    "seven_osc": {"per_class": 50000, "K": 20480},
}
DESK_SCALE = {
    "five_osc": {"per_class": 2000, "K": 2048},
    "seven_osc": {"per_class": 5000, "K": 2048},
}


def _write_manifest(out_path: Path, args: argparse.Namespace) -> None:
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items())
                   if k != "func" and not k.startswith("_")},
        "versions": {
            "kuramoto_oed": __version__,
            "numpy": np.__version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
        },
    }
    path = Path(str(out_path) + ".manifest.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_setup_class(args):
    if args.preset:
        return build_paper_class(args.preset)
    if args.class_file:
        return load_class(args.class_file)
    raise KuramotoOedError("either --preset or --class-file is required")


def _sim_config(args) -> SimConfig:
    return SimConfig(sample_rate_hz=args.fs, duration_s=args.duration)


def _search_config(args) -> SearchConfig:
    return SearchConfig(tolerance=args.tolerance)


def _backends(args, uclass) -> Backends:
    ode = make_ode_predicate(uclass.omega, _sim_config(args))
    ml = None
    if getattr(args, "model", None):
        ml = make_ml_predicate(load_classifier(args.model), uclass.omega)
    return Backends(ode=ode, ml=ml)


def cmd_gen_data(args) -> int:
    per_class = args.per_class
    if args.paper_scale:
        per_class = PAPER_SCALE[args.preset]["per_class"]
    ds = generate_dataset(args.preset, per_class, args.seed)
    save_dataset(ds, args.out, meta={
        "setup": args.preset, "per_class_count": per_class, "seed": args.seed,
    })
    _write_manifest(Path(args.out), args)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    clf, report = train(ds, preset=args.preset, seed=args.seed,
                        max_epochs=args.epochs)
    save_classifier(clf, args.out)
    _write_manifest(Path(args.out), args)
    print(f"trained {report.epochs_run} epochs, accuracy "
          f"{report.final_accuracy:.6f}"
          + ("" if report.reached_perfect else " (epoch cap reached)"))
    return 0


def cmd_estimate(args) -> int:
    uclass = _load_setup_class(args)
    backends = _backends(args, uclass)
    predicate = backends.select(args.backend)
    K = PAPER_SCALE[args.preset]["K"] if (args.paper_scale and args.preset) else args.k
    est = estimate_mocu(uclass, predicate, K, args.seed,
                        _search_config(args), args.backend)
    payload = {
        "mocu": est.value, "xi_star": est.xi_star, "xi_mean": est.xi_mean,
        "stderr": est.stderr, "K": est.K, "seed": est.seed,
        "backend": est.backend, "excluded": est.excluded,
        "predicate_calls": est.predicate_calls,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_manifest(Path(args.out), args)
    print(json.dumps(payload))
    return 0


def cmd_rank(args) -> int:
    uclass = _load_setup_class(args)
    backends = _backends(args, uclass)
    predicate = backends.select(args.backend)
    K = PAPER_SCALE[args.preset]["K"] if (args.paper_scale and args.preset) else args.k
    scores = rank_experiments(uclass, predicate, K, args.seed,
                              _search_config(args), args.backend, crn=args.crn)
    scores_to_csv(scores, args.out)
    _write_manifest(Path(args.out), args)
    print(f"wrote {len(scores)} pair scores to {args.out}; "
          f"best pair {scores[0].pair}")
    return 0


def cmd_campaign(args) -> int:
    uclass = _load_setup_class(args)
    backends = _backends(args, uclass)
    strategy = Strategy(args.strategy, args.backend)
    if args.true_model == "preset":
        vec = true_coupling(args.preset) if args.preset else None
        if vec is None:
            raise KuramotoOedError(
                "no published true model for this setup; use --true-model draw")
        tm = true_model_from_class(uclass, vec)
    else:
        tm = draw_true_model(uclass, args.seed + 7919)
    K = PAPER_SCALE[args.preset]["K"] if (args.paper_scale and args.preset) else args.k
    state = run_campaign(uclass, tm, strategy, args.steps, K, args.seed,
                         backends, _search_config(args),
                         ground_truth_K=args.ground_truth_k or K)
    campaign_to_jsonl(state, args.out, extra_meta={"K": K})
    _write_manifest(Path(args.out), args)
    print(f"campaign of {args.steps} steps written to {args.out}; "
          f"final MOCU {state.history[-1].mocu.value:.6f}")
    return 0


def cmd_benchmark(args) -> int:
    uclass = _load_setup_class(args)
    backends = _backends(args, uclass)
    if backends.ml is None:
        raise KuramotoOedError("benchmark requires --model (trained classifier)")
    K = PAPER_SCALE[args.preset]["K"] if (args.paper_scale and args.preset) else args.k
    seeds = [args.seed + i for i in range(args.runs)]
    result = benchmark_speedup(uclass, K, seeds, backends, _search_config(args))
    with open(args.out, "w") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    _write_manifest(Path(args.out), args)
    print(json.dumps(result))
    return 0


def cmd_emit_plots(args) -> int:
    """Aggregate campaign JSON-lines logs into plot-ready CSV series:
    mean MOCU per (strategy, step), mean cumulative seconds per step, and
    first-k sequence agreement between every pair of strategies."""
    from .oed import sequence_agreement

    logs = []
    for path in args.logs:
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        meta = lines[0]
        steps = lines[1:]
        logs.append((meta, steps))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    by_strategy: dict[str, list] = {}
    for meta, steps in logs:
        label = f"{meta['strategy']}_{meta.get('backend', 'ode')}"
        by_strategy.setdefault(label, []).append(steps)

    with open(outdir / "mocu_vs_step.csv", "w") as fh:
        fh.write("strategy,step,mean_mocu,stderr,runs\n")
        for label, runs in sorted(by_strategy.items()):
            depth = min(len(r) for r in runs)
            for k in range(depth):
                vals = np.array([r[k]["mocu"] for r in runs])
                se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
                fh.write(f"{label},{r_step(runs[0][k])},{vals.mean()!r},{se!r},{len(vals)}\n")

    with open(outdir / "cost_vs_step.csv", "w") as fh:
        fh.write("strategy,step,mean_cum_seconds,runs\n")
        for label, runs in sorted(by_strategy.items()):
            depth = min(len(r) for r in runs)
            for k in range(depth):
                cums = np.array([sum(s["wall_ms"] for s in r[:k + 1]) / 1e3
                                 for r in runs])
                fh.write(f"{label},{r_step(runs[0][k])},{cums.mean()!r},{len(cums)}\n")

    with open(outdir / "agreement.csv", "w") as fh:
        fh.write("strategy_a,strategy_b,k,mean_common,runs\n")
        labels = sorted(by_strategy)
        for ia, la in enumerate(labels):
            for lb in labels[ia + 1:]:
                pairs_a = [[tuple(s["pair"]) for s in r if s["pair"]]
                           for r in by_strategy[la]]
                pairs_b = [[tuple(s["pair"]) for s in r if s["pair"]]
                           for r in by_strategy[lb]]
                m = min(len(pairs_a), len(pairs_b))
                if m == 0:
                    continue
                agrees = []
                for r_a, r_b in zip(pairs_a[:m], pairs_b[:m]):
                    depth = min(len(r_a), len(r_b))
                    if depth and set(r_a[:depth]) and len(set(r_a)) == len(r_a):
                        try:
                            agrees.append(sequence_agreement(
                                sorted_design(r_a, depth), sorted_design(r_b, depth)))
                        except ValueError:
                            continue
                if not agrees:
                    continue
                depth = min(len(a) for a in agrees)
                arr = np.array([a[:depth] for a in agrees])
                for k in range(depth):
                    fh.write(f"{la},{lb},{k + 1},{arr[:, k].mean()!r},{arr.shape[0]}\n")
    _write_manifest(outdir / "plots", args)
    print(f"wrote plot series to {outdir}")
    return 0


def r_step(record: dict) -> int:
    return int(record["step"])


def sorted_design(seq: list[tuple[int, int]], depth: int) -> list[tuple[int, int]]:
    """First `depth` picks followed by the rest of the design space in
    lexicographic order, making truncated sequences comparable."""
    rest = sorted(set(seq) - set(seq[:depth]))
    return list(seq[:depth]) + rest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kuramoto-oed",
        description="MOCU-based experimental design for uncertain "
                    "Kuramoto oscillator networks")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get(THREADS_ENV, "0")) or None,
                        help="worker threads for numerical kernels "
                             f"(default: ${THREADS_ENV} or hardware)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset_required=False, model=False, backend=False):
        p.add_argument("--preset", choices=SETUP_NAMES,
                       required=preset_required)
        if not preset_required:
            p.add_argument("--class-file", help="uncertainty-class JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--k", type=int, default=2048,
                       help="Monte-Carlo sample count")
        p.add_argument("--fs", type=float, default=160.0)
        p.add_argument("--duration", type=float, default=5.0)
        p.add_argument("--tolerance", type=float, default=2.5e-4)
        p.add_argument("--paper-scale", action="store_true",
                       help="use the full published sample sizes")
        if model:
            p.add_argument("--model", help="trained classifier JSON")
        if backend:
            p.add_argument("--backend", choices=("ode", "ml"), default="ode")

    p = sub.add_parser("gen-data", help="generate a labeled dataset")
    p.add_argument("--preset", choices=SETUP_NAMES, required=True)
    p.add_argument("--per-class", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the surrogate classifier")
    p.add_argument("--data", required=True, help="dataset CSV from gen-data")
    p.add_argument("--preset", choices=SETUP_NAMES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="estimate MOCU of a class")
    common(p, model=True, backend=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rank", help="rank pairwise experiments")
    common(p, model=True, backend=True)
    p.add_argument("--crn", action="store_true",
                   help="share one sample set across pairs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("campaign", help="run a sequential design campaign")
    common(p, model=True, backend=True)
    p.add_argument("--strategy", required=True,
                   choices=("mocu_iterative", "mocu_static", "entropy",
                            "random", "oracle"))
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--true-model", choices=("preset", "draw"),
                   default="preset")
    p.add_argument("--ground-truth-k", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("benchmark", help="time ML vs ODE backends")
    common(p, model=True)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("emit-plots", help="aggregate campaign logs to CSV")
    p.add_argument("--logs", nargs="+", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_emit_plots)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        import numba
        numba.set_num_threads(max(1, args.threads))
    try:
        return args.func(args)
    except KuramotoOedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
