"""Command-line entry points for the experiments.

Subcommands:
  size-sweep     error vs training-set size, plain and clonal variants
  epoch-curve    error vs epoch at a fixed per-class size
  two-class      two-class application with no-match gating on a third class
  clonalg-demo   standalone clonal selection against a binary glyph
  gradcheck      finite-difference audit of the full gradient stack
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .classifier import write_decision_records
from .clonal import save_pools
from .gradcheck import DEFAULT_STEP, run_gradient_audit

GRAD_TOLERANCE = 1e-4


def _add_common(parser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="flat key=value configuration file")
    parser.add_argument("--data-dir", metavar="PATH", dest="data_dir",
                        help="directory with the index-format image/label "
                             "files; a synthetic corpus is generated there "
                             "when they are missing")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (default: out)")


def _add_train_flags(parser) -> None:
    parser.add_argument("--sizes",
                        help="comma-separated per-class sizes, e.g. 10,25,50,100")
    parser.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float, help="learning rate")
    parser.add_argument("--variant", choices=("cnn", "cnn-ais", "both"))
    parser.add_argument("--eta", type=float, help="cloning constant")
    parser.add_argument("--alpha", type=float, help="mutation constant")
    parser.add_argument("--tau", type=float, help="acceptance threshold")
    parser.add_argument("--batch-size", type=int, dest="batch_size")


def _experiment_config(args, epochs_key: str = "epochs") -> harness.ExperimentConfig:
    overrides: dict[str, str] = {}
    direct = (("data_dir", "data_dir"), ("out", "out_dir"),
              ("sizes", "sizes"), ("seeds", "seeds"),
              ("lr", "learning_rate"), ("variant", "variant"),
              ("eta", "eta"), ("alpha", "alpha"), ("tau", "tau"),
              ("batch_size", "batch_size"),
              ("per_class", "curve_per_class"))
    for arg_name, key in direct:
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "epochs", None) is not None:
        overrides[epochs_key] = str(args.epochs)
    return harness.load_config(getattr(args, "config", None), overrides)


def _out_dir(cfg: harness.ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_size_sweep(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(cfg)
    rows = harness.run_size_sweep(cfg)
    harness.emit_csv(out / "size_sweep.csv", rows)
    series = harness.sweep_summary_series(rows)
    harness.emit_svg_lineplot(out / "size_sweep.svg", series,
                              "Test error vs training-set size",
                              "training samples per class", "test error")
    for variant, pts in series:
        for size, err in pts:
            print(f"{variant:8s} size {int(size):4d}  mean test error {err:.4f}")
    print(f"wrote {out / 'size_sweep.csv'} and {out / 'size_sweep.svg'}")
    return 0


def cmd_epoch_curve(args) -> int:
    cfg = _experiment_config(args, epochs_key="curve_epochs")
    out = _out_dir(cfg)
    rows, pools_by_seed = harness.run_epoch_curve(cfg)
    harness.emit_csv(out / "epoch_curve.csv", rows)
    harness.emit_svg_lineplot(out / "epoch_curve.svg",
                              harness.curve_series(rows),
                              "Test error vs epoch", "epoch", "test error")
    for seed, pools in sorted(pools_by_seed.items()):
        save_pools(pools, out / f"pools_seed{seed}.txt")
    by_seed: dict[int, list] = {}
    for r in rows:
        by_seed.setdefault(r.seed, []).append(r)
    for seed, seed_rows in sorted(by_seed.items()):
        last = max(seed_rows, key=lambda r: r.epoch)
        print(f"seed {seed}: epoch {last.epoch} "
              f"train {last.train_error:.4f} test {last.test_error:.4f}")
    print(f"wrote {out / 'epoch_curve.csv'} and {out / 'epoch_curve.svg'}")
    return 0


def cmd_two_class(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(cfg)
    result = harness.run_two_class_application(cfg)
    write_decision_records(out / "two_class_decisions.csv", result.decisions,
                           class_ids=sorted(result.pools))
    save_pools(result.pools, out / "two_class_pools.txt")
    print(f"two-class accuracy: {result.accuracy:.4f} "
          f"over {len(result.decisions)} test samples")
    for label in sorted(cfg.two_class_labels):
        counts = [d.counts.get(label, 0) for d in result.decisions]
        avidities = [d.avidities[label] for d in result.decisions
                     if label in d.avidities]
        scores = [d.scores[label] for d in result.decisions
                  if label in d.scores]
        mean = lambda xs: sum(xs) / len(xs) if xs else float("nan")
        print(f"class {label}: mean C {mean(counts):.2f}, "
              f"mean avidity {mean(avidities):.4f}, "
              f"mean S {mean(scores):.4f} "
              f"(qualified on {len(scores)}/{len(result.decisions)})")
    print(f"third-class probes: {result.third_total}, "
          f"no-match: {result.third_nomatch}, "
          f"recognized by the new pool afterwards: "
          f"{result.third_recognized_after}")
    print(f"wrote {out / 'two_class_decisions.csv'} and "
          f"{out / 'two_class_pools.txt'}")
    return 0


def cmd_clonalg_demo(args) -> int:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in str(args.seeds).split(",")]
    lines = ["seed,generation,best_affinity"]
    series = []
    final = {}
    for seed in seeds:
        result = harness.run_clonalg_demo(
            population_size=args.pop, generations=args.generations,
            eta=args.eta, alpha=args.alpha, sigma=args.sigma,
            select_n=args.select_n, seed=seed,
        )
        for gen, best in enumerate(result.history, start=1):
            lines.append(f"{seed},{gen},{best!r}")
        series.append((f"seed {seed}",
                       [(float(g), float(b))
                        for g, b in enumerate(result.history, start=1)]))
        final[seed] = result.history[-1]
    (out / "clonalg_history.csv").write_text("\n".join(lines) + "\n")
    harness.emit_svg_lineplot(out / "clonalg_history.svg", series,
                              "Best affinity vs generation", "generation",
                              "best affinity")
    for seed in seeds:
        print(f"seed {seed}: best affinity {final[seed]:.4f} "
              f"after {args.generations} generations")
    print(f"wrote {out / 'clonalg_history.csv'} and "
          f"{out / 'clonalg_history.svg'}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradient_audit(num_instances=args.instances,
                                 coords_per_array=args.coords)
    worst = 0.0
    for r in results:
        worst = max(worst, r.max_rel_error)
        print(f"instance {r.seed:3d}  plain {r.max_rel_error_plain:.3e}  "
              f"clone {r.max_rel_error_clone:.3e}")
    ok = worst < GRAD_TOLERANCE
    print(f"gradient audit: {'PASS' if ok else 'FAIL'} "
          f"(max relative error {worst:.3e}, threshold {GRAD_TOLERANCE:g}, "
          f"{len(results)} instances)")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clonalnet",
        description="small-data visual pattern recognition with a clonal "
                    "selection feature layer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("size-sweep",
                       help="train both variants over a grid of per-class "
                            "sizes and seeds")
    _add_common(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_size_sweep)

    p = sub.add_parser("epoch-curve",
                       help="per-epoch error curve at a fixed per-class size")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--per-class", type=int, dest="per_class",
                   help="training samples per class for the curve")
    p.set_defaults(func=cmd_epoch_curve)

    p = sub.add_parser("two-class",
                       help="two-class application with no-match gating")
    _add_common(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_two_class)

    p = sub.add_parser("clonalg-demo",
                       help="standalone clonal selection on a binary glyph")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--pop", type=int, default=50, help="population size")
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--select-n", type=int, default=10, dest="select_n")
    p.add_argument("--seeds", default="1", help="comma-separated seeds")
    p.set_defaults(func=cmd_clonalg_demo)

    p = sub.add_parser("gradcheck",
                       help="finite-difference audit of the gradient stack")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--coords", type=int, default=6,
                   help="sampled coordinates per parameter array")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
