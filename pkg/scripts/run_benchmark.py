"""Synthetic benchmark: adaptive CNN and rlpq+poly SVM under 5-fold CV.

    python scripts/run_benchmark.py --out results/benchmark [--quick]

Writes one JSON report per method and a shared summary.csv.
"""
import argparse
import logging
import time
from pathlib import Path

from histoclass import evaluation as ev
from histoclass import svm, synth
from histoclass.acnn import TrainingConfig

# Reduced SVM grid; the default 11 x 10 grid is roughly 18x slower.
BENCH_C = (2.0 ** -1, 2.0 ** 3, 2.0 ** 7)
BENCH_GAMMA = (2.0 ** -3, 2.0 ** 1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/benchmark"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--quick", action="store_true",
                    help="10 images per class and at most 5 ACNN iterations")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    spec = synth.SyntheticSpec(images_per_class=10 if args.quick else 50, seed=args.seed)
    images = synth.generate(spec)
    plan = ev.make_folds(images, args.folds, seed=args.seed)
    acnn_method = ev.AcnnMethod()
    if args.quick:
        acnn_method = ev.AcnnMethod(config=TrainingConfig(max_iterations=5, seed=args.seed))
    methods = [
        acnn_method,
        ev.SvmMethod("rlpq", svm.KernelSpec("polynomial"), Cs=BENCH_C, gammas=BENCH_GAMMA,
                     seed=args.seed),
    ]

    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        rep = ev.run_experiment(images, method, plan, jobs=args.jobs, seed=args.seed,
                                model_dir=args.out / "models" / method.name)
        elapsed = time.perf_counter() - t0
        rep.write_json(args.out / f"report_{method.name}.json")
        rows.append(rep.csv_row())
        d = rep.detection
        print(f"{method.name:6s} identification {rep.identification_accuracy:.3f}  "
              f"detection {d.acc:.3f}  sen {d.sen:.3f}  spe {d.spe:.3f}  ({elapsed:.0f} s)")
    ev.append_csv(args.out / "summary.csv", rows)


if __name__ == "__main__":
    main()
