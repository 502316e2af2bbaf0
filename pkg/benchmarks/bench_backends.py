"""Compare the numba kernels with the pure-numpy fallback.

Times tree growth, batched forest prediction, ADWIN updates and a short
prequential run, and checks that both backends produce identical results.

    python3 benchmarks/bench_backends.py [--repeats 5] [--window 1000]
"""
import argparse
import time

import numpy as np

from axgb._backend import HAVE_NUMBA
from axgb.adwin import AdwinDetector
from axgb.boosting import TreeParams, fit_tree, forest_margins, logistic_grad_hess_array
from axgb.ensemble import make_model
from axgb.evaluation import ArrayStream, prequential_run
from axgb.streams import compose_drift, preset_spec


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--window", type=int, default=1000, help="samples per tree")
    parser.add_argument("--stream", type=int, default=20_000, help="samples in the prequential run")
    args = parser.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    X, y = compose_drift(preset_spec("AGR_a", max(args.window, args.stream), 1)).take(max(args.window, args.stream))
    Xw, yw = X[:args.window], y[:args.window]
    g, h = logistic_grad_hess_array(np.zeros(len(yw)), yw)
    params = TreeParams()
    signal = (np.random.default_rng(0).random(200_000) < 0.7).astype(float)

    results = {}
    for backend in ("numba", "numpy"):
        # warm-up so compilation is not timed
        fit_tree(Xw[:10], g[:10], h[:10], params, backend=backend)
        t_fit, tree = best_of(lambda: fit_tree(Xw, g, h, params, backend=backend), args.repeats)
        trees = [tree] * 30
        t_pred, margins = best_of(lambda: forest_margins(trees, X, backend=backend), args.repeats)

        def adwin():
            d = AdwinDetector(backend=backend)
            d.add_many(signal, stop_on_drift=False)
            return d.width

        adwin()
        t_adwin, width = best_of(adwin, max(1, args.repeats // 2))

        def run():
            model = make_model("axgb_adwin_replace", backend=backend)
            return prequential_run(model, ArrayStream(X[:args.stream], y[:args.stream])).final_accuracy

        t_run, acc = best_of(run, 1)
        results[backend] = dict(fit=t_fit, predict=t_pred, adwin=t_adwin, run=t_run,
                                out=(tree, margins, width, acc))

    a, b = results["numba"]["out"], results["numpy"]["out"]
    identical = a[0].same_structure(b[0]) and np.array_equal(a[1], b[1]) and a[2] == b[2] and a[3] == b[3]

    labels = {
        "fit": f"grow one tree ({args.window} x {X.shape[1]})",
        "predict": f"30-tree forest on {len(X)} rows",
        "adwin": f"ADWIN, {len(signal)} updates",
        "run": f"AXGB_A[r] prequential, {args.stream} samples",
    }
    print(f"{'task':45s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for key, label in labels.items():
        tn, tp = results["numba"][key], results["numpy"][key]
        print(f"{label:45s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f}x")
    print(f"identical results across backends: {identical}")


if __name__ == "__main__":
    main()
