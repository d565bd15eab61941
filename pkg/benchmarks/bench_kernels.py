"""Compare the compiled and pure-Python likelihood kernels.

Times the per-stratum likelihood/weights kernel on its own and a complete
penalized fit under each available backend, and checks that both backends
return the same numbers.

    python3 benchmarks/bench_kernels.py --pairs 200 --controls 1 --p 100
"""

import argparse
import timeit

import numpy as np

from blockclr import PenaltySpec, _backend, fit_penalized, lambda_max
from blockclr.simulation import SimulationSetting, generate_dataset


def best_of(func, repeat, number):
    return min(timeit.repeat(func, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=200, help="number of matched sets")
    ap.add_argument("--controls", type=int, default=1, help="controls per case")
    ap.add_argument("--p", type=int, default=100, help="number of covariates")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    half = args.p // 2
    setting = SimulationSetting(half, args.p - half, min(10, half), min(10, args.p - half), 1.0, 1.0,
                                n_pairs=args.pairs, controls_per_case=args.controls, seed=args.seed)
    data = generate_dataset(setting).data
    layout = data.layout
    eta = layout.X @ np.random.default_rng(args.seed).standard_normal(data.p) * 0.3
    spec = PenaltySpec(tuple(0.2 * lambda_max(data)))

    print(f"{data.n} strata of size {args.controls + 1}, p = {data.p}; backends: {', '.join(_backend.available)}")
    results = {}
    saved = _backend.kernels
    try:
        for name in _backend.available:
            kern = _backend.load(name)
            _backend.kernels = kern
            k_time = best_of(lambda: kern.stratum_nll_weights(eta, layout), args.repeat, 200)
            fit = fit_penalized(data, spec)
            f_time = best_of(lambda: fit_penalized(data, spec), args.repeat, 1)
            results[name] = (k_time, f_time, kern.stratum_nll_weights(eta, layout), fit)
            print(f"{name:>7}: kernel {k_time * 1e6:9.1f} us   fit {f_time * 1e3:8.1f} ms ({fit.iterations} iterations)")
    finally:
        _backend.kernels = saved

    if len(results) == 2:
        (kc, fc, (vc, wc), fitc), (kp, fp, (vp, wp), fitp) = results["cython"], results["python"]
        print(f"speed-up: kernel x{kp / kc:.1f}, fit x{fp / fc:.1f}")
        print(f"max |difference|: nll {abs(vc - vp):.1e}, weights {np.max(np.abs(wc - wp)):.1e}, "
              f"coefficients {np.max(np.abs(fitc.beta - fitp.beta)):.1e}")


if __name__ == "__main__":
    main()
