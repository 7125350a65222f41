"""Backend benchmark: compiled engine vs pure-Python fallback.

Reports steps/s for each backend on the reference vehicle, the speedup,
and how long the two trajectories stay bitwise / numerically identical.

Run:  python3 benchmarks/benchmark_backends.py [--steps N]
"""

import argparse
import time

import numpy as np

from fwmav.config import reference_vehicle
from fwmav.dynamics import DEFAULT_DT, hover_state
from fwmav.engine import available_backends, make_engine


def time_backend(backend, params, n_steps):
    eng = make_engine(params, backend)
    s = hover_state(params).to_array()
    cmd = (8.0, 0.0, 0.0, 0.0)
    t0 = time.perf_counter()
    eng.run_open_loop(s, cmd, params.flap_frequency, DEFAULT_DT, n_steps)
    wall = time.perf_counter() - t0
    return n_steps / wall


def parity_horizon(params, n_steps, thresholds=(0.0, 1e-9, 1e-3)):
    """Steps until the backends' trajectories first exceed each divergence
    threshold. The two engines share the math but not the compiler's
    instruction scheduling, so last-bit differences appear within a few
    steps and then grow chaotically through the wing rotation-stop impacts."""
    eng_c = make_engine(params, "cython")
    eng_p = make_engine(params, "python")
    cmd = (8.0, 0.0, 0.0, 0.0)
    f = params.flap_frequency
    sc = hover_state(params).to_array()
    sp = sc.copy()
    crossings = {t: None for t in thresholds}
    for i in range(n_steps):
        sc = eng_c.run_open_loop(sc, cmd, f, DEFAULT_DT, 1)
        sp = eng_p.run_open_loop(sp, cmd, f, DEFAULT_DT, 1)
        d = np.max(np.abs(sc - sp))
        for t in thresholds:
            if d > t and crossings[t] is None:
                crossings[t] = i + 1
    return crossings


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1000,
                    help="python-backend steps to time (cython gets 20x; "
                         "uncontrolled flight tumbles after ~2.8 s sim)")
    args = ap.parse_args(argv)

    params = reference_vehicle()
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")

    rates = {}
    for b in backends:
        n = args.steps * (20 if b == "cython" else 1)
        rates[b] = time_backend(b, params, n)
        rt = rates[b] * DEFAULT_DT
        print(f"{b:>7}: {rates[b]:>10.0f} steps/s  (realtime factor {rt:.2f})")
    if len(rates) == 2:
        print(f"speedup: {rates['cython'] / rates['python']:.0f}x")
        crossings = parity_horizon(params, args.steps)
        for t, step in crossings.items():
            label = "any difference" if t == 0.0 else f"|delta| > {t:g}"
            where = f"step {step}" if step else f"not within {args.steps} steps"
            print(f"parity: {label} first at {where}")


if __name__ == "__main__":
    main()
