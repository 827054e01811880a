"""Compare the compiled and pure-NumPy kernels, and the FFT backends.

    python benchmarks/bench_kernels.py [--n 256] [--repeat 5]

Reports the best wall time of a single Chebyshev recurrence term, the
absorber mask, a kinetic application and a full propagation step for
every available combination.
"""
import argparse
import time

import numpy as np

from matterwave import kernels
from matterwave.grid import FFT_BACKENDS, KineticOperator, build_grid, set_fft_backend
from matterwave.hamiltonian import PotentialModel, TwoChannelHamiltonian, lih_masses
from matterwave.propagator import Propagator, make_absorber, make_plan


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="grid points per axis")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mu, M = lih_masses()
    g = build_grid(args.n, args.n, 25.6 / args.n, 25.6 / args.n, r0=1.0, mu_r=mu, M_Z=M)
    h = TwoChannelHamiltonian.from_model(g, PotentialModel())
    rng = np.random.default_rng(0)
    n = g.nr * g.nZ
    tk, vr, vp, w = h.normalized_arrays()
    phi = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
    t, prev = phi.copy(), phi.copy()
    out, acc = np.empty_like(phi), np.zeros_like(phi)
    mask = make_absorber(g, 5.0, width_r=5.0).mask.ravel()
    plan = make_plan(h, nu_tau=40.0)
    psi = phi.reshape(2, g.nr, g.nZ)

    print(f"grid {g.nr}x{g.nZ}, Chebyshev order {plan.order}, best of {args.repeat}")
    default_kernels = kernels.backend
    rows = []
    for kb in kernels.available_backends():
        kernels.use_backend(kb)
        term = best_of(lambda: kernels.cheb_term(t, phi, prev, vr, vp, w, 2.0, 0.3j, out, acc, True), args.repeat)
        work = phi.copy()
        masking = best_of(lambda: kernels.apply_mask(work, mask, out), args.repeat)
        rows.append((f"kernels={kb}", "recurrence term", term))
        rows.append((f"kernels={kb}", "absorber mask", masking))
    for fb in FFT_BACKENDS:
        try:
            set_fft_backend(fb)
        except Exception as exc:  # pyFFTW missing
            print(f"fft={fb}: unavailable ({exc})")
            continue
        kin = KineticOperator(g, tk)
        kin.apply(psi)  # plan creation outside the timing
        rows.append((f"fft={fb}", "kinetic apply", best_of(lambda: kin.apply(psi), args.repeat)))
        for kb in kernels.available_backends():
            kernels.use_backend(kb)
            prop = Propagator(h, plan)
            prop.step(psi)
            step = best_of(lambda: prop.step(psi), max(1, args.repeat // 2))
            rows.append((f"fft={fb} kernels={kb}", "propagation step", step))
    kernels.use_backend(default_kernels)
    set_fft_backend("scipy")
    width = max(len(r[0]) for r in rows)
    for name, what, secs in rows:
        print(f"{name:<{width}}  {what:<17} {secs * 1e3:10.3f} ms")


if __name__ == "__main__":
    main()
