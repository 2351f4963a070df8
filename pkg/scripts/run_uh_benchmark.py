"""Benchmark study: two contracting scalar modes under uniform holdings.

Computes the contraction/gain certificate for the two-mode system
dx = -x + d and dx = -3x + d with shared V = x^2, then estimates
E[V] at the first nu_max switching instants from a Monte Carlo batch
and compares each row against the certified bound.

Usage:
    python3 scripts/run_uh_benchmark.py --paths 10000 --seed 2026
"""

import argparse
import csv
from pathlib import Path

import numpy as np

import switchstab as ss


def build():
    A = [np.array([[-1.0]]), np.array([[-3.0]])]
    B = [np.eye(1), np.eye(1)]
    sys = ss.make_linear_system(A, B)
    fam = ss.LyapunovFamily.quadratic([np.eye(1), np.eye(1)], (1.0, 3.0),
                                      ss.PowerGain(1.0, 2.0))
    params = ss.UHParams(T=1.0, q=np.array([0.5, 0.5]))
    return sys, fam, params


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--switches", type=int, default=12)
    ap.add_argument("--horizon", type=float, default=16.0)
    ap.add_argument("--output-dir", default=None)
    args = ap.parse_args(argv)

    sys, fam, params = build()
    rep = ss.uh_certificate(fam.mu, fam.rates, params.q, params.T,
                            alpha2=fam.alpha2, chi=fam.chi)
    print(f"contraction eta = {rep.contraction:.6f}")
    print(f"gain scale      = {rep.gain_scale:.6f}")
    print(f"certificate     = {'ok' if rep.passed else 'refused'}")

    d = ss.DisturbanceSignal.sinusoid(0.5, 2.0)
    x0 = np.array([5.0])
    spec = ss.BatchSpec(n_paths=args.paths, base_seed=args.seed,
                        nu_max=args.switches, horizon=args.horizon, step=0.01)
    batch = ss.run_batch(sys, params, d, fam, x0, spec)
    verdict = ss.verify_iss_l1(batch, rep, fam, x0)

    print(f"{'nu':>4} {'mean V':>12} {'3 se':>10} {'bound':>12} {'ok':>4}")
    for i, nu in enumerate(verdict.nu):
        print(f"{nu:>4d} {verdict.mean_V[i]:>12.6f} {3 * verdict.se_V[i]:>10.6f} "
              f"{verdict.bound[i]:>12.6f} {'yes' if verdict.row_pass[i] else 'NO':>4}")
    print(f"verdict: {'PASS' if verdict.passed else 'FAIL'}")

    max_res, frac_ok, _ = ss.audit_batch(batch)
    print(f"per-path audit: {100 * frac_ok:.1f}% within tolerance, "
          f"max residual {max_res:.2e}")

    if args.output_dir is not None:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "uh_benchmark.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["nu", "mean_V", "se_V", "bound", "row_pass"])
            for i, nu in enumerate(verdict.nu):
                w.writerow([int(nu), verdict.mean_V[i], verdict.se_V[i],
                            verdict.bound[i], bool(verdict.row_pass[i])])
        print(f"wrote {out / 'uh_benchmark.csv'}")

    return 0 if verdict.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
