"""Feedback synthesis for open-loop unstable switched modes.

Both modes dx = a x + d + u (a = 1.0 and 0.5) grow without control. The
script synthesizes the mode-dependent damping feedback, certifies the
closed-loop decrement condition on a sampled ball, and then verifies the
switching-instant moment bound on the closed loop by Monte Carlo.
"""

import argparse

import numpy as np

import switchstab as ss


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=818)
    ap.add_argument("--radius", type=float, default=5.0)
    args = ap.parse_args(argv)

    A = [np.array([[1.0]]), np.array([[0.5]])]
    B = [np.eye(1), np.eye(1)]
    G = [np.eye(1), np.eye(1)]
    sys = ss.make_linear_system(A, B, G)
    fam = ss.LyapunovFamily.quadratic([np.eye(1), np.eye(1)], (1.0, 3.0),
                                      ss.PowerGain(1.0, 2.0))

    xs = ss.sobol_ball(sys.state_dim, 4096, args.radius, seed=args.seed)
    ds = np.linspace(-1.0, 1.0, 9).reshape(-1, 1)

    open_loop = ss.check_decrement(sys, fam, xs, ds)
    print(f"open loop : worst residual {open_loop.max_residual:.3f} "
          f"({'violated' if not open_loop.passed else 'ok'})")

    ctrl = ss.make_mode_dependent(sys, fam)
    closed = ss.check_closed_loop(sys, fam, ctrl, xs, ds)
    print(f"controller: {ctrl.kind}")
    print(f"closed loop: worst residual {closed.max_residual:.3e} "
          f"on {closed.n_points} points "
          f"({'ok' if closed.passed else 'violated'})")

    loop_sys = ss.assemble_closed_loop(sys, ctrl)
    params = ss.UHParams(T=1.0, q=np.array([0.5, 0.5]))
    d = ss.DisturbanceSignal.sinusoid(0.5, 2.0)
    x0 = np.array([5.0])
    spec = ss.BatchSpec(n_paths=args.paths, base_seed=args.seed, nu_max=10,
                        horizon=12.0, step=0.01)
    batch = ss.run_batch(loop_sys, params, d, fam, x0, spec)
    rep = ss.uh_certificate(fam.mu, fam.rates, params.q, params.T,
                            alpha2=fam.alpha2, chi=fam.chi)
    verdict = ss.verify_iss_l1(batch, rep, fam, x0)
    print(f"moment bound at switches 1..{spec.nu_max}: "
          f"{int(verdict.row_pass.sum())}/{verdict.nu.size} rows within bound")
    print(f"verdict: {'PASS' if verdict.passed else 'FAIL'}")
    return 0 if (closed.passed and verdict.passed) else 1


if __name__ == "__main__":
    raise SystemExit(main())
