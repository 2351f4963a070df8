"""Command-line entry point: certify, simulate, verify-iss, synthesize.

Each subcommand reads one JSON experiment document, runs the corresponding
pipeline stage, prints a short verdict, and writes deterministic artifacts
(report.json with sorted keys, CSV tables with 17-significant-digit floats,
no timestamps) into the output directory. Exit codes: 0 all checks pass,
1 a certificate or Monte Carlo verification fails, 2 the config is invalid.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys as _sys
from pathlib import Path

import numpy as np

from .certify import InfeasibleCertificate, markov_generator_check, slow_switching_certificate, uh_certificate
from .config import ConfigError, ExperimentConfig, load_config
from .lyapunov import check_decrement, sobol_ball
from .model import DisturbanceSignal
from .montecarlo import markov_boundedness, run_batch, verify_class_g_envelope, verify_iss_l1
from .sim import BlowUpError, integrate
from .switching import sample_class_g_path, sample_ctmc_path, sample_uh_path
from .synthesis import DecrementTargetPolicy, assemble_closed_loop, check_closed_loop, make_linear_feedback, make_mode_dependent

__all__ = ["main"]


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)


def _write_report(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _decrement_grid(cfg: ExperimentConfig, sys_obj, d_signal: DisturbanceSignal):
    """Shared sample grid for decrement checking: low-discrepancy states in a
    ball crossed with axis-aligned disturbances of graded magnitude."""
    blk = cfg.lyapunov
    x_samples = sobol_ball(sys_obj.state_dim, blk.check_points, blk.check_radius,
                           seed=cfg.experiment.seed)
    cap = max(d_signal.sup_norm, 1.0)
    mags = np.linspace(0.0, cap, blk.d_magnitudes)
    k = sys_obj.dist_dim
    dirs = np.concatenate([np.eye(k), -np.eye(k)], axis=0)
    d_samples = np.unique((mags[:, None, None] * dirs[None, :, :]).reshape(-1, k), axis=0)
    return x_samples, d_samples


def _sample_path(kind: str, params, sigma0, horizon: float, seed: int):
    if kind == "uh":
        return sample_uh_path(params, sigma0, horizon, seed)
    init = 0 if sigma0 is None else int(sigma0)
    if kind == "class-g":
        return sample_class_g_path(params, init, horizon, seed)
    return sample_ctmc_path(params, init, horizon, seed)


def _run_certificate(cfg: ExperimentConfig, fam, sys_obj, d_signal):
    """Certificate arithmetic for the configured switching kind.

    Returns (report_or_None, payload_dict, passed). For ctmc switching the
    generator check plays the certificate role and a report object is not
    produced.
    """
    blk = cfg.switching
    params = cfg.build_switching()
    if blk.kind == "uh":
        report = uh_certificate(fam.mu, fam.rates, params.q, params.T,
                                alpha2=fam.alpha2, chi=fam.chi)
        return report, {"certificate": report.to_dict()}, report.passed
    if blk.kind == "class-g":
        lambda_circ = float(min(fam.rates))
        report = slow_switching_certificate(
            fam.mu, lambda_circ, params,
            alpha2=fam.alpha2, rho=cfg.experiment.rho,
            eta_ball=cfg.experiment.eta_ball, delta=cfg.experiment.delta)
        return report, {"certificate": report.to_dict()}, report.passed
    # ctmc: check the extended-generator decrement on the shared grid
    if cfg.experiment.rho is None:
        raise ConfigError("experiment.rho", "required for ctmc switching (decrement gate radius)")
    lambda_circ = float(min(fam.rates))
    x_samples, d_samples = _decrement_grid(cfg, sys_obj, d_signal)
    gen = markov_generator_check(sys_obj, fam, np.asarray(cfg.switching.Q),
                                 cfg.experiment.rho, lambda_circ, x_samples, d_samples)
    payload = {"certificate": {"kind": "markov-generator", "passed": gen.passed,
                               "lambda_circ": lambda_circ, **gen.to_dict()}}
    return None, payload, gen.passed


def _print_verdict(lines, passed: bool) -> None:
    for key, value in lines:
        print(f"{key:>14}: {value}")
    print(f"{'verdict':>14}: {'PASS' if passed else 'FAIL'}")


def cmd_certify(cfg: ExperimentConfig, out_dir: Path) -> int:
    sys_obj = cfg.build_system()
    fam = cfg.build_family()
    d_signal = cfg.build_disturbance()

    x_samples, d_samples = _decrement_grid(cfg, sys_obj, d_signal)
    dec = check_decrement(sys_obj, fam, x_samples, d_samples)
    payload = {"decrement": dec.to_dict()}
    cert_passed = False
    lines = [("switching", cfg.switching.kind),
             ("mu", f"{fam.mu:.6g}"),
             ("decrement", "ok" if dec.passed else f"violated, residual {dec.max_residual:.3e}")]
    if dec.passed:
        try:
            report, cert_payload, cert_passed = _run_certificate(cfg, fam, sys_obj, d_signal)
        except InfeasibleCertificate as exc:
            payload["certificate"] = {"passed": False, "reason": str(exc)}
            lines.append(("certificate", f"infeasible: {exc}"))
        else:
            payload.update(cert_payload)
            if report is not None:
                if report.contraction is not None:
                    lines.append(("eta" if report.kind == "uh" else "margin",
                                  f"{report.contraction if report.kind == 'uh' else report.margin:.6g}"))
                if report.gain_scale is not None:
                    lines.append(("gain_scale", f"{report.gain_scale:.6g}"))
                if report.decay_rate is not None:
                    lines.append(("decay_rate", f"{report.decay_rate:.6g}"))
            lines.append(("certificate", "ok" if cert_passed else "refused"))
    else:
        payload["certificate"] = {"passed": False,
                                  "reason": "decrement inequality fails on the sample grid"}
    passed = dec.passed and cert_passed
    _write_report(out_dir / "report.json", payload)
    _print_verdict(lines, passed)
    return 0 if passed else 1


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, n_traj: int) -> int:
    sys_obj = cfg.build_system()
    params = cfg.build_switching()
    d_signal = cfg.build_disturbance()
    exp = cfg.experiment
    x0 = np.asarray(exp.x0)
    summaries = []
    for m in range(n_traj):
        path = _sample_path(cfg.switching.kind, params, cfg.switching.sigma0,
                            exp.horizon, exp.seed + m)
        try:
            traj = integrate(sys_obj, path, d_signal, x0, exp.step)
        except BlowUpError as exc:
            print(f"trajectory {m} blew up at t = {exc.t_last:.6g}", file=_sys.stderr)
            return 1
        _write_csv(out_dir / f"trajectory_{m}.csv", traj.to_csv_rows())
        summaries.append({
            "index": m,
            "n_switches": len(traj.switch_samples),
            "final_time": float(traj.times[-1]),
            "final_state": [float(v) for v in traj.states[-1]],
            "final_mode": int(path.mode_at(traj.times[-1])),
        })
    _write_report(out_dir / "report.json", {"trajectories": summaries, "step": exp.step})
    print(f"wrote {n_traj} trajectories to {out_dir}")
    return 0


def _verify_pipeline(cfg: ExperimentConfig, out_dir: Path, sys_obj, fam, payload: dict) -> int:
    """Certificate gate, Monte Carlo batch, and bound comparison; shared by
    verify-iss (open loop) and synthesize (closed loop)."""
    d_signal = cfg.build_disturbance()
    params = cfg.build_switching()
    exp = cfg.experiment
    kind = cfg.switching.kind
    x0 = np.asarray(exp.x0)

    try:
        report, cert_payload, cert_passed = _run_certificate(cfg, fam, sys_obj, d_signal)
    except InfeasibleCertificate as exc:
        payload["certificate"] = {"passed": False, "reason": str(exc)}
        _write_report(out_dir / "report.json", payload)
        _print_verdict([("certificate", f"infeasible: {exc}")], False)
        return 1
    payload.update(cert_payload)
    if not cert_passed:
        _write_report(out_dir / "report.json", payload)
        _print_verdict([("certificate", "refused")], False)
        return 1

    spec = cfg.build_batch_spec()
    lines = [("switching", kind), ("paths", spec.n_paths), ("seed", spec.base_seed)]
    if kind == "uh":
        batch = run_batch(sys_obj, params, d_signal, fam, x0, spec,
                          sigma0=cfg.switching.sigma0)
        verdict = verify_iss_l1(batch, report, fam, x0)
        payload["verdict"] = verdict.to_dict()
        _write_csv(out_dir / "verdict.csv", verdict.to_csv_rows())
        lines.append(("rows", f"{int(verdict.row_pass.sum())}/{verdict.nu.size} within bound"))
        passed = verdict.passed
    elif kind == "class-g":
        regime = cfg.build_regime()
        if regime is None:
            raise ConfigError("experiment.rho",
                              "rho and eta_ball are required for class-g verification")
        grid = cfg.build_grid()
        batch = run_batch(sys_obj, params, d_signal, fam, x0, spec,
                          sigma0=cfg.switching.sigma0, grid=grid, regime=regime)
        check = verify_class_g_envelope(batch, fam, report)
        payload["envelopes"] = {
            "pre_pass": int(check.pre_pass.sum()), "post_pass": int(check.post_pass.sum()),
            "points": int(check.grid.size), "passed": check.passed,
        }
        _write_csv(out_dir / "envelope_pre.csv", check.to_csv_rows("pre"))
        _write_csv(out_dir / "envelope_post.csv", check.to_csv_rows("post"))
        lines.append(("pre rows", f"{int(check.pre_pass.sum())}/{check.grid.size} within envelope"))
        lines.append(("post rows", f"{int(check.post_pass.sum())}/{check.grid.size} within envelope"))
        passed = check.passed
    else:
        grid = cfg.build_grid()
        batch = run_batch(sys_obj, params, d_signal, fam, x0, spec,
                          sigma0=cfg.switching.sigma0, grid=grid)
        bound = markov_boundedness(batch, fam, cfg.experiment.rho)
        payload["boundedness"] = {
            "rows_pass": int(bound.row_pass.sum()), "points": int(bound.grid.size),
            "passed": bound.passed,
        }
        _write_csv(out_dir / "verdict.csv", bound.to_csv_rows())
        lines.append(("rows", f"{int(bound.row_pass.sum())}/{bound.grid.size} within bound"))
        passed = bound.passed

    if cfg.outputs.trajectories > 0:
        code = cmd_simulate(cfg, out_dir, cfg.outputs.trajectories)
        if code != 0:
            passed = False
    _write_report(out_dir / "report.json", payload)
    _print_verdict(lines, passed)
    return 0 if passed else 1


def cmd_verify_iss(cfg: ExperimentConfig, out_dir: Path) -> int:
    sys_obj = cfg.build_system()
    fam = cfg.build_family()
    d_signal = cfg.build_disturbance()
    x_samples, d_samples = _decrement_grid(cfg, sys_obj, d_signal)
    dec = check_decrement(sys_obj, fam, x_samples, d_samples)
    payload = {"decrement": dec.to_dict()}
    if not dec.passed:
        payload["certificate"] = {"passed": False,
                                  "reason": "decrement inequality fails on the sample grid"}
        _write_report(out_dir / "report.json", payload)
        _print_verdict([("decrement", f"violated, residual {dec.max_residual:.3e}")], False)
        return 1
    return _verify_pipeline(cfg, out_dir, sys_obj, fam, payload)


def cmd_synthesize(cfg: ExperimentConfig, out_dir: Path) -> int:
    if cfg.system.G is None:
        raise ConfigError("system.G", "synthesize requires control channels")
    sys_obj = cfg.build_system()
    fam = cfg.build_family()
    d_signal = cfg.build_disturbance()

    blk = cfg.controller
    if blk is None or blk.kind == "universal":
        theta = cfg.experiment.theta if blk is None or blk.theta is None else blk.theta
        policy = DecrementTargetPolicy(method="analytic-affine", theta=theta)
        controller = make_mode_dependent(sys_obj, fam, policy)
    else:
        controller = make_linear_feedback(np.asarray(blk.K), sys_obj.n_modes)

    x_samples, d_samples = _decrement_grid(cfg, sys_obj, d_signal)
    check = check_closed_loop(sys_obj, fam, controller, x_samples, d_samples)
    payload = {"closed_loop_check": check.to_dict(),
               "controller": {"kind": controller.kind, **{
                   k: (v.tolist() if isinstance(v, np.ndarray) else v)
                   for k, v in controller.params.items()}}}
    if not check.passed:
        _write_report(out_dir / "report.json", payload)
        _print_verdict([("controller", controller.kind),
                        ("closed loop", f"decrement violated, residual {check.max_residual:.3e}")],
                       False)
        return 1

    closed = assemble_closed_loop(sys_obj, controller)
    print(f"{'controller':>14}: {controller.kind}, residual {check.max_residual:.3e} on "
          f"{check.n_points} points")
    return _verify_pipeline(cfg, out_dir, closed, fam, payload)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchstab",
        description="certify, simulate, and verify stability bounds for randomly "
                    "switched systems with disturbances",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("certify", "check the decrement inequality and certificate arithmetic"),
        ("simulate", "integrate sample trajectories and write them as CSV"),
        ("verify-iss", "run the Monte Carlo pipeline against certified bounds"),
        ("synthesize", "build a feedback, check it, and verify the closed loop"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON experiment document")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--trajectories", type=int, default=None,
                       help="override the trajectory/path count")
        p.add_argument("--output-dir", default=None, help="override outputs.dir")
        p.add_argument("--step", type=float, default=None, help="override experiment.step")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        exp = cfg.experiment
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.step is not None:
            updates["step"] = args.step
        if args.trajectories is not None and args.command != "simulate":
            updates["n_paths"] = args.trajectories
        if updates:
            cfg = dataclasses.replace(cfg, experiment=dataclasses.replace(exp, **updates))
        if args.output_dir is not None:
            cfg = dataclasses.replace(
                cfg, outputs=dataclasses.replace(cfg.outputs, dir=args.output_dir))
        out_dir = Path(cfg.outputs.dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.command == "certify":
            return cmd_certify(cfg, out_dir)
        if args.command == "simulate":
            n_traj = args.trajectories if args.trajectories is not None else (
                cfg.outputs.trajectories or 5)
            return cmd_simulate(cfg, out_dir, n_traj)
        if args.command == "verify-iss":
            return cmd_verify_iss(cfg, out_dir)
        return cmd_synthesize(cfg, out_dir)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"simulation blew up at t = {exc.t_last:.6g}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
