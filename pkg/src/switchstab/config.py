"""Experiment documents: one JSON file describing plant, certificate inputs,
switching law, disturbance, Monte Carlo sizes, and output destinations.

Loading is strict: unknown keys and missing required fields raise
``ConfigError`` carrying the dotted path of the offending field, and every
cross-block dimension (state, disturbance, mode counts) is checked at load
time. ``ExperimentConfig.to_dict`` emits a normalized document; loading and
re-emitting is idempotent, which is what makes byte-identical artifact runs
possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .model import DisturbanceSignal, PowerGain, SwitchedSystem, make_linear_system
from .lyapunov import LyapunovFamily
from .montecarlo import BatchSpec, RegimeSpec
from .switching import ClassGParams, CTMCParams, UHParams

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "loads_config"]


class ConfigError(ValueError):
    """Schema violation, annotated with the dotted path to the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _expect_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")
    return obj


def _check_keys(d: dict, path: str, required: tuple, optional: tuple = ()):
    for key in required:
        if key not in d:
            raise ConfigError(f"{path}.{key}", "missing required field")
    allowed = set(required) | set(optional)
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _number(d: dict, key: str, path: str, default=None):
    if key not in d:
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {type(val).__name__}")
    return float(val)


def _integer(d: dict, key: str, path: str, default=None):
    if key not in d:
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {type(val).__name__}")
    return int(val)


def _matrix(obj, path: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"not a numeric array: {exc}") from None
    if arr.ndim != 2:
        raise ConfigError(path, f"expected a row-major matrix, got ndim={arr.ndim}")
    return arr

def _vector(obj, path: str) -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"not a numeric array: {exc}") from None
    if arr.ndim != 1:
        raise ConfigError(path, f"expected a flat array, got ndim={arr.ndim}")
    return arr


def _gain(obj, path: str) -> PowerGain:
    d = _expect_mapping(obj, path)
    _check_keys(d, path, ("c", "p"))
    try:
        return PowerGain(c=float(d["c"]), p=float(d["p"]))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _matrix_list(obj, path: str) -> tuple:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(path, "expected a nonempty list of matrices")
    return tuple(_matrix(m, f"{path}[{i}]") for i, m in enumerate(obj))


@dataclass(frozen=True)
class SystemBlock:
    kind: str
    A: tuple
    B: tuple
    G: Optional[tuple]

    @property
    def n_modes(self) -> int:
        return len(self.A)

    def to_dict(self) -> dict:
        out = {"kind": self.kind,
               "A": [m.tolist() for m in self.A],
               "B": [m.tolist() for m in self.B]}
        if self.G is not None:
            out["G"] = [m.tolist() for m in self.G]
        return out


@dataclass(frozen=True)
class LyapunovBlock:
    P: tuple
    rates: tuple
    chi: PowerGain
    mu: Optional[float]
    alpha1: Optional[PowerGain]
    alpha2: Optional[PowerGain]
    check_radius: float
    check_points: int
    d_magnitudes: int

    def to_dict(self) -> dict:
        out = {"P": [m.tolist() for m in self.P],
               "rates": list(self.rates),
               "chi": self.chi.to_dict(),
               "check_radius": self.check_radius,
               "check_points": self.check_points,
               "d_magnitudes": self.d_magnitudes}
        if self.mu is not None:
            out["mu"] = self.mu
        if self.alpha1 is not None:
            out["alpha1"] = self.alpha1.to_dict()
        if self.alpha2 is not None:
            out["alpha2"] = self.alpha2.to_dict()
        return out


@dataclass(frozen=True)
class SwitchingBlock:
    kind: str
    T: Optional[float] = None
    q: Optional[tuple] = None
    lambda_tilde: Optional[float] = None
    lambda_bar: Optional[float] = None
    k0: int = 0
    mode_kernel: Optional[tuple] = None
    Q: Optional[tuple] = None
    sigma0: Optional[int] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "uh":
            out["T"] = self.T
            out["q"] = list(self.q)
        elif self.kind == "class-g":
            out["lambda_tilde"] = self.lambda_tilde
            out["lambda_bar"] = self.lambda_bar
            if self.k0:
                out["k0"] = self.k0
            if self.mode_kernel is not None:
                out["mode_kernel"] = [list(row) for row in self.mode_kernel]
        else:
            out["Q"] = [list(row) for row in self.Q]
        if self.sigma0 is not None:
            out["sigma0"] = self.sigma0
        return out


@dataclass(frozen=True)
class DisturbanceBlock:
    kind: str
    value: Optional[tuple] = None
    amplitude: Optional[float] = None
    omega: Optional[float] = None
    phase: float = 0.0
    direction: Optional[tuple] = None
    dwell: Optional[float] = None
    seed: int = 0

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = list(self.value)
        elif self.kind == "sinusoid":
            out["amplitude"] = self.amplitude
            out["omega"] = self.omega
            if self.phase:
                out["phase"] = self.phase
            if self.direction is not None:
                out["direction"] = list(self.direction)
        elif self.kind == "piecewise-constant-random":
            out["amplitude"] = self.amplitude
            out["dwell"] = self.dwell
            out["seed"] = self.seed
        return out


@dataclass(frozen=True)
class ExperimentBlock:
    x0: tuple
    horizon: float
    step: float
    n_paths: int
    nu_max: int
    seed: int
    theta: float
    delta: float
    eta_ball: Optional[float]
    rho: Optional[PowerGain]
    grid_points: int

    def to_dict(self) -> dict:
        out = {"x0": list(self.x0), "horizon": self.horizon, "step": self.step,
               "n_paths": self.n_paths, "nu_max": self.nu_max, "seed": self.seed,
               "theta": self.theta, "delta": self.delta, "grid_points": self.grid_points}
        if self.eta_ball is not None:
            out["eta_ball"] = self.eta_ball
        if self.rho is not None:
            out["rho"] = self.rho.to_dict()
        return out


@dataclass(frozen=True)
class ControllerBlock:
    kind: str
    theta: Optional[float] = None
    K: Optional[tuple] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.theta is not None:
            out["theta"] = self.theta
        if self.K is not None:
            out["K"] = [list(row) for row in self.K]
        return out


@dataclass(frozen=True)
class OutputsBlock:
    dir: str
    trajectories: int

    def to_dict(self) -> dict:
        return {"dir": self.dir, "trajectories": self.trajectories}


def _parse_system(obj, path="system") -> SystemBlock:
    d = _expect_mapping(obj, path)
    _check_keys(d, path, ("kind", "A", "B"), ("G",))
    kind = d["kind"]
    if kind != "linear":
        raise ConfigError(f"{path}.kind", f"unsupported system kind {kind!r}")
    A = _matrix_list(d["A"], f"{path}.A")
    B = _matrix_list(d["B"], f"{path}.B")
    G = _matrix_list(d["G"], f"{path}.G") if "G" in d else None
    n = A[0].shape[0]
    for i, m in enumerate(A):
        if m.shape != (n, n):
            raise ConfigError(f"{path}.A[{i}]", f"expected shape ({n}, {n}), got {m.shape}")
    if len(B) != len(A):
        raise ConfigError(f"{path}.B", f"expected {len(A)} matrices, got {len(B)}")
    for i, m in enumerate(B):
        if m.shape[0] != n:
            raise ConfigError(f"{path}.B[{i}]", f"row count {m.shape[0]} != state dim {n}")
    if G is not None:
        if len(G) != len(A):
            raise ConfigError(f"{path}.G", f"expected {len(A)} matrices, got {len(G)}")
        for i, m in enumerate(G):
            if m.shape[0] != n:
                raise ConfigError(f"{path}.G[{i}]", f"row count {m.shape[0]} != state dim {n}")
    return SystemBlock(kind=kind, A=A, B=B, G=G)


def _parse_lyapunov(obj, n_modes: int, state_dim: int, path="lyapunov") -> LyapunovBlock:
    d = _expect_mapping(obj, path)
    _check_keys(d, path, ("P", "rates", "chi"),
                ("mu", "alpha1", "alpha2", "check_radius", "check_points", "d_magnitudes"))
    P = _matrix_list(d["P"], f"{path}.P")
    if len(P) != n_modes:
        raise ConfigError(f"{path}.P", f"expected {n_modes} matrices, got {len(P)}")
    for i, m in enumerate(P):
        if m.shape != (state_dim, state_dim):
            raise ConfigError(f"{path}.P[{i}]", f"expected shape ({state_dim}, {state_dim}), got {m.shape}")
    rates = _vector(d["rates"], f"{path}.rates")
    if rates.size != n_modes:
        raise ConfigError(f"{path}.rates", f"expected {n_modes} entries, got {rates.size}")
    return LyapunovBlock(
        P=P,
        rates=tuple(float(r) for r in rates),
        chi=_gain(d["chi"], f"{path}.chi"),
        mu=_number(d, "mu", path),
        alpha1=_gain(d["alpha1"], f"{path}.alpha1") if "alpha1" in d else None,
        alpha2=_gain(d["alpha2"], f"{path}.alpha2") if "alpha2" in d else None,
        check_radius=_number(d, "check_radius", path, 5.0),
        check_points=_integer(d, "check_points", path, 1024),
        d_magnitudes=_integer(d, "d_magnitudes", path, 10),
    )


def _parse_switching(obj, n_modes: int, path="switching") -> SwitchingBlock:
    d = _expect_mapping(obj, path)
    kind = d.get("kind")
    if kind == "uh":
        _check_keys(d, path, ("kind", "T", "q"), ("sigma0",))
        q = _vector(d["q"], f"{path}.q")
        if q.size != n_modes:
            raise ConfigError(f"{path}.q", f"expected {n_modes} entries, got {q.size}")
        block = SwitchingBlock(kind=kind, T=_number(d, "T", path), q=tuple(float(x) for x in q),
                               sigma0=_integer(d, "sigma0", path))
    elif kind == "class-g":
        _check_keys(d, path, ("kind", "lambda_tilde", "lambda_bar"),
                    ("k0", "mode_kernel", "sigma0"))
        kernel = None
        if "mode_kernel" in d:
            k = _matrix(d["mode_kernel"], f"{path}.mode_kernel")
            if k.shape != (n_modes, n_modes):
                raise ConfigError(f"{path}.mode_kernel", f"expected shape ({n_modes}, {n_modes})")
            kernel = tuple(tuple(float(x) for x in row) for row in k)
        block = SwitchingBlock(kind=kind,
                               lambda_tilde=_number(d, "lambda_tilde", path),
                               lambda_bar=_number(d, "lambda_bar", path),
                               k0=_integer(d, "k0", path, 0),
                               mode_kernel=kernel,
                               sigma0=_integer(d, "sigma0", path))
    elif kind == "ctmc":
        _check_keys(d, path, ("kind", "Q"), ("sigma0",))
        Q = _matrix(d["Q"], f"{path}.Q")
        if Q.shape != (n_modes, n_modes):
            raise ConfigError(f"{path}.Q", f"expected shape ({n_modes}, {n_modes}), got {Q.shape}")
        block = SwitchingBlock(kind=kind, Q=tuple(tuple(float(x) for x in row) for row in Q),
                               sigma0=_integer(d, "sigma0", path))
    else:
        raise ConfigError(f"{path}.kind", f"expected one of 'uh', 'class-g', 'ctmc', got {kind!r}")
    if block.sigma0 is not None and not 0 <= block.sigma0 < n_modes:
        raise ConfigError(f"{path}.sigma0", f"mode index out of range 0..{n_modes - 1}")
    return block


def _parse_disturbance(obj, dist_dim: int, path="disturbance") -> DisturbanceBlock:
    d = _expect_mapping(obj, path)
    kind = d.get("kind")
    if kind == "zero":
        _check_keys(d, path, ("kind",))
        return DisturbanceBlock(kind=kind)
    if kind == "constant":
        _check_keys(d, path, ("kind", "value"))
        value = _vector(d["value"], f"{path}.value")
        if value.size != dist_dim:
            raise ConfigError(f"{path}.value", f"expected {dist_dim} entries, got {value.size}")
        return DisturbanceBlock(kind=kind, value=tuple(float(x) for x in value))
    if kind == "sinusoid":
        _check_keys(d, path, ("kind", "amplitude", "omega"), ("phase", "direction"))
        direction = None
        if "direction" in d:
            vec = _vector(d["direction"], f"{path}.direction")
            if vec.size != dist_dim:
                raise ConfigError(f"{path}.direction", f"expected {dist_dim} entries, got {vec.size}")
            direction = tuple(float(x) for x in vec)
        return DisturbanceBlock(kind=kind, amplitude=_number(d, "amplitude", path),
                                omega=_number(d, "omega", path),
                                phase=_number(d, "phase", path, 0.0),
                                direction=direction)
    if kind == "piecewise-constant-random":
        _check_keys(d, path, ("kind", "amplitude", "dwell"), ("seed",))
        return DisturbanceBlock(kind=kind, amplitude=_number(d, "amplitude", path),
                                dwell=_number(d, "dwell", path),
                                seed=_integer(d, "seed", path, 0))
    raise ConfigError(f"{path}.kind",
                      "expected one of 'zero', 'constant', 'sinusoid', "
                      f"'piecewise-constant-random', got {kind!r}")


def _parse_experiment(obj, state_dim: int, path="experiment") -> ExperimentBlock:
    d = _expect_mapping(obj, path)
    _check_keys(d, path, ("x0", "horizon", "step", "n_paths", "nu_max", "seed"),
                ("theta", "delta", "eta_ball", "rho", "grid_points"))
    x0 = _vector(d["x0"], f"{path}.x0")
    if x0.size != state_dim:
        raise ConfigError(f"{path}.x0", f"expected {state_dim} entries, got {x0.size}")
    block = ExperimentBlock(
        x0=tuple(float(x) for x in x0),
        horizon=_number(d, "horizon", path),
        step=_number(d, "step", path),
        n_paths=_integer(d, "n_paths", path),
        nu_max=_integer(d, "nu_max", path),
        seed=_integer(d, "seed", path),
        theta=_number(d, "theta", path, 1.5),
        delta=_number(d, "delta", path, 1.0),
        eta_ball=_number(d, "eta_ball", path),
        rho=_gain(d["rho"], f"{path}.rho") if "rho" in d else None,
        grid_points=_integer(d, "grid_points", path, 50),
    )
    if block.horizon <= 0 or block.step <= 0:
        raise ConfigError(f"{path}.horizon", "horizon and step must be positive")
    if block.n_paths < 1 or block.nu_max < 1:
        raise ConfigError(f"{path}.n_paths", "n_paths and nu_max must be >= 1")
    return block


def _parse_controller(obj, path="controller") -> ControllerBlock:
    d = _expect_mapping(obj, path)
    kind = d.get("kind")
    if kind == "universal":
        _check_keys(d, path, ("kind",), ("theta",))
        return ControllerBlock(kind=kind, theta=_number(d, "theta", path))
    if kind == "linear":
        _check_keys(d, path, ("kind", "K"))
        K = _matrix(d["K"], f"{path}.K")
        return ControllerBlock(kind=kind, K=tuple(tuple(float(x) for x in row) for row in K))
    raise ConfigError(f"{path}.kind", f"expected 'universal' or 'linear', got {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed, validated experiment document. Builders return domain objects."""

    system: SystemBlock
    lyapunov: LyapunovBlock
    switching: SwitchingBlock
    disturbance: DisturbanceBlock
    experiment: ExperimentBlock
    outputs: OutputsBlock
    controller: Optional[ControllerBlock] = None

    def to_dict(self) -> dict:
        out = {
            "system": self.system.to_dict(),
            "lyapunov": self.lyapunov.to_dict(),
            "switching": self.switching.to_dict(),
            "disturbance": self.disturbance.to_dict(),
            "experiment": self.experiment.to_dict(),
            "outputs": self.outputs.to_dict(),
        }
        if self.controller is not None:
            out["controller"] = self.controller.to_dict()
        return out

    def build_system(self) -> SwitchedSystem:
        return make_linear_system(self.system.A, self.system.B, self.system.G)

    def build_family(self) -> LyapunovFamily:
        blk = self.lyapunov
        return LyapunovFamily.quadratic(blk.P, blk.rates, blk.chi, mu=blk.mu,
                                        alpha1=blk.alpha1, alpha2=blk.alpha2)

    def build_switching(self):
        blk = self.switching
        if blk.kind == "uh":
            return UHParams(T=blk.T, q=np.asarray(blk.q))
        if blk.kind == "class-g":
            kernel = None if blk.mode_kernel is None else np.asarray(blk.mode_kernel)
            return ClassGParams(lambda_tilde=blk.lambda_tilde, lambda_bar=blk.lambda_bar,
                                n_modes=self.system.n_modes, k0=blk.k0, mode_kernel=kernel)
        return CTMCParams(Q=np.asarray(blk.Q))

    def build_disturbance(self) -> DisturbanceSignal:
        blk = self.disturbance
        dist_dim = self.system.B[0].shape[1]
        if blk.kind == "zero":
            return DisturbanceSignal.zero(dist_dim)
        if blk.kind == "constant":
            return DisturbanceSignal.constant(np.asarray(blk.value))
        if blk.kind == "sinusoid":
            direction = None if blk.direction is None else np.asarray(blk.direction)
            return DisturbanceSignal.sinusoid(blk.amplitude, blk.omega, phase=blk.phase,
                                              dim=dist_dim, direction=direction)
        return DisturbanceSignal.piecewise_constant_random(blk.amplitude, blk.dwell,
                                                           seed=blk.seed, dim=dist_dim)

    def build_batch_spec(self, seed: Optional[int] = None,
                         n_paths: Optional[int] = None) -> BatchSpec:
        exp = self.experiment
        return BatchSpec(
            n_paths=exp.n_paths if n_paths is None else int(n_paths),
            base_seed=exp.seed if seed is None else int(seed),
            nu_max=exp.nu_max,
            horizon=exp.horizon,
            step=exp.step,
        )

    def build_regime(self) -> Optional[RegimeSpec]:
        exp = self.experiment
        if exp.rho is None or exp.eta_ball is None:
            return None
        return RegimeSpec(rho=exp.rho, eta_ball=exp.eta_ball, delta=exp.delta)

    def build_grid(self) -> np.ndarray:
        exp = self.experiment
        return np.linspace(0.0, exp.horizon, exp.grid_points)


def loads_config(text: str) -> ExperimentConfig:
    """Parse an experiment document from a JSON string."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"not valid JSON: {exc}") from None
    raw = _expect_mapping(raw, "$")
    _check_keys(raw, "$", ("system", "lyapunov", "switching", "disturbance", "experiment"),
                ("outputs", "controller"))
    system = _parse_system(raw["system"])
    n_modes = system.n_modes
    state_dim = system.A[0].shape[0]
    dist_dim = system.B[0].shape[1]
    lyap = _parse_lyapunov(raw["lyapunov"], n_modes, state_dim)
    switching = _parse_switching(raw["switching"], n_modes)
    disturbance = _parse_disturbance(raw["disturbance"], dist_dim)
    experiment = _parse_experiment(raw["experiment"], state_dim)
    if "outputs" in raw:
        d = _expect_mapping(raw["outputs"], "outputs")
        _check_keys(d, "outputs", (), ("dir", "trajectories"))
        outputs = OutputsBlock(dir=str(d.get("dir", ".")),
                               trajectories=_integer(d, "trajectories", "outputs", 0))
    else:
        outputs = OutputsBlock(dir=".", trajectories=0)
    controller = _parse_controller(raw["controller"]) if "controller" in raw else None
    if controller is not None and system.G is None:
        raise ConfigError("controller", "controller block given but system has no G matrices")
    if controller is not None and controller.K is not None:
        K = np.asarray(controller.K)
        if K.shape != (system.G[0].shape[1], state_dim):
            raise ConfigError("controller.K",
                              f"expected shape ({system.G[0].shape[1]}, {state_dim}), got {K.shape}")
    return ExperimentConfig(system=system, lyapunov=lyap, switching=switching,
                            disturbance=disturbance, experiment=experiment,
                            outputs=outputs, controller=controller)


def load_config(path) -> ExperimentConfig:
    """Load and validate an experiment document from a JSON file."""
    return loads_config(Path(path).read_text())
