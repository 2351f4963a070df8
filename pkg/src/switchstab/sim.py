"""Fixed-step RK4 integration of switched systems along a switching path.

The integrator marches each inter-switch interval with the classical
fourth-order Runge-Kutta tableau at the requested step, shortening the final
partial step of each interval so that a dense sample lands exactly on every
switching instant (and on any extra requested sample times). The state is
continuous across switches; only the active vector field changes. The
disturbance is evaluated at the RK stage times, and a controller, when
present, is evaluated at each stage state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .model import DisturbanceSignal, SwitchedSystem
from .switching import SwitchingPath

__all__ = ["SwitchSample", "Trajectory", "BlowUpError", "integrate", "order_check"]


class BlowUpError(RuntimeError):
    """Raised when the state leaves the representable range mid-integration."""

    def __init__(self, t_last: float, x_last):
        self.t_last = t_last
        self.x_last = x_last
        super().__init__(f"state became non-finite after t = {t_last}")


class SwitchSample(NamedTuple):
    nu: int          # 1-based switch counter along the path
    time: float      # switching instant (exactly the path's jump time)
    state: np.ndarray
    mode: int        # mode entered at the instant (right continuous)
    index: int       # position of this instant in the dense sample arrays


@dataclass(frozen=True)
class Trajectory:
    """Dense RK4 samples plus exact samples at every switching instant."""

    times: np.ndarray
    states: np.ndarray
    switch_samples: tuple
    step: float
    path: SwitchingPath

    def state_at(self, t: float) -> np.ndarray:
        """State at a sample time; raises if no dense sample lands on t."""
        idx = int(np.searchsorted(self.times, t))
        for k in (idx - 1, idx, idx + 1):
            if 0 <= k < self.times.size and math.isclose(self.times[k], t, rel_tol=1e-12, abs_tol=1e-12):
                return self.states[k]
        raise ValueError(f"no dense sample at t = {t}; samples are spaced by <= {self.step}")

    def modes(self) -> np.ndarray:
        """Active mode at each dense sample time (right continuous)."""
        idx = np.searchsorted(self.path.jump_times, self.times, side="right")
        all_modes = np.concatenate(([self.path.sigma0], self.path.modes)).astype(int)
        return all_modes[idx]

    def to_csv_rows(self):
        n = self.states.shape[1]
        yield ["t", "mode"] + [f"x_{i + 1}" for i in range(n)] + ["is_switch"]
        switch_idx = {s.index for s in self.switch_samples}
        modes = self.modes()
        for i in range(self.times.size):
            yield (
                [format(self.times[i], ".17g"), int(modes[i])]
                + [format(v, ".17g") for v in self.states[i]]
                + [1 if i in switch_idx else 0]
            )


def _next_landing(seg_start: float, j: int, step: float, seg_end: float) -> float:
    """Landing time of sub-step j within [seg_start, seg_end], snapped to the end."""
    t = seg_start + (j + 1) * step
    if t >= seg_end - 1e-12 * max(1.0, abs(seg_end)):
        return seg_end
    return t


def _rk4_step(f: Callable, t: float, x: np.ndarray, h: float, d: DisturbanceSignal) -> np.ndarray:
    d1 = d.eval(t)
    d2 = d.eval(t + 0.5 * h)
    d4 = d.eval(t + h)
    k1 = f(x, d1)
    k2 = f(x + 0.5 * h * k1, d2)
    k3 = f(x + 0.5 * h * k2, d2)
    k4 = f(x + h * k3, d4)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    sys: SwitchedSystem,
    path: SwitchingPath,
    d: DisturbanceSignal,
    x0,
    step: float,
    controller=None,
    extra_sample_times=None,
) -> Trajectory:
    """Integrate the switched system along one switching path.

    ``controller`` is any callable (mode, x) -> u; it is folded into the
    per-mode fields exactly as ``synthesis.assemble_closed_loop`` does, so the
    two routes produce bitwise-identical trajectories. ``extra_sample_times``
    forces dense samples at the given interior times (the sub-step grid
    restarts there, same as at a switch).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (sys.state_dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({sys.state_dim},)")
    if d.dim != sys.dist_dim:
        raise ValueError(f"disturbance dim {d.dim} != system dist_dim {sys.dist_dim}")
    if path.modes.size and (path.modes.max() >= sys.n_modes or path.sigma0 >= sys.n_modes):
        raise ValueError("path uses modes outside the system's range")

    fields = sys.mode_fields
    if controller is not None:
        if sys.ctrl_fields is None:
            raise ValueError("system has no control channels to apply a controller")

        def closed(i):
            f, g = sys.mode_fields[i], sys.ctrl_fields[i]
            return lambda xx, dd: f(xx, dd) + g(xx) @ np.asarray(controller(i, xx), dtype=float)

        fields = tuple(closed(i) for i in range(sys.n_modes))

    horizon = path.horizon
    jumps = path.jump_times
    extras = np.asarray([] if extra_sample_times is None else extra_sample_times, dtype=float)
    extras = extras[(extras > 0) & (extras < horizon)]
    boundaries = np.unique(np.concatenate([jumps, extras, [horizon]]))

    times = [0.0]
    states = [x.copy()]
    switch_samples = []
    nu = 0
    t = 0.0
    for b in boundaries:
        f = fields[path.mode_at(t)]
        seg_start, j = t, 0
        while t < b:
            t_next = _next_landing(seg_start, j, step, b)
            x = _rk4_step(f, t, x, t_next - t, d)
            if not np.all(np.isfinite(x)):
                raise BlowUpError(t, states[-1])
            times.append(t_next)
            states.append(x.copy())
            t = t_next
            j += 1
        k = int(np.searchsorted(jumps, b))
        if k < jumps.size and jumps[k] == b:
            nu += 1
            switch_samples.append(SwitchSample(nu, float(b), x.copy(), int(path.modes[k]), len(times) - 1))
    return Trajectory(
        times=np.asarray(times),
        states=np.vstack(states),
        switch_samples=tuple(switch_samples),
        step=float(step),
        path=path,
    )


def order_check(sys, x0, t_end: float, exact: Callable, step: float, d=None, mode: int = 0) -> float:
    """Observed convergence order from a step-halving pair against a closed form.

    Integrates a switch-free path in the given mode at ``step`` and
    ``step / 2``, compares terminal states to ``exact(t_end)``, and returns
    log2 of the error ratio (close to 4 for smooth fields).
    """
    if d is None:
        d = DisturbanceSignal.zero(sys.dist_dim)
    path = SwitchingPath(np.asarray([]), np.asarray([], dtype=int), mode, float(t_end))
    ref = np.asarray(exact(t_end), dtype=float)
    errs = []
    for h in (step, step / 2.0):
        traj = integrate(sys, path, d, x0, h)
        errs.append(float(np.linalg.norm(traj.states[-1] - ref)))
    if errs[1] == 0:
        raise ValueError("refined error is exactly zero; closed form too simple for an order check")
    return math.log2(errs[0] / errs[1])
