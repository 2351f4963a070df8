"""System models: comparison gains, disturbance signals, switched vector fields.

A switched system is a finite family of vector fields f_i(x, d), one per mode,
optionally with control channels g_i(x) entering additively. Two kinds are
supported: ``linear-affine`` (f_i(x, d) = A_i x + B_i d, control columns G_i)
and ``general-callable`` (user-supplied callables). All mode indices are
0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "PowerGain",
    "eval_gain",
    "DisturbanceSignal",
    "SwitchedSystem",
    "make_linear_system",
    "eval_field",
]


@dataclass(frozen=True)
class PowerGain:
    """Power-law comparison function ``r -> c * r**p`` on r >= 0.

    With c > 0 and p > 0 this is continuous, strictly increasing, zero at
    zero, and unbounded, and the family is closed under inversion and
    composition, which keeps every derived envelope in closed form.
    """

    c: float
    p: float

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError(f"coefficient must be positive and finite, got {self.c}")
        if not (self.p > 0 and np.isfinite(self.p)):
            raise ValueError(f"exponent must be positive and finite, got {self.p}")

    def __call__(self, r):
        return eval_gain(self, r)

    def inverse(self) -> "PowerGain":
        """Exact functional inverse: (c, p) -> (c**(-1/p), 1/p)."""
        return PowerGain(self.c ** (-1.0 / self.p), 1.0 / self.p)

    def to_dict(self) -> dict:
        return {"c": self.c, "p": self.p}


def eval_gain(g: PowerGain, r):
    """Evaluate a power gain at radius r (scalar or array), domain r >= 0."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0):
        raise ValueError("gain argument must be nonnegative")
    out = g.c * arr**g.p
    return float(out) if np.isscalar(r) or arr.ndim == 0 else out


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValueError("direction vector must be nonzero")
    return v / n


class DisturbanceSignal:
    """Deterministic disturbance signal d(t) with an exact known sup norm.

    Kinds: ``zero``, ``constant``, ``sinusoid`` (amplitude * sin(omega t +
    phase) along a unit direction), and ``piecewise-constant-random`` (on each
    dwell interval [j*dwell, (j+1)*dwell) the value is an independent uniform
    draw from the closed ball of the given radius, reproducible from the
    seed). ``sup_norm`` is exact by construction, never estimated.
    """

    def __init__(self, kind, dim, sup_norm, **params):
        self.kind = kind
        self.dim = int(dim)
        self.sup_norm = float(sup_norm)
        self.params = params
        if self.dim < 1:
            raise ValueError("disturbance dimension must be >= 1")
        if self.sup_norm < 0:
            raise ValueError("sup norm must be nonnegative")
        self._table = np.zeros((0, self.dim))  # piecewise value cache

    @classmethod
    def zero(cls, dim: int = 1) -> "DisturbanceSignal":
        return cls("zero", dim, 0.0)

    @classmethod
    def constant(cls, value) -> "DisturbanceSignal":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls("constant", v.size, np.linalg.norm(v), value=v)

    @classmethod
    def sinusoid(cls, amplitude, omega, phase=0.0, dim=1, direction=None) -> "DisturbanceSignal":
        if amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if direction is None:
            direction = np.eye(dim)[0]
        direction = _unit(np.asarray(direction, dtype=float))
        if direction.shape != (dim,):
            raise ValueError(f"direction must have shape ({dim},)")
        return cls(
            "sinusoid", dim, amplitude,
            amplitude=float(amplitude), omega=float(omega), phase=float(phase),
            direction=direction,
        )

    @classmethod
    def piecewise_constant_random(cls, amplitude, dwell, seed, dim=1) -> "DisturbanceSignal":
        if amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if dwell <= 0:
            raise ValueError("dwell must be positive")
        if int(seed) < 0:
            raise ValueError("seed must be nonnegative")
        return cls(
            "piecewise-constant-random", dim, amplitude,
            amplitude=float(amplitude), dwell=float(dwell), seed=int(seed),
        )

    def _piece_values(self, j_max: int) -> np.ndarray:
        # Each dwell interval gets its own child generator so values do not
        # depend on evaluation order.
        if j_max >= self._table.shape[0]:
            rows = [self._table]
            for j in range(self._table.shape[0], j_max + 1):
                rng = np.random.default_rng([self.params["seed"], j])
                vec = rng.standard_normal(self.dim)
                vec = _unit(vec) if np.linalg.norm(vec) > 0 else np.eye(self.dim)[0]
                radius = self.params["amplitude"] * rng.random() ** (1.0 / self.dim)
                rows.append((radius * vec)[None, :])
            self._table = np.concatenate(rows, axis=0)
        return self._table

    def eval(self, t: float) -> np.ndarray:
        """Value at a single time, shape (dim,)."""
        return self.eval_many(np.asarray([t], dtype=float))[0]

    def eval_many(self, ts) -> np.ndarray:
        """Vectorized evaluation; returns shape ts.shape + (dim,)."""
        ts = np.asarray(ts, dtype=float)
        if self.kind == "zero":
            return np.zeros(ts.shape + (self.dim,))
        if self.kind == "constant":
            return np.broadcast_to(self.params["value"], ts.shape + (self.dim,)).copy()
        if self.kind == "sinusoid":
            p = self.params
            s = p["amplitude"] * np.sin(p["omega"] * ts + p["phase"])
            return s[..., None] * p["direction"]
        # piecewise-constant-random
        j = np.floor_divide(np.maximum(ts, 0.0), self.params["dwell"]).astype(int)
        table = self._piece_values(int(j.max(initial=0)))
        return table[j]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        for key, val in self.params.items():
            out[key] = val.tolist() if isinstance(val, np.ndarray) else val
        return out


def _as_matrix_tuple(mats, shape_desc, n_modes) -> tuple:
    arrs = tuple(np.asarray(m, dtype=float) for m in mats)
    if len(arrs) != n_modes:
        raise ValueError(f"expected {n_modes} {shape_desc} matrices, got {len(arrs)}")
    return arrs


@dataclass(frozen=True)
class SwitchedSystem:
    """Finite family of disturbance-driven vector fields indexed by mode.

    ``mode_fields[i]`` is a callable (x, d) -> dx of shape (state_dim,);
    ``ctrl_fields[i]``, when present, is a callable x -> (state_dim, ctrl_dim)
    whose columns are the control channels of mode i. ``batch_field`` is an
    optional vectorized evaluator (modes, X, D) -> dX used by the Monte Carlo
    engine; it must agree with ``mode_fields`` pointwise.
    """

    n_modes: int
    state_dim: int
    dist_dim: int
    ctrl_dim: int
    kind: str
    mode_fields: tuple
    ctrl_fields: Optional[tuple] = None
    A: Optional[tuple] = None
    B: Optional[tuple] = None
    G: Optional[tuple] = None
    batch_field: Optional[Callable] = None

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.kind not in ("linear-affine", "general-callable"):
            raise ValueError(f"unknown system kind {self.kind!r}")
        if len(self.mode_fields) != self.n_modes:
            raise ValueError("one field per mode required")
        if self.kind == "general-callable":
            # Equilibrium at the origin is part of the contract; linear-affine
            # systems satisfy it structurally, callables are spot-checked.
            x0 = np.zeros(self.state_dim)
            d0 = np.zeros(self.dist_dim)
            for i, f in enumerate(self.mode_fields):
                out = np.asarray(f(x0, d0), dtype=float)
                if out.shape != (self.state_dim,):
                    raise ValueError(
                        f"mode {i} field returns shape {out.shape}, expected ({self.state_dim},)"
                    )
                if np.linalg.norm(out) > 1e-12:
                    raise ValueError(f"mode {i} field does not vanish at (0, 0)")

    def check_mode(self, i: int):
        if not (0 <= i < self.n_modes):
            raise ValueError(f"mode {i} out of range, valid modes are 0..{self.n_modes - 1}")


def make_linear_system(A: Sequence, B: Sequence, G: Optional[Sequence] = None) -> SwitchedSystem:
    """Build a linear-affine switched system f_i(x, d) = A_i x + B_i d.

    A: per-mode (n, n) state matrices. B: per-mode (n, k) disturbance input
    matrices. G (optional): per-mode (n, m) control input matrices.
    """
    n_modes = len(A)
    A = _as_matrix_tuple(A, "state", n_modes)
    n = A[0].shape[0]
    for i, Ai in enumerate(A):
        if Ai.shape != (n, n):
            raise ValueError(f"A[{i}] has shape {Ai.shape}, expected ({n}, {n})")
    B = _as_matrix_tuple(B, "disturbance", n_modes)
    k = B[0].shape[1] if B[0].ndim == 2 else 1
    B = tuple(b.reshape(n, -1) for b in B)
    for i, Bi in enumerate(B):
        if Bi.shape != (n, k):
            raise ValueError(f"B[{i}] has shape {Bi.shape}, expected ({n}, {k})")
    m = 0
    Gt = None
    if G is not None:
        Gt = _as_matrix_tuple(G, "control", n_modes)
        Gt = tuple(g.reshape(n, -1) for g in Gt)
        m = Gt[0].shape[1]
        for i, Gi in enumerate(Gt):
            if Gi.shape != (n, m):
                raise ValueError(f"G[{i}] has shape {Gi.shape}, expected ({n}, {m})")

    def field(Ai, Bi):
        return lambda x, d: Ai @ x + Bi @ d

    def ctrl(Gi):
        return lambda x: Gi

    A_stack = np.stack(A)
    B_stack = np.stack(B)

    def batch_field(modes, X, D):
        return np.einsum("mij,mj->mi", A_stack[modes], X) + np.einsum(
            "mij,mj->mi", B_stack[modes], D
        )

    return SwitchedSystem(
        n_modes=n_modes,
        state_dim=n,
        dist_dim=k,
        ctrl_dim=m,
        kind="linear-affine",
        mode_fields=tuple(field(Ai, Bi) for Ai, Bi in zip(A, B)),
        ctrl_fields=None if Gt is None else tuple(ctrl(Gi) for Gi in Gt),
        A=A,
        B=B,
        G=Gt,
        batch_field=batch_field,
    )


def eval_field(sys: SwitchedSystem, i: int, x, d, u=None) -> np.ndarray:
    """Evaluate dx = f_i(x, d) [+ g_i(x) u] with shape validation."""
    sys.check_mode(i)
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != (sys.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.state_dim},)")
    if d.shape != (sys.dist_dim,):
        raise ValueError(f"disturbance has shape {d.shape}, expected ({sys.dist_dim},)")
    out = np.asarray(sys.mode_fields[i](x, d), dtype=float)
    if u is not None:
        if sys.ctrl_fields is None:
            raise ValueError("system has no control channels")
        u = np.asarray(u, dtype=float)
        if u.shape != (sys.ctrl_dim,):
            raise ValueError(f"control has shape {u.shape}, expected ({sys.ctrl_dim},)")
        out = out + sys.ctrl_fields[i](x) @ u
    return out
