"""Mode-indexed quadratic Lyapunov families and dissipation checks.

A family assigns each mode i a quadratic function V_i(x) = x' P_i x, a decay
rate lambda_i (any sign; negative rates mark modes whose V may grow), and
shares three power-law comparison gains: alpha1/alpha2 sandwiching every V_i
and a disturbance gain chi. The compatibility constant mu bounds
V_i(x) <= mu * V_j(x) for every ordered mode pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.stats import qmc

from .model import PowerGain, SwitchedSystem, eval_field

__all__ = [
    "LyapunovFamily",
    "eval_V",
    "grad_V",
    "eval_V_batch",
    "exact_mu",
    "DecrementReport",
    "check_decrement",
    "InfeasibleCertificate",
    "linear_rate_certificate",
    "sobol_ball",
]


class InfeasibleCertificate(ValueError):
    """No certificate with the requested properties exists for the input."""


def _check_spd(P: np.ndarray, name: str):
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} must be symmetric to 1e-12")
    if np.linalg.eigvalsh(P).min() <= 0:
        raise ValueError(f"{name} must be positive definite")


@dataclass(frozen=True)
class LyapunovFamily:
    """Quadratic candidate family with shared comparison gains.

    The sandwich alpha1(|x|) <= V_i(x) <= alpha2(|x|) holds globally by
    construction: both gains have exponent 2 and their coefficients bracket
    the extreme eigenvalues of the P_i.
    """

    P: tuple
    rates: tuple
    mu: float
    alpha1: PowerGain
    alpha2: PowerGain
    chi: PowerGain
    kind: str = "quadratic"

    def __post_init__(self):
        if self.kind != "quadratic":
            raise ValueError("only quadratic families are supported")
        if len(self.P) != len(self.rates) or len(self.P) < 1:
            raise ValueError("need one P matrix and one rate per mode")
        for i, Pi in enumerate(self.P):
            _check_spd(Pi, f"P[{i}]")
        if not all(np.isfinite(r) for r in self.rates):
            raise ValueError("rates must be finite reals")
        if self.mu < 1.0:
            raise ValueError("compatibility constant mu must be >= 1")
        worst = exact_mu(self)
        if worst > self.mu + 1e-12:
            raise ValueError(f"declared mu = {self.mu} below exact pairwise bound {worst}")
        lam_min = min(float(np.linalg.eigvalsh(Pi).min()) for Pi in self.P)
        lam_max = max(float(np.linalg.eigvalsh(Pi).max()) for Pi in self.P)
        if self.alpha1.p != 2.0 or self.alpha2.p != 2.0:
            raise ValueError("quadratic families need exponent-2 sandwich gains")
        if self.alpha1.c > lam_min + 1e-12:
            raise ValueError(f"alpha1 coefficient {self.alpha1.c} exceeds min eigenvalue {lam_min}")
        if self.alpha2.c < lam_max - 1e-12:
            raise ValueError(f"alpha2 coefficient {self.alpha2.c} below max eigenvalue {lam_max}")

    @property
    def n_modes(self) -> int:
        return len(self.P)

    @classmethod
    def quadratic(cls, P: Sequence, rates: Sequence, chi: PowerGain,
                  mu: Optional[float] = None,
                  alpha1: Optional[PowerGain] = None,
                  alpha2: Optional[PowerGain] = None) -> "LyapunovFamily":
        """Construct with mu and sandwich gains defaulted from eigenvalues."""
        Pt = tuple(np.asarray(Pi, dtype=float) for Pi in P)
        rt = tuple(float(r) for r in rates)
        for i, Pi in enumerate(Pt):
            _check_spd(Pi, f"P[{i}]")
        if alpha1 is None:
            alpha1 = PowerGain(min(float(np.linalg.eigvalsh(Pi).min()) for Pi in Pt), 2.0)
        if alpha2 is None:
            alpha2 = PowerGain(max(float(np.linalg.eigvalsh(Pi).max()) for Pi in Pt), 2.0)
        if mu is None:
            probe = cls.__new__(cls)
            object.__setattr__(probe, "P", Pt)
            mu = max(1.0, exact_mu(probe))
        return cls(P=Pt, rates=rt, mu=float(mu), alpha1=alpha1, alpha2=alpha2, chi=chi)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "P": [Pi.tolist() for Pi in self.P],
            "rates": list(self.rates),
            "mu": self.mu,
            "alpha1": self.alpha1.to_dict(),
            "alpha2": self.alpha2.to_dict(),
            "chi": self.chi.to_dict(),
        }


def _check_mode(fam: LyapunovFamily, i: int):
    if not (0 <= i < fam.n_modes):
        raise ValueError(f"mode {i} out of range, valid modes are 0..{fam.n_modes - 1}")


def eval_V(fam: LyapunovFamily, i: int, x) -> float:
    _check_mode(fam, i)
    x = np.asarray(x, dtype=float)
    return float(x @ fam.P[i] @ x)


def grad_V(fam: LyapunovFamily, i: int, x) -> np.ndarray:
    _check_mode(fam, i)
    x = np.asarray(x, dtype=float)
    return 2.0 * (fam.P[i] @ x)


def eval_V_batch(fam: LyapunovFamily, modes, X) -> np.ndarray:
    """V_{modes[m]}(X[m]) for stacked states X of shape (M, n)."""
    P_stack = np.stack(fam.P)[np.asarray(modes, dtype=int)]
    X = np.asarray(X, dtype=float)
    return np.einsum("mi,mij,mj->m", X, P_stack, X)


def exact_mu(fam) -> float:
    """Smallest valid compatibility constant: the largest generalized
    eigenvalue of (P_i, P_j) over ordered mode pairs (>= 1 always)."""
    worst = 1.0
    for i, Pi in enumerate(fam.P):
        for j, Pj in enumerate(fam.P):
            if i == j:
                continue
            worst = max(worst, float(eigh(Pi, Pj, eigvals_only=True)[-1]))
    return worst


@dataclass
class DecrementReport:
    """Worst-case residual of a per-mode dissipation inequality over a grid."""

    max_residual: float
    witness: Optional[tuple]   # (mode, x, d) attaining the max
    tol: float
    passed: bool
    n_points: int
    n_skipped: int = 0

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            mode, x, d = self.witness
            w = {"mode": int(mode), "x": np.asarray(x).tolist(), "d": np.asarray(d).tolist()}
        return {
            "max_residual": self.max_residual,
            "witness": w,
            "tol": self.tol,
            "passed": self.passed,
            "n_points": self.n_points,
            "n_skipped": self.n_skipped,
        }


def check_decrement(sys: SwitchedSystem, fam: LyapunovFamily, x_samples, d_samples,
                    tol: float = 1e-9) -> DecrementReport:
    """Grid falsification of grad V_i . f_i(x, d) <= -lambda_i V_i(x) + chi(|d|).

    Reports the largest residual grad.f + lambda V - chi over all modes and
    sample pairs, with the attaining witness. Passing means no sampled
    violation; it is evidence, not proof.
    """
    if fam.n_modes != sys.n_modes:
        raise ValueError("family and system disagree on the number of modes")
    worst = -np.inf
    witness = None
    n = 0
    for i in range(sys.n_modes):
        for x in x_samples:
            gv = grad_V(fam, i, x)
            vi = eval_V(fam, i, x)
            for d in d_samples:
                d = np.atleast_1d(np.asarray(d, dtype=float))
                res = float(gv @ eval_field(sys, i, x, d)) + fam.rates[i] * vi - fam.chi(
                    float(np.linalg.norm(d))
                )
                n += 1
                if res > worst:
                    worst, witness = res, (i, np.asarray(x, dtype=float), d)
    return DecrementReport(max_residual=worst, witness=witness, tol=tol,
                           passed=worst <= tol, n_points=n)


def linear_rate_certificate(A, B, P, split: float = 1.0, floor: Optional[float] = None):
    """Exact dissipation pair (lambda, c) for one linear mode and given P.

    Returns the largest lambda with x'(A'P + PA)x + 2 x'P B d <=
    -lambda x'Px + c |d|^2 for all x, d, where the cross term is split by
    Young's inequality with parameter ``split`` (c = split, and the quadratic
    form absorbs P B B'P / split). With B = 0 the pair is
    (-max gen. eigenvalue(A'P + PA, P), 0). ``floor`` turns "rate too small"
    into an explicit infeasibility error.
    """
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    _check_spd(P, "P")
    if split <= 0:
        raise ValueError("Young split parameter must be positive")
    M = A.T @ P + P @ A
    if np.any(B != 0.0):
        M = M + (P @ B @ B.T @ P) / split
        c = float(split)
    else:
        c = 0.0
    lam = -float(eigh(M, P, eigvals_only=True)[-1])
    if floor is not None and lam <= floor:
        raise InfeasibleCertificate(
            f"no decrement rate above the floor {floor}: best achievable is {lam}"
        )
    return lam, c


def sobol_ball(dim: int, n: int, radius: float, seed: int = 0) -> np.ndarray:
    """n low-discrepancy points covering the closed ball of the given radius.

    Sobol points in the cube are clipped onto the ball by dividing by
    max(1, |p|); corner mass lands on the sphere, which suits falsification
    grids that should probe the boundary.
    """
    if n < 1 or dim < 1 or radius <= 0:
        raise ValueError("need n >= 1, dim >= 1, radius > 0")
    m = max(1, int(np.ceil(np.log2(n))))
    pts = qmc.Sobol(d=dim, scramble=True, seed=seed).random_base2(m)[:n]
    p = 2.0 * pts - 1.0
    norms = np.linalg.norm(p, axis=1)
    return radius * p / np.maximum(1.0, norms)[:, None]
