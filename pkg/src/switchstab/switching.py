"""Random switching signals: path containers, samplers, envelope validation.

Three generators are provided, all producing right-continuous piecewise
constant mode signals on [0, horizon]:

* ``uh`` (uniform-holding): holding times are i.i.d. Uniform(0, T] and the
  modes at consecutive switching instants are i.i.d. draws from a fixed pmf q,
  independent of the holding times.
* ``class-g`` (Poisson-envelope): jump counts on any window of length s are
  dominated by e^{-lambda_tilde * s} (lambda_bar * s)^k / k!. The built-in
  generator is a homogeneous Poisson process at rate lambda_tilde with modes
  drawn from a row-stochastic kernel, which meets the envelope whenever
  lambda_bar >= lambda_tilde.
* ``ctmc``: continuous-time Markov chain with generator matrix Q, sampled via
  its jump chain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binom

__all__ = [
    "SwitchingPath",
    "ClassGParams",
    "UHParams",
    "CTMCParams",
    "sample_uh_path",
    "sample_class_g_path",
    "sample_ctmc_path",
    "count_jumps",
    "EnvelopeReport",
    "check_envelope",
]


@dataclass(frozen=True)
class SwitchingPath:
    """One realized switching signal.

    ``jump_times`` are the strictly increasing switching instants in
    (0, horizon]; ``modes[i]`` is the mode entered at ``jump_times[i]`` (the
    signal is right continuous), and ``sigma0`` is the mode on [0, tau_1).
    """

    jump_times: np.ndarray
    modes: np.ndarray
    sigma0: int
    horizon: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        md = np.asarray(self.modes, dtype=int)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "modes", md)
        if jt.ndim != 1 or md.shape != jt.shape:
            raise ValueError("jump_times and modes must be 1-d arrays of equal length")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0):
            raise ValueError("jump times must be strictly increasing and positive")
        if jt.size and jt[-1] > self.horizon:
            raise ValueError("jump times must lie within the horizon")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be a valid mode index")

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def holding_times(self) -> np.ndarray:
        """Durations between consecutive switching instants (tau_0 = 0)."""
        return np.diff(self.jump_times, prepend=0.0)

    def mode_at(self, t: float) -> int:
        """Mode active at time t (right continuous: jumps take effect at t)."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        idx = int(np.searchsorted(self.jump_times, t, side="right"))
        return int(self.sigma0) if idx == 0 else int(self.modes[idx - 1])


def count_jumps(path: SwitchingPath, t1: float, t2: float) -> int:
    """Number of switching instants in the half-open window (t1, t2]."""
    if t2 < t1:
        raise ValueError("window must satisfy t1 <= t2")
    jt = path.jump_times
    return int(np.searchsorted(jt, t2, side="right") - np.searchsorted(jt, t1, side="right"))


@dataclass(frozen=True)
class UHParams:
    """Uniform-holding switching: holding times Uniform(0, T], modes i.i.d. q."""

    T: float
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        if not self.T > 0:
            raise ValueError("holding-time upper bound T must be positive")
        if self.q.ndim != 1 or self.q.size < 1:
            raise ValueError("q must be a 1-d probability vector")
        if np.any(self.q < 0) or abs(float(self.q.sum()) - 1.0) > 1e-9:
            raise ValueError("q must be nonnegative and sum to 1")

    @property
    def n_modes(self) -> int:
        return int(self.q.size)


@dataclass(frozen=True)
class ClassGParams:
    """Poisson-envelope switching parameters.

    The envelope is e^{-lambda_tilde s}(lambda_bar s)^k / k!. ``k0`` is kept
    for interface compatibility with inhomogeneous envelopes; the built-in
    homogeneous generator ignores it (a warning is emitted when nonzero).
    ``mode_kernel`` is a row-stochastic matrix giving the distribution of the
    next mode given the current one; default uniform over modes.
    """

    lambda_bar: float
    lambda_tilde: float
    n_modes: int = 2
    k0: int = 0
    mode_kernel: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (self.lambda_bar > 0 and self.lambda_tilde > 0):
            raise ValueError("envelope rates must be positive")
        if self.n_modes < 1:
            raise ValueError("need at least one mode")
        if self.k0 != 0:
            warnings.warn(
                "k0 != 0 is stored but ignored by the built-in homogeneous generator",
                stacklevel=2,
            )
        kern = self.mode_kernel
        if kern is None:
            kern = np.full((self.n_modes, self.n_modes), 1.0 / self.n_modes)
        kern = np.asarray(kern, dtype=float)
        if kern.shape != (self.n_modes, self.n_modes):
            raise ValueError(f"mode_kernel must have shape ({self.n_modes}, {self.n_modes})")
        if np.any(kern < 0) or np.any(np.abs(kern.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("mode_kernel rows must be probability vectors")
        object.__setattr__(self, "mode_kernel", kern)


@dataclass(frozen=True)
class CTMCParams:
    """Continuous-time Markov chain generator matrix Q (rows sum to zero)."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        off = Q.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0):
            raise ValueError("off-diagonal entries of Q must be nonnegative")
        if np.any(np.abs(Q.sum(axis=1)) > 1e-9):
            raise ValueError("rows of Q must sum to zero")

    @property
    def n_modes(self) -> int:
        return int(self.Q.shape[0])


def _draw_mode(rng, pmf_cum) -> int:
    return int(np.searchsorted(pmf_cum, rng.random(), side="right"))


def sample_uh_path(params: UHParams, sigma0, horizon: float, seed) -> SwitchingPath:
    """Sample a uniform-holding path on [0, horizon].

    ``sigma0=None`` draws the initial mode from q (consumed first from the
    stream), making the full mode sequence including index 0 i.i.d.; passing an
    int pins it. Holding times use T * (1 - U) with U ~ [0, 1) so the value T
    is attainable and 0 is not.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    qcum = np.cumsum(params.q)
    if sigma0 is None:
        sigma0 = _draw_mode(rng, qcum)
    else:
        sigma0 = int(sigma0)
        if not (0 <= sigma0 < params.n_modes):
            raise ValueError(f"sigma0 {sigma0} out of range, valid modes are 0..{params.n_modes - 1}")
    times, modes = [], []
    t = 0.0
    while True:
        t += params.T * (1.0 - rng.random())
        if t > horizon:
            break
        times.append(t)
        modes.append(_draw_mode(rng, qcum))
    return SwitchingPath(np.asarray(times), np.asarray(modes, dtype=int), sigma0, float(horizon))


def sample_class_g_path(params: ClassGParams, sigma0: int, horizon: float, seed) -> SwitchingPath:
    """Sample from the built-in Poisson-envelope generator.

    Homogeneous Poisson arrivals at rate lambda_tilde, next mode drawn from
    the kernel row of the current mode. Requires lambda_bar >= lambda_tilde,
    otherwise the envelope would be violated and the request is rejected.
    """
    if params.lambda_bar < params.lambda_tilde:
        raise ValueError(
            "built-in generator requires lambda_bar >= lambda_tilde "
            f"(got {params.lambda_bar} < {params.lambda_tilde})"
        )
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sigma0 = int(sigma0)
    if not (0 <= sigma0 < params.n_modes):
        raise ValueError(f"sigma0 {sigma0} out of range, valid modes are 0..{params.n_modes - 1}")
    rng = np.random.default_rng(seed)
    kern_cum = np.cumsum(params.mode_kernel, axis=1)
    times, modes = [], []
    t = 0.0
    current = sigma0
    while True:
        t += rng.exponential(1.0 / params.lambda_tilde)
        if t > horizon:
            break
        current = _draw_mode(rng, kern_cum[current])
        times.append(t)
        modes.append(current)
    return SwitchingPath(np.asarray(times), np.asarray(modes, dtype=int), sigma0, float(horizon))


def sample_ctmc_path(params: CTMCParams, sigma0: int, horizon: float, seed) -> SwitchingPath:
    """Sample a CTMC path via the jump chain.

    In mode i the holding time is Exponential(-Q[i,i]) and the next mode is
    j != i with probability Q[i,j] / (-Q[i,i]); a zero diagonal entry makes
    the mode absorbing.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sigma0 = int(sigma0)
    if not (0 <= sigma0 < params.n_modes):
        raise ValueError(f"sigma0 {sigma0} out of range, valid modes are 0..{params.n_modes - 1}")
    rng = np.random.default_rng(seed)
    Q = params.Q
    times, modes = [], []
    t = 0.0
    current = sigma0
    while True:
        rate = -Q[current, current]
        if rate <= 0:
            break  # absorbing mode
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        probs = Q[current].copy()
        probs[current] = 0.0
        current = _draw_mode(rng, np.cumsum(probs / rate))
        times.append(t)
        modes.append(current)
    return SwitchingPath(np.asarray(times), np.asarray(modes, dtype=int), sigma0, float(horizon))


@dataclass
class EnvelopeReport:
    """Per-count comparison of empirical jump-count frequencies to the envelope.

    ``ucl_99`` is the largest empirical frequency consistent with the envelope
    at one-sided 99% confidence (the 0.99 binomial quantile under the envelope
    probability, divided by the number of paths); a row is a violation when
    the observed frequency exceeds it. Capped envelope values (>= 1) can never
    be violated.
    """

    s: float
    n_paths: int
    k: np.ndarray
    empirical_freq: np.ndarray
    ucl_99: np.ndarray
    envelope: np.ndarray
    violation: np.ndarray

    @property
    def n_violations(self) -> int:
        return int(self.violation.sum())

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def to_csv_rows(self):
        yield ["k", "empirical_freq", "ucl_99", "envelope", "violation"]
        for i in range(self.k.size):
            yield [
                int(self.k[i]),
                format(self.empirical_freq[i], ".17g"),
                format(self.ucl_99[i], ".17g"),
                format(self.envelope[i], ".17g"),
                int(self.violation[i]),
            ]


def _envelope_pmf(params: ClassGParams, s: float, k: np.ndarray) -> np.ndarray:
    log_env = -params.lambda_tilde * s + k * np.log(params.lambda_bar * s) - [
        float(np.sum(np.log(np.arange(1, kk + 1)))) for kk in k
    ]
    return np.exp(log_env)


def check_envelope(params: ClassGParams, s: float, k_max: int, n_paths: int, seed) -> EnvelopeReport:
    """Monte Carlo check of the jump-count envelope over windows [0, s].

    Samples ``n_paths`` paths from the built-in generator (per-path seeds
    seed + index), tabulates the frequency of exactly k jumps for each
    k <= k_max, and tests it against the envelope with a one-sided 99%
    binomial acceptance threshold per row.
    """
    if s <= 0:
        raise ValueError("window length s must be positive")
    if k_max < 0 or n_paths < 1:
        raise ValueError("k_max must be >= 0 and n_paths >= 1")
    counts = np.zeros(k_max + 1, dtype=int)
    for m in range(n_paths):
        path = sample_class_g_path(params, 0, s, seed + m)
        kk = count_jumps(path, 0.0, s)
        if kk <= k_max:
            counts[kk] += 1
    k = np.arange(k_max + 1)
    freq = counts / n_paths
    env = _envelope_pmf(params, s, k)
    env_capped = np.minimum(env, 1.0)
    ucl = binom.ppf(0.99, n_paths, env_capped) / n_paths
    violation = freq > ucl
    return EnvelopeReport(
        s=float(s), n_paths=int(n_paths), k=k, empirical_freq=freq,
        ucl_99=ucl, envelope=env, violation=violation,
    )
