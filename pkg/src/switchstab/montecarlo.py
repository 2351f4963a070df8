"""Monte Carlo verification of switching-instant expectation bounds.

``run_batch`` simulates M trajectories under i.i.d. switching paths (per-path
seeds ``base_seed + index``) and records state, mode, and V at the first
``nu_max`` switching instants, optionally also V on a shared time grid and
per-path excursion records for regime-conditioned estimates. Downstream ops
compare sample means (with one-sided 3-standard-error acceptance) against the
certified bounds: Monte Carlo can refute a bound at confidence, never prove
it.

For systems carrying a vectorized field evaluator (all linear-affine systems,
and closed loops assembled from them) the engine marches all paths at once
with the same RK4 tableau and landing rule as ``sim.integrate``; other
systems fall back to per-path integration. Either way results are bitwise
reproducible for a fixed BatchSpec.
"""

from __future__ import annotations

import bisect
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certify import CertificateReport, phi0, uh_bound
from .lyapunov import LyapunovFamily, eval_V, eval_V_batch
from .model import DisturbanceSignal, PowerGain, SwitchedSystem
from .sim import BlowUpError, Trajectory, _next_landing, integrate
from .switching import ClassGParams, CTMCParams, SwitchingPath, UHParams, sample_class_g_path, sample_ctmc_path, sample_uh_path

__all__ = [
    "BatchSpec",
    "RegimeSpec",
    "BatchResult",
    "run_batch",
    "IssVerdict",
    "verify_iss_l1",
    "audit_iterated_inequality",
    "audit_batch",
    "ExcursionRecord",
    "detect_excursions",
    "EnvelopeCheck",
    "verify_class_g_envelope",
    "BoundednessCheck",
    "markov_boundedness",
]

_PRE, _IN, _OUT = 0, 1, 2


@dataclass(frozen=True)
class BatchSpec:
    """Size, seeding, and resolution of one Monte Carlo batch."""

    n_paths: int
    base_seed: int
    nu_max: int
    horizon: float
    step: float

    def __post_init__(self):
        if self.n_paths < 1 or self.nu_max < 1:
            raise ValueError("n_paths and nu_max must be >= 1")
        if self.horizon <= 0 or self.step <= 0:
            raise ValueError("horizon and step must be positive")


@dataclass(frozen=True)
class RegimeSpec:
    """Thresholds for excursion tracking: entry ball radius rho(d_sup) and
    exit radius eta_ball * rho(d_sup), plus the envelope split parameter."""

    rho: PowerGain
    eta_ball: float
    delta: float = 1.0

    def __post_init__(self):
        if self.eta_ball <= 1.0:
            raise ValueError("eta_ball must exceed 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def validate_separation(self, alpha1: PowerGain, alpha2: PowerGain, d_sup: float):
        """The exit ball must dominate the entry ball in Lyapunov level:
        alpha1(eta_ball * rho(d_sup)) > 2 * alpha2(rho(d_sup))."""
        if d_sup <= 0:
            return
        r = self.rho(d_sup)
        if not alpha1(self.eta_ball * r) > 2.0 * alpha2(r):
            raise ValueError(
                "eta_ball too small: alpha1(eta_ball * rho(d_sup)) must exceed "
                "2 * alpha2(rho(d_sup))"
            )


class _RegimeTracker:
    """Per-path excursion state machine fed with dense samples in time order.

    Entry: the norm first reaches rho(d_sup) (inclusive). Exit: after an
    entry, the norm reaches eta_ball * rho(d_sup). Re-entries and re-exits
    alternate strictly.
    """

    def __init__(self, n_paths: int, enter_radius: float, exit_radius: float):
        self.enter_radius = enter_radius
        self.exit_radius = exit_radius
        self.state = np.full(n_paths, _PRE, dtype=np.int8)
        self.entry_times = [[] for _ in range(n_paths)]
        self.exit_times = [[] for _ in range(n_paths)]

    def update(self, t, norms: np.ndarray, active: np.ndarray):
        tv = np.broadcast_to(np.asarray(t, dtype=float), norms.shape)
        entering = active & (self.state != _IN) & (norms <= self.enter_radius)
        self.state[entering] = _IN
        for m in np.nonzero(entering)[0]:
            self.entry_times[m].append(float(tv[m]))
        exiting = active & (self.state == _IN) & (norms >= self.exit_radius) & ~entering
        self.state[exiting] = _OUT
        for m in np.nonzero(exiting)[0]:
            self.exit_times[m].append(float(tv[m]))

    @property
    def pre_indicator(self) -> np.ndarray:
        return self.state == _PRE

    @property
    def post_indicator(self) -> np.ndarray:
        return self.state == _OUT


@dataclass(frozen=True)
class ExcursionRecord:
    """Alternating entry/exit times of one trajectory through the two balls.

    ``entry_times[j]`` is when the state (re-)enters the rho(d_sup) ball,
    ``exit_times[j]`` when it subsequently leaves the eta_ball * rho(d_sup)
    ball; either list may be shorter or empty. Strict interleaving
    entry < exit < next entry is validated.
    """

    entry_times: tuple
    exit_times: tuple
    rho: PowerGain
    eta_ball: float
    delta: float
    d_sup: float

    def __post_init__(self):
        ne, nx = len(self.entry_times), len(self.exit_times)
        if not (ne == nx or ne == nx + 1):
            raise ValueError("entries and exits must alternate starting with an entry")
        merged = []
        for j in range(ne):
            merged.append(self.entry_times[j])
            if j < nx:
                merged.append(self.exit_times[j])
        if any(b <= a for a, b in zip(merged, merged[1:])):
            raise ValueError("excursion times must strictly interleave")

    def pre_entry(self, t: float) -> bool:
        """True while the state has never reached the entry ball: t < first entry."""
        return len(self.entry_times) == 0 or t < self.entry_times[0]

    def post_exit(self, t: float) -> bool:
        """True on the post-exit regime [exit_j, entry_{j+1})."""
        ne = bisect.bisect_right(self.entry_times, t)
        nx = bisect.bisect_right(self.exit_times, t)
        return nx >= 1 and ne == nx


def detect_excursions(traj: Trajectory, rho: PowerGain, d_sup: float, eta_ball: float,
                      delta: float = 1.0,
                      alpha1: Optional[PowerGain] = None,
                      alpha2: Optional[PowerGain] = None) -> ExcursionRecord:
    """Scan a trajectory's dense samples for entry/exit times of the two balls.

    Thresholds are constants rho(d_sup) (entry, inclusive) and
    eta_ball * rho(d_sup) (exit). With d_sup = 0 both balls degenerate to the
    origin and the record is typically empty. When the sandwich gains are
    supplied, the level-separation inequality for eta_ball is validated.
    """
    regime = RegimeSpec(rho=rho, eta_ball=eta_ball, delta=delta)
    if alpha1 is not None and alpha2 is not None:
        regime.validate_separation(alpha1, alpha2, d_sup)
    r = rho(d_sup) if d_sup > 0 else 0.0
    tracker = _RegimeTracker(1, r, eta_ball * r)
    active = np.ones(1, dtype=bool)
    for i in range(traj.times.size):
        tracker.update(np.asarray([traj.times[i]]), np.asarray([np.linalg.norm(traj.states[i])]), active)
    return ExcursionRecord(
        entry_times=tuple(tracker.entry_times[0]),
        exit_times=tuple(tracker.exit_times[0]),
        rho=rho, eta_ball=float(eta_ball), delta=float(delta), d_sup=float(d_sup),
    )


@dataclass
class BatchResult:
    """Per-path switching-instant records plus optional grid/regime data.

    Columns nu = 1..nu_max: ``taus[m, nu-1]`` is the nu-th switching instant
    of path m (NaN when the path has fewer switches within the horizon),
    ``states``/``modes``/``V`` the state, post-switch mode, and
    V_{mode}(state) there, ``valid`` the availability mask. ``sigma0`` holds
    each path's initial mode.
    """

    spec: BatchSpec
    sys: SwitchedSystem
    params: object
    d: DisturbanceSignal
    fam: LyapunovFamily
    x0: np.ndarray
    sigma0: np.ndarray
    taus: np.ndarray
    states: np.ndarray
    modes: np.ndarray
    V: np.ndarray
    valid: np.ndarray
    coverage: np.ndarray
    coverage_ok: bool
    grid: Optional[np.ndarray] = None
    grid_V: Optional[np.ndarray] = None
    grid_modes: Optional[np.ndarray] = None
    pre_indicator: Optional[np.ndarray] = None
    post_indicator: Optional[np.ndarray] = None
    regime: Optional[RegimeSpec] = None
    excursions: Optional[list] = None


def _sample_paths(params, sigma0, spec: BatchSpec):
    if isinstance(params, UHParams):
        return [sample_uh_path(params, sigma0, spec.horizon, spec.base_seed + m)
                for m in range(spec.n_paths)]
    init = 0 if sigma0 is None else int(sigma0)
    if isinstance(params, ClassGParams):
        return [sample_class_g_path(params, init, spec.horizon, spec.base_seed + m)
                for m in range(spec.n_paths)]
    if isinstance(params, CTMCParams):
        return [sample_ctmc_path(params, init, spec.horizon, spec.base_seed + m)
                for m in range(spec.n_paths)]
    raise TypeError(f"unsupported switching parameter type {type(params).__name__}")


def _event_schedule(path: SwitchingPath, grid: Optional[np.ndarray]):
    """Merged, tagged event times for one path: jumps, grid landings, horizon."""
    jt = path.jump_times
    pieces = [jt, np.asarray([path.horizon])]
    if grid is not None:
        pieces.append(grid[(grid > 0) & (grid <= path.horizon)])
    times = np.unique(np.concatenate(pieces))
    is_jump = np.isin(times, jt)
    if jt.size:
        jump_pos = np.minimum(np.searchsorted(jt, times), jt.size - 1)
        mode_after = np.where(is_jump, path.modes[jump_pos], -1)
    else:
        mode_after = np.full(times.size, -1)
    if grid is not None:
        is_grid = np.isin(times, grid)
        grid_idx = np.searchsorted(grid, times)
    else:
        is_grid = np.zeros(times.size, dtype=bool)
        grid_idx = np.zeros(times.size, dtype=int)
    return times, is_jump, mode_after.astype(int), is_grid, grid_idx


def _pad(arrs, fill, dtype):
    width = max(a.size for a in arrs)
    out = np.full((len(arrs), width), fill, dtype=dtype)
    for i, a in enumerate(arrs):
        out[i, : a.size] = a
    return out


def _engine_batch(sys, paths, d, fam, x0, spec, grid, regime, d_sup):
    """Vectorized RK4 across paths; same tableau and landing rule as sim.integrate."""
    M = len(paths)
    n = sys.state_dim
    nu_max = spec.nu_max
    step = spec.step

    schedules = [_event_schedule(p, grid) for p in paths]
    ev_t = _pad([s[0] for s in schedules], np.inf, float)
    ev_jump = _pad([s[1] for s in schedules], False, bool)
    ev_mode = _pad([s[2] for s in schedules], -1, int)
    ev_grid = _pad([s[3] for s in schedules], False, bool)
    ev_gidx = _pad([s[4] for s in schedules], 0, int)
    n_events = np.asarray([s[0].size for s in schedules])

    X = np.tile(np.asarray(x0, dtype=float), (M, 1))
    t = np.zeros(M)
    mode = np.asarray([p.sigma0 for p in paths], dtype=int)
    ptr = np.zeros(M, dtype=int)
    seg_start = np.zeros(M)
    sub_j = np.zeros(M, dtype=int)
    nu_count = np.zeros(M, dtype=int)
    done = np.zeros(M, dtype=bool)
    rows = np.arange(M)

    taus = np.full((M, nu_max), np.nan)
    states = np.full((M, nu_max, n), np.nan)
    modes_rec = np.full((M, nu_max), -1, dtype=int)

    G = 0 if grid is None else grid.size
    grid_states = np.full((M, G, n), np.nan) if G else None
    grid_modes = np.full((M, G), -1, dtype=int) if G else None
    pre_ind = np.zeros((M, G), dtype=bool) if G else None
    post_ind = np.zeros((M, G), dtype=bool) if G else None

    tracker = None
    if regime is not None:
        r = regime.rho(d_sup) if d_sup > 0 else 0.0
        tracker = _RegimeTracker(M, r, regime.eta_ball * r)
        tracker.update(t, np.linalg.norm(X, axis=1), ~done)

    def record_grid(mask):
        cols = ev_gidx[rows[mask], ptr[mask]]
        grid_states[rows[mask], cols] = X[mask]
        grid_modes[rows[mask], cols] = mode[mask]
        if tracker is not None:
            pre_ind[rows[mask], cols] = tracker.pre_indicator[mask]
            post_ind[rows[mask], cols] = tracker.post_indicator[mask]

    if G and grid[0] == 0.0:
        grid_states[:, 0] = X
        grid_modes[:, 0] = mode
        if tracker is not None:
            pre_ind[:, 0] = tracker.pre_indicator
            post_ind[:, 0] = tracker.post_indicator

    batch_field = sys.batch_field
    while not done.all():
        active = ~done
        b = ev_t[rows, np.minimum(ptr, ev_t.shape[1] - 1)]
        target = seg_start + (sub_j + 1) * step
        finite_b = np.isfinite(b)
        thresh = np.where(finite_b, b - 1e-12 * np.maximum(1.0, np.where(finite_b, np.abs(b), 1.0)), np.inf)
        snap = target >= thresh
        t_next = np.where(snap, b, target)
        h = np.where(active, t_next - t, 0.0)

        d1 = d.eval_many(t)
        d2 = d.eval_many(t + 0.5 * h)
        d4 = d.eval_many(t + h)
        k1 = batch_field(mode, X, d1)
        k2 = batch_field(mode, X + 0.5 * h[:, None] * k1, d2)
        k3 = batch_field(mode, X + 0.5 * h[:, None] * k2, d2)
        k4 = batch_field(mode, X + h[:, None] * k3, d4)
        X_new = X + (h[:, None] / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        bad = active & ~np.all(np.isfinite(X_new), axis=1)
        if bad.any():
            m = int(np.nonzero(bad)[0][0])
            raise BlowUpError(float(t[m]), X[m].copy())

        X = np.where(active[:, None], X_new, X)
        t = np.where(active, t_next, t)
        sub_j = sub_j + active

        if tracker is not None:
            tracker.update(t, np.linalg.norm(X, axis=1), active)

        landed = active & snap
        if landed.any():
            jump_mask = landed & ev_jump[rows, np.minimum(ptr, ev_t.shape[1] - 1)]
            if jump_mask.any():
                mode = np.where(jump_mask, ev_mode[rows, np.minimum(ptr, ev_t.shape[1] - 1)], mode)
                nu_count = nu_count + jump_mask
                rec = jump_mask & (nu_count <= nu_max)
                if rec.any():
                    cols = nu_count[rec] - 1
                    taus[rows[rec], cols] = t[rec]
                    states[rows[rec], cols] = X[rec]
                    modes_rec[rows[rec], cols] = mode[rec]
            if G:
                gm = landed & ev_grid[rows, np.minimum(ptr, ev_t.shape[1] - 1)]
                if gm.any():
                    record_grid(gm)
            ptr = ptr + landed
            seg_start = np.where(landed, t, seg_start)
            sub_j = np.where(landed, 0, sub_j)
            done = done | (ptr >= n_events)

    return taus, states, modes_rec, grid_states, grid_modes, pre_ind, post_ind, tracker


def _fallback_batch(sys, paths, d, fam, x0, spec, grid, regime, d_sup):
    """Per-path reference integration for systems without a batched field."""
    M = len(paths)
    n = sys.state_dim
    nu_max = spec.nu_max
    taus = np.full((M, nu_max), np.nan)
    states = np.full((M, nu_max, n), np.nan)
    modes_rec = np.full((M, nu_max), -1, dtype=int)
    G = 0 if grid is None else grid.size
    grid_states = np.full((M, G, n), np.nan) if G else None
    grid_modes = np.full((M, G), -1, dtype=int) if G else None
    pre_ind = np.zeros((M, G), dtype=bool) if G else None
    post_ind = np.zeros((M, G), dtype=bool) if G else None
    excursions = [] if regime is not None else None

    for m, path in enumerate(paths):
        traj = integrate(sys, path, d, x0, spec.step, extra_sample_times=grid)
        for s in traj.switch_samples[:nu_max]:
            taus[m, s.nu - 1] = s.time
            states[m, s.nu - 1] = s.state
            modes_rec[m, s.nu - 1] = s.mode
        rec = None
        if regime is not None:
            rec = detect_excursions(traj, regime.rho, d_sup, regime.eta_ball, regime.delta)
            excursions.append(rec)
        for g in range(G):
            grid_states[m, g] = traj.state_at(grid[g])
            grid_modes[m, g] = path.mode_at(grid[g])
            if rec is not None:
                pre_ind[m, g] = rec.pre_entry(grid[g])
                post_ind[m, g] = rec.post_exit(grid[g])
    return taus, states, modes_rec, grid_states, grid_modes, pre_ind, post_ind, excursions


def run_batch(sys: SwitchedSystem, params, d: DisturbanceSignal, fam: LyapunovFamily,
              x0, spec: BatchSpec, sigma0=None, grid=None,
              regime: Optional[RegimeSpec] = None) -> BatchResult:
    """Simulate a batch and record switching-instant data (plus optional grid).

    ``sigma0=None`` draws the initial mode per path from q for uniform-holding
    switching (part of its definition) and pins mode 0 for the other kinds.
    ``grid`` requests dense V samples at shared times; ``regime`` additionally
    tracks per-path excursion indicators for regime-conditioned estimates.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.state_dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({sys.state_dim},)")
    if d.dim != sys.dist_dim:
        raise ValueError(f"disturbance dim {d.dim} != system dist_dim {sys.dist_dim}")
    if fam.n_modes != sys.n_modes:
        raise ValueError("family and system disagree on the number of modes")
    if grid is not None:
        grid = np.unique(np.asarray(grid, dtype=float))
        if grid.size and (grid[0] < 0 or grid[-1] > spec.horizon):
            raise ValueError("grid times must lie in [0, horizon]")
    d_sup = d.sup_norm
    if regime is not None:
        regime.validate_separation(fam.alpha1, fam.alpha2, d_sup)

    paths = _sample_paths(params, sigma0, spec)
    excursions = None
    if sys.batch_field is not None:
        taus, states, modes_rec, gs, gm, pre, post, tracker = _engine_batch(
            sys, paths, d, fam, x0, spec, grid, regime, d_sup)
        if tracker is not None:
            excursions = [
                ExcursionRecord(tuple(tracker.entry_times[m]), tuple(tracker.exit_times[m]),
                                regime.rho, regime.eta_ball, regime.delta, d_sup)
                for m in range(len(paths))
            ]
    else:
        taus, states, modes_rec, gs, gm, pre, post, excursions = _fallback_batch(
            sys, paths, d, fam, x0, spec, grid, regime, d_sup)

    valid = ~np.isnan(taus)
    V = np.full(taus.shape, np.nan)
    flat = np.nonzero(valid)
    if flat[0].size:
        V[flat] = eval_V_batch(fam, modes_rec[flat], states[flat])
    coverage = valid.mean(axis=0)
    coverage_ok = bool(coverage[-1] >= 0.99)
    if not coverage_ok:
        warnings.warn(
            f"only {coverage[-1]:.1%} of paths reach nu_max = {spec.nu_max} switches "
            "within the horizon; deep-nu estimates are conditioned on that subset",
            stacklevel=2,
        )
    grid_V = None
    if gs is not None and grid is not None and grid.size:
        grid_V = eval_V_batch(
            fam, gm.reshape(-1), gs.reshape(-1, sys.state_dim)
        ).reshape(gs.shape[:2])
    return BatchResult(
        spec=spec, sys=sys, params=params, d=d, fam=fam, x0=x0,
        sigma0=np.asarray([p.sigma0 for p in paths], dtype=int),
        taus=taus, states=states, modes=modes_rec, V=V, valid=valid,
        coverage=coverage, coverage_ok=coverage_ok,
        grid=grid, grid_V=grid_V, grid_modes=gm,
        pre_indicator=pre, post_indicator=post,
        regime=regime, excursions=excursions,
    )


def _mean_se(values: np.ndarray):
    count = values.size
    if count == 0:
        return np.nan, np.nan, 0
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(count)) if count > 1 else np.inf
    return mean, se, count


@dataclass
class IssVerdict:
    """Per-switch-index comparison of sample means against the certified bound.

    A row passes one-sidedly: estimate - 3 SE <= bound (plainly estimate <=
    bound is the expected picture). Both E[V] and E[alpha1(|x|)] are tested;
    the latter is the quantity the stability notion speaks about.
    """

    nu: np.ndarray
    mean_V: np.ndarray
    se_V: np.ndarray
    bound: np.ndarray
    row_pass: np.ndarray
    mean_alpha1: np.ndarray
    se_alpha1: np.ndarray
    counts: np.ndarray
    passed: bool

    def to_csv_rows(self):
        yield ["nu", "mean_V", "se_V", "bound", "pass", "mean_alpha1", "se_alpha1"]
        for i in range(self.nu.size):
            yield [
                int(self.nu[i]),
                format(self.mean_V[i], ".17g"),
                format(self.se_V[i], ".17g"),
                format(self.bound[i], ".17g"),
                int(self.row_pass[i]),
                format(self.mean_alpha1[i], ".17g"),
                format(self.se_alpha1[i], ".17g"),
            ]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "rows": [
                {
                    "nu": int(self.nu[i]),
                    "mean_V": float(self.mean_V[i]),
                    "se_V": float(self.se_V[i]),
                    "bound": float(self.bound[i]),
                    "pass": bool(self.row_pass[i]),
                    "mean_alpha1": float(self.mean_alpha1[i]),
                    "se_alpha1": float(self.se_alpha1[i]),
                    "count": int(self.counts[i]),
                }
                for i in range(self.nu.size)
            ],
        }


def _isclose(a, b) -> bool:
    return bool(np.all(np.isclose(a, b, rtol=1e-12, atol=1e-12)))


def verify_iss_l1(batch: BatchResult, report: CertificateReport,
                  fam: LyapunovFamily, x0) -> IssVerdict:
    """Check E[V at the nu-th switch] and E[alpha1(|x|)] against the uh bound.

    Refuses a batch whose family or switching parameters differ from the ones
    echoed in the certificate report (stale-certificate guard).
    """
    if report.kind != "uh" or not report.passed:
        raise ValueError("need a passing uh certificate report")
    if not isinstance(batch.params, UHParams):
        raise ValueError("batch was not generated under uniform-holding switching")
    echo = report.inputs
    if not (
        _isclose(echo["mu"], batch.fam.mu)
        and _isclose(echo["rates"], list(batch.fam.rates))
        and _isclose(echo["q"], batch.params.q)
        and _isclose(echo["T"], batch.params.T)
    ):
        raise ValueError("certificate report does not match the batch inputs; refusing to verify")
    if not (_isclose(fam.mu, batch.fam.mu) and _isclose(list(fam.rates), list(batch.fam.rates))):
        raise ValueError("family mismatch between caller and batch")
    x0 = np.asarray(x0, dtype=float)
    if not _isclose(x0, batch.x0):
        raise ValueError("x0 mismatch between caller and batch")

    x0_norm = float(np.linalg.norm(x0))
    d_sup = batch.d.sup_norm
    nus = np.arange(1, batch.spec.nu_max + 1)
    mean_V = np.empty(nus.size)
    se_V = np.empty(nus.size)
    mean_a1 = np.empty(nus.size)
    se_a1 = np.empty(nus.size)
    bounds = np.empty(nus.size)
    row_pass = np.zeros(nus.size, dtype=bool)
    counts = np.zeros(nus.size, dtype=int)
    for i, nu in enumerate(nus):
        mask = batch.valid[:, i]
        vvals = batch.V[mask, i]
        norms = np.linalg.norm(batch.states[mask, i], axis=1)
        avals = fam.alpha1(norms) if norms.size else norms
        mean_V[i], se_V[i], counts[i] = _mean_se(vvals)
        mean_a1[i], se_a1[i], _ = _mean_se(avals)
        bounds[i] = uh_bound(fam, report, x0_norm, d_sup, int(nu))
        row_pass[i] = (
            counts[i] > 1
            and mean_V[i] - 3.0 * se_V[i] <= bounds[i]
            and mean_a1[i] - 3.0 * se_a1[i] <= bounds[i]
        )
    return IssVerdict(
        nu=nus, mean_V=mean_V, se_V=se_V, bound=bounds, row_pass=row_pass,
        mean_alpha1=mean_a1, se_alpha1=se_a1, counts=counts,
        passed=bool(row_pass.all()),
    )


def audit_iterated_inequality(traj: Trajectory, fam: LyapunovFamily, d_sup: float,
                              mu: Optional[float] = None) -> np.ndarray:
    """Per-interval residuals of the one-switch contraction inequality.

    For consecutive switching instants tau_i -> tau_{i+1} (tau_0 = 0) with
    holding time S and pre-switch mode sigma(tau_i):

        V_new <= mu * V_old * e^{-lambda S} + mu * chi(d_sup) * S * phi0(lambda S)

    Nonpositive residuals (up to integration slack) on every interval are the
    pathwise mechanism behind the switching-instant bound. Returns the
    residual array, one entry per switch.
    """
    mu = fam.mu if mu is None else float(mu)
    chi_d = fam.chi(d_sup)
    samples = traj.switch_samples
    res = np.empty(len(samples))
    t_prev = 0.0
    mode_prev = traj.path.sigma0
    v_prev = eval_V(fam, mode_prev, traj.states[0])
    for i, s in enumerate(samples):
        S = s.time - t_prev
        lam = fam.rates[mode_prev]
        v_new = eval_V(fam, s.mode, s.state)
        bound = mu * v_prev * np.exp(-lam * S) + mu * chi_d * S * float(phi0(lam * S))
        res[i] = v_new - bound
        t_prev, mode_prev, v_prev = s.time, s.mode, v_new
    return res


def audit_batch(batch: BatchResult, tol: float = 1e-7):
    """Vectorized audit of the one-switch inequality over a whole batch.

    Returns (max_residual, fraction_of_paths_passing, per_path_max). Uses the
    switching-instant records directly, so it audits nu = 1..nu_max on every
    path.
    """
    fam = batch.fam
    M = batch.spec.n_paths
    rates = np.asarray(fam.rates)
    chi_d = fam.chi(batch.d.sup_norm)
    v0 = eval_V_batch(fam, batch.sigma0, np.tile(batch.x0, (M, 1)))
    V_all = np.concatenate([v0[:, None], batch.V], axis=1)
    tau_all = np.concatenate([np.zeros((M, 1)), batch.taus], axis=1)
    mode_all = np.concatenate([batch.sigma0[:, None], batch.modes], axis=1)
    valid_all = np.concatenate([np.ones((M, 1), dtype=bool), batch.valid], axis=1)

    per_path_max = np.full(M, -np.inf)
    for i in range(batch.spec.nu_max):
        ok = valid_all[:, i] & valid_all[:, i + 1]
        if not ok.any():
            continue
        S = tau_all[ok, i + 1] - tau_all[ok, i]
        lam = rates[mode_all[ok, i]]
        bound = fam.mu * V_all[ok, i] * np.exp(-lam * S) + fam.mu * chi_d * S * phi0(lam * S)
        res = V_all[ok, i + 1] - bound
        per_path_max[ok] = np.maximum(per_path_max[ok], res)
    finite = np.isfinite(per_path_max)
    max_res = float(per_path_max[finite].max()) if finite.any() else -np.inf
    frac_ok = float((per_path_max[finite] <= tol).mean()) if finite.any() else 1.0
    return max_res, frac_ok, per_path_max


@dataclass
class EnvelopeCheck:
    """Regime-conditioned grid estimates against the slow-switching envelopes.

    Pre-entry: E[V 1{t < first entry}] <= alpha2(|x0|) e^{-decay_rate t}.
    Post-exit: E[V 1{t in a post-exit window}] <=
    (1 + 1/delta) alpha2(eta_ball rho(d_sup)), constant in t. Both one-sided
    at 3 SE.
    """

    grid: np.ndarray
    pre_estimate: np.ndarray
    pre_se: np.ndarray
    pre_envelope: np.ndarray
    pre_pass: np.ndarray
    post_estimate: np.ndarray
    post_se: np.ndarray
    post_envelope: np.ndarray
    post_pass: np.ndarray
    passed: bool

    def to_csv_rows(self, regime: str):
        est, se, env, ok = {
            "pre": (self.pre_estimate, self.pre_se, self.pre_envelope, self.pre_pass),
            "post": (self.post_estimate, self.post_se, self.post_envelope, self.post_pass),
        }[regime]
        yield ["t", "estimate", "se", "envelope", "pass"]
        for i in range(self.grid.size):
            yield [
                format(self.grid[i], ".17g"),
                format(est[i], ".17g"),
                format(se[i], ".17g"),
                format(env[i], ".17g"),
                int(ok[i]),
            ]


def verify_class_g_envelope(batch: BatchResult, fam: LyapunovFamily,
                            report: CertificateReport) -> EnvelopeCheck:
    """Grid check of both regime envelopes for Poisson-envelope switching."""
    if report.kind != "slow-switching" or not report.passed:
        raise ValueError("need a passing slow-switching certificate report")
    if batch.grid is None or batch.grid_V is None or batch.pre_indicator is None:
        raise ValueError("batch lacks grid/regime data; rerun run_batch with grid and regime")
    if not isinstance(batch.params, ClassGParams):
        raise ValueError("batch was not generated under class-g switching")
    echo = report.inputs
    if not (
        _isclose(echo["mu"], batch.fam.mu)
        and _isclose(echo["lambda_bar"], batch.params.lambda_bar)
        and _isclose(echo["lambda_tilde"], batch.params.lambda_tilde)
    ):
        raise ValueError("certificate report does not match the batch inputs; refusing to verify")

    lam = report.decay_rate
    x0_norm = float(np.linalg.norm(batch.x0))
    d_sup = batch.d.sup_norm
    regime = batch.regime
    grid = batch.grid
    pre_vals = batch.grid_V * batch.pre_indicator
    post_vals = batch.grid_V * batch.post_indicator

    pre_env = fam.alpha2(x0_norm) * np.exp(-lam * grid)
    post_env_const = (1.0 + 1.0 / regime.delta) * fam.alpha2(regime.eta_ball * regime.rho(d_sup))
    M = batch.spec.n_paths
    pre_est = pre_vals.mean(axis=0)
    pre_se = pre_vals.std(axis=0, ddof=1) / np.sqrt(M)
    post_est = post_vals.mean(axis=0)
    post_se = post_vals.std(axis=0, ddof=1) / np.sqrt(M)
    pre_pass = pre_est - 3.0 * pre_se <= pre_env
    post_env = np.full(grid.size, post_env_const)
    post_pass = post_est - 3.0 * post_se <= post_env
    return EnvelopeCheck(
        grid=grid,
        pre_estimate=pre_est, pre_se=pre_se, pre_envelope=pre_env, pre_pass=pre_pass,
        post_estimate=post_est, post_se=post_se, post_envelope=post_env, post_pass=post_pass,
        passed=bool(pre_pass.all() and post_pass.all()),
    )


@dataclass
class BoundednessCheck:
    """Grid estimate of E[V(sigma(t), x(t))] against a constant witness level."""

    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    bound: np.ndarray
    row_pass: np.ndarray
    passed: bool

    def to_csv_rows(self):
        yield ["t", "estimate", "se", "bound", "pass"]
        for i in range(self.grid.size):
            yield [
                format(self.grid[i], ".17g"),
                format(self.estimate[i], ".17g"),
                format(self.se[i], ".17g"),
                format(self.bound[i], ".17g"),
                int(self.row_pass[i]),
            ]


def markov_boundedness(batch: BatchResult, fam: LyapunovFamily, rho: PowerGain) -> BoundednessCheck:
    """Empirical boundedness witness for Markov switching:
    E[V(sigma(t), x(t))] <= max(alpha2(|x0|), alpha2(rho(d_sup))) + 3 SE."""
    if batch.grid is None or batch.grid_V is None:
        raise ValueError("batch lacks grid data; rerun run_batch with a grid")
    level = max(fam.alpha2(float(np.linalg.norm(batch.x0))), fam.alpha2(rho(batch.d.sup_norm)))
    M = batch.spec.n_paths
    est = batch.grid_V.mean(axis=0)
    se = batch.grid_V.std(axis=0, ddof=1) / np.sqrt(M)
    bound = np.full(batch.grid.size, level)
    ok = est - 3.0 * se <= bound
    return BoundednessCheck(grid=batch.grid, estimate=est, se=se, bound=bound,
                            row_pass=ok, passed=bool(ok.all()))
