"""Monte Carlo harness, moment validators and curve statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .algorithm import RunConfig, aggregate_v, run_algorithm
from .channel import ChannelDraw, Const, NoiseModel, Unit, effective_noise_sigma
from .errors import WindowError


@dataclass(frozen=True)
class Scenario:
    """Everything a single run needs except its seed."""

    ensemble: object
    config: RunConfig
    fading: object = Unit()
    noise: NoiseModel = NoiseModel(0.0)
    schedule: object = Const(1.0)
    algorithm: str = "gbma"
    fdm_energy: float = 1.0

    @property
    def N(self):
        return self.ensemble.n_nodes

    @property
    def d(self):
        return self.ensemble.dim

    @property
    def E_N(self):
        if self.algorithm == "fdm":
            return self.fdm_energy
        return self.schedule.energy(self.N)

    def run(self, seed=None):
        cfg = self.config
        if seed is not None:
            cfg = RunConfig(**{**cfg.__dict__, "seed": seed})
        return run_algorithm(self.algorithm, self.ensemble, cfg, self.fading, self.noise,
                             self.schedule, self.fdm_energy)


@dataclass(frozen=True)
class MonteCarloConfig:
    """``scenario`` is a Scenario, or a callable r -> Scenario when every
    replication draws its own problem instance."""

    reps: int
    base_seed: int
    scenario: object

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")

    def seed(self, r):
        return _rng.replication_seed(self.base_seed, r)

    def scenario_for(self, r):
        sc = self.scenario
        return sc if isinstance(sc, Scenario) else sc(r)


def _column_mean(mat):
    # exactly rounded sums make the mean independent of replication order
    return np.array([math.fsum(col) / len(col) for col in mat.T.tolist()])


def _column_se(mat, mean):
    n = mat.shape[0]
    if n < 2:
        return None
    out = []
    for col, m in zip(mat.T.tolist(), mean.tolist()):
        var = math.fsum((x - m) ** 2 for x in col) / (n - 1)
        out.append(math.sqrt(var / n))
    return np.array(out)


@dataclass
class CurveStats:
    """Per-iteration replication statistics.  ``*_se`` is None with one replication."""

    k: np.ndarray
    excess_mean: np.ndarray
    excess_se: np.ndarray | None
    excess_min: np.ndarray
    excess_max: np.ndarray
    r_sq_mean: np.ndarray
    r_sq_se: np.ndarray | None
    energy_cum_mean: np.ndarray
    energy_cum_se: np.ndarray | None
    grad_norm_sq_mean: np.ndarray
    reps: int
    n_diverged: int
    diverged: list = field(default_factory=list)
    excess_samples: np.ndarray | None = field(default=None, repr=False)
    energy_samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_completed(self):
        return self.reps - self.n_diverged

    def __len__(self):
        return len(self.k)


def curve_stats(traces, keep_samples=True):
    """Aggregate RunTraces (index = replication) into CurveStats."""
    ok = [t for t in traces if not t.diverged]
    diverged = [i for i, t in enumerate(traces) if t.diverged]
    if not traces:
        raise ValueError("no traces")
    n = max(len(t) for t in traces)
    if not ok:
        nan = np.full(n, np.nan)
        return CurveStats(np.arange(n), nan, None, nan, nan, nan, None, nan, None, nan,
                          len(traces), len(diverged), diverged)
    ex = np.array([t.excess_risk for t in ok])
    rs = np.array([t.r_sq for t in ok])
    en = np.array([t.energy_cum for t in ok])
    gn = np.array([t.grad_norm_sq for t in ok])
    ex_m, rs_m, en_m = _column_mean(ex), _column_mean(rs), _column_mean(en)
    return CurveStats(
        k=np.arange(ex.shape[1]),
        excess_mean=ex_m,
        excess_se=_column_se(ex, ex_m),
        excess_min=ex.min(axis=0),
        excess_max=ex.max(axis=0),
        r_sq_mean=rs_m,
        r_sq_se=_column_se(rs, rs_m),
        energy_cum_mean=en_m,
        energy_cum_se=_column_se(en, en_m),
        grad_norm_sq_mean=_column_mean(gn),
        reps=len(traces),
        n_diverged=len(diverged),
        diverged=diverged,
        excess_samples=ex if keep_samples else None,
        energy_samples=en if keep_samples else None,
    )


def mc_run(mc):
    """Run ``mc.reps`` independent replications and aggregate them.

    Replication r is seeded by a pure function of (base_seed, r); diverged
    replications are excluded from the means and listed in ``diverged``.
    """
    traces = [mc.scenario_for(r).run(mc.seed(r)) for r in range(mc.reps)]
    return curve_stats(traces)


# ---------------------------------------------------------------------------
# moment validators


@dataclass
class MomentReport:
    draws: int
    empirical: np.ndarray | float
    expected: np.ndarray | float
    stderr: np.ndarray | float
    z: np.ndarray | float
    rel_error: float | None
    passed: bool


def _v_samples(scenario, theta, draws, seed):
    N = scenario.N
    streams = _rng.Streams(seed)
    sigma = effective_noise_sigma(scenario.noise, scenario.schedule, N)
    out = np.empty((draws, scenario.d))
    for k in range(draws):
        # identical to draw_gains(fading, k, N, seed) followed by the NOISE stream of slot k
        draw = ChannelDraw(k, np.asarray(scenario.fading.sample(streams.at(k, _rng.GAINS), N), dtype=float))
        out[k] = aggregate_v(scenario.ensemble, theta, draw, sigma, streams.at(k, _rng.NOISE))
    return out


def validate_mean_v(scenario, theta, draws, seed=0, mu_h=None, z_max=4.0):
    """z-scores of the Monte Carlo mean of v against mu_h * grad F(theta)."""
    if mu_h is None:
        mu_h = scenario.fading.moments()[0]
    v = _v_samples(scenario, theta, draws, seed)
    expected = mu_h * scenario.ensemble.grad(theta)
    mean = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / math.sqrt(draws) if draws > 1 else np.zeros_like(mean)
    dev = mean - expected
    z = np.zeros_like(mean)
    # roundoff-level deviations are exact, whatever the (roundoff) SE says
    exact = np.abs(dev) <= 1e-12 * (1 + np.abs(expected))
    pos = (se > 0) & ~exact
    z[pos] = dev[pos] / se[pos]
    z[~pos & ~exact] = np.inf
    return MomentReport(draws, mean, expected, se, z, None, bool(np.all(np.abs(z) <= z_max)))


def second_moment_v_closed_form(scenario, theta):
    """mu_h^2 |grad F|^2 + (sigma_h^2/N^2) sum |grad f_n|^2 + d sigma_w^2/(E_N N^2)."""
    mu_h, var_h = scenario.fading.moments()
    ens = scenario.ensemble
    N, d = scenario.N, scenario.d
    g = ens.grad(theta)
    return (mu_h**2 * (g @ g) + var_h / N**2 * float(np.sum(ens.grad_sq_norms(theta)))
            + d * scenario.noise.sigma_w_sq / (scenario.schedule.energy(N) * N**2))


def validate_second_moment_v(scenario, theta, draws, seed=0, rel_tol=0.03, z_max=4.0):
    """Monte Carlo mean of |v|^2 against the closed form, within max(rel_tol, z_max SE)."""
    v = _v_samples(scenario, theta, draws, seed)
    sq = np.einsum("kd,kd->k", v, v)
    mean = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    expected = second_moment_v_closed_form(scenario, theta)
    dev = abs(mean - expected)
    rel = dev / expected if expected > 0 else (0.0 if dev == 0 else math.inf)
    exact = dev <= 1e-12 * (1 + expected)
    z = 0.0 if exact else (dev / se if se > 0 else math.inf)
    passed = exact or dev <= max(rel_tol * expected, z_max * se)
    return MomentReport(draws, mean, expected, se, z, rel, passed)


# ---------------------------------------------------------------------------
# curve statistics


@dataclass(frozen=True)
class PlateauEstimate:
    value: float
    converged: bool
    tail_start: int


def _curve(stats):
    return np.asarray(getattr(stats, "excess_mean", stats), dtype=float)


def plateau_estimator(stats, tail_fraction=0.2, atol=1e-12):
    """Mean excess risk over the final ``tail_fraction`` of iterations.

    ``converged`` is False when the second half of the tail sits below half
    of the first half, i.e. the curve is still falling steeply.
    """
    y = _curve(stats)
    if len(y) < 20:
        raise ValueError("plateau estimation needs at least 20 iterations")
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    start = len(y) - max(2, int(round(tail_fraction * len(y))))
    tail = y[start:]
    value = math.fsum(tail.tolist()) / len(tail)
    half = len(tail) // 2
    first, second = float(np.mean(tail[:half])), float(np.mean(tail[half:]))
    converged = not (second < 0.5 * first and first > atol)
    return PlateauEstimate(value, converged, start)


def slope_estimator(stats, window, floor=None, tail_fraction=0.2):
    """Least-squares slope of log(excess risk) against k over ``window=(k0, k1)``.

    Every point of the window must be at least 10x the noise floor
    (estimated from the tail unless ``floor`` is given).
    """
    y = _curve(stats)
    k0, k1 = window
    if not 0 <= k0 < k1 < len(y):
        raise WindowError(f"window {window} outside curve of length {len(y)}")
    segment = y[k0:k1 + 1]
    if floor is None:
        floor = plateau_estimator(y, tail_fraction).value
    if np.any(segment <= 0) or np.any(segment < 10 * floor):
        raise WindowError("window reaches into the noise floor")
    ks = np.arange(k0, k1 + 1, dtype=float)
    slope, _ = np.polyfit(ks, np.log(segment), 1)
    return float(slope)


def initial_window(stats, floor=None, min_len=5, tail_fraction=0.2):
    """Widest window from k = 0 whose points all stay >= 10x the floor."""
    y = _curve(stats)
    if floor is None:
        floor = plateau_estimator(y, tail_fraction).value
    ok = (y > 0) & (y >= 10 * floor)
    end = int(np.argmin(ok)) if not np.all(ok) else len(y)
    if end - 1 < min_len:
        raise WindowError("initial-distance regime is too short")
    return 0, end - 1


# ---------------------------------------------------------------------------
# energy to target


@dataclass
class EnergyRow:
    N: int
    total_energy: float
    reached: bool
    k_hit: int | None
    floor_estimate: float
    rep_energy: np.ndarray = field(default=None, repr=False)
    stats: CurveStats | None = field(default=None, repr=False)


def energy_to_target(family, Ns, target_err, reps, base_seed):
    """Energy before the mean excess risk first drops to ``target_err``, per N.

    ``family(N)`` returns what MonteCarloConfig accepts as a scenario; its
    k_max is the iteration budget.  ``floor_estimate`` is the plateau of the
    mean curve.  The
    per-replication energies (NaN where a replication never reaches the
    target) are kept for voting.
    """
    if not target_err > 0:
        raise ValueError("target_err must be positive")
    rows = []
    for N in Ns:
        scenario = family(N)
        stats = mc_run(MonteCarloConfig(reps, base_seed, scenario))
        floor = plateau_estimator(stats).value
        hit = np.flatnonzero(stats.excess_mean <= target_err)
        rep_energy = np.full(reps, np.nan)
        bad = set(stats.diverged)
        ok = [r for r in range(reps) if r not in bad]
        for r, ex, en in zip(ok, stats.excess_samples, stats.energy_samples):
            h = np.flatnonzero(ex <= target_err)
            if h.size:
                rep_energy[r] = en[h[0]]
        if hit.size:
            k = int(hit[0])
            rows.append(EnergyRow(N, float(stats.energy_cum_mean[k]), True, k, floor, rep_energy, stats))
        else:
            rows.append(EnergyRow(N, math.nan, False, None, floor, rep_energy, stats))
    return rows


def strictly_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def energy_vote(rows):
    """Fraction of replications whose energy-to-target strictly decreases over the N grid."""
    mat = np.array([r.rep_energy for r in rows])
    votes = [strictly_decreasing(mat[:, i]) for i in range(mat.shape[1])]
    return sum(votes) / len(votes) if votes else 0.0
