"""The over-the-air gradient iterate and its two baselines.

Every run records iterations k = 0..k_max.  Record k holds the state at
theta_k and the energy transmitted to move from theta_k to theta_{k+1}
(zero at the final record, where nothing is transmitted).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .bounds import strongly_convex_step_limits
from .channel import Const, NoiseModel, Unit, effective_noise_sigma
from .errors import DivergenceError, NonCertifiedError
from .model import as_param

GUARD_NORM = 1e8
GUARD_EXCESS = 1e12


@dataclass(frozen=True)
class RunConfig:
    beta: float
    k_max: int
    theta0: np.ndarray
    seed: int = 0
    stop: str = "guard"  # or "budget"
    guard_norm: float = GUARD_NORM
    guard_excess: float = GUARD_EXCESS
    projection: bool = False
    projection_center: np.ndarray | None = None
    projection_radius: float | None = None

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.stop not in ("guard", "budget"):
            raise ValueError(f"unknown stop rule {self.stop!r}")
        if self.projection and self.projection_radius is None:
            raise ValueError("projection needs a radius")

    def ball(self):
        if not self.projection:
            return None
        center = self.theta0 if self.projection_center is None else self.projection_center
        return np.asarray(center, dtype=float), float(self.projection_radius)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    excess_risk: float
    r_sq: float
    v_norm_sq: float
    grad_norm_sq: float
    energy_spent: float


@dataclass
class RunTrace:
    """Per-iteration columns of one run, indexed by k."""

    thetas: np.ndarray
    excess_risk: np.ndarray
    r_sq: np.ndarray
    v_norm_sq: np.ndarray
    grad_norm_sq: np.ndarray
    energy_spent: np.ndarray
    status: str = "completed"
    algorithm: str = "gbma"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.excess_risk)

    @property
    def diverged(self):
        return self.status == "diverged"

    @property
    def energy_cum(self):
        """Energy transmitted before reaching theta_k."""
        out = np.zeros(len(self))
        out[1:] = np.cumsum(self.energy_spent[:-1])
        return out

    @property
    def records(self):
        return [
            IterationRecord(k, float(self.excess_risk[k]), float(self.r_sq[k]),
                            float(self.v_norm_sq[k]), float(self.grad_norm_sq[k]),
                            float(self.energy_spent[k]))
            for k in range(len(self))
        ]


def aggregate_v(ensemble, theta_k, draw, noise_sigma, rng):
    """Matched-filter output scaled by 1/(N sqrt(E_N)).

    (1/N) sum_n h_n g_n(theta_k) + w_k,  w_k ~ N(0, noise_sigma^2 I).
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    mean = ensemble.weighted_grad_mean(theta_k, draw.gains)
    return mean + noise_sigma * rng.standard_normal(ensemble.dim)


def step(theta_k, v_k, beta, projection=None):
    """theta_k - beta v_k, optionally clamped into ``projection=(center, radius)``."""
    v_k = np.asarray(v_k, dtype=float)
    if v_k.shape != np.shape(theta_k):
        raise ValueError(f"shape mismatch {v_k.shape} vs {np.shape(theta_k)}")
    if not np.all(np.isfinite(v_k)):
        raise DivergenceError("non-finite aggregate gradient")
    out = theta_k - beta * v_k
    if projection is not None:
        center, radius = projection
        off = out - center
        dist = float(np.sqrt(off @ off))
        if dist > radius:
            out = center + off * (radius / dist)
    return out


# ---------------------------------------------------------------------------
# stepsize design


def design_stepsize_strongly_convex(consts, mu_h, sigma_h_sq, N, safety=0.9, force=False):
    """safety * min of the two strongly convex stepsize limits."""
    if not 0 < safety < 1:
        raise ValueError("safety must lie in (0, 1)")
    if not consts.certified and not force:
        raise NonCertifiedError("refusing to design a stepsize from surrogate constants")
    if not consts.mu > 0:
        raise ValueError("strong convexity constant must be positive")
    if not mu_h > 0:
        raise ValueError("mu_h must be positive")
    return safety * min(strongly_convex_step_limits(consts, mu_h, sigma_h_sq, N))


def design_stepsize_convex(consts, mu_h, case="fading", safety=0.9):
    """safety/L for equal gains, safety/(L mu_h) under fading."""
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    if not consts.L > 0 or not mu_h > 0:
        raise ValueError("need L > 0 and mu_h > 0")
    if case == "equal":
        return safety / consts.L
    if case == "fading":
        return safety / (consts.L * mu_h)
    raise ValueError(f"unknown case {case!r}")


# ---------------------------------------------------------------------------
# runs


class _Recorder:
    def __init__(self, ensemble, config, algorithm):
        self.ens = ensemble
        self.cfg = config
        self.algorithm = algorithm
        n = config.k_max + 1
        self.thetas = np.full((n, ensemble.dim), np.nan)
        self.cols = {name: np.full(n, np.nan) for name in
                     ("excess_risk", "r_sq", "v_norm_sq", "grad_norm_sq")}
        self.energy = np.zeros(n)
        self.theta_star = ensemble.theta_star
        self.f_star = ensemble.f_star
        self.count = 0

    def observe(self, k, theta):
        """Record theta_k; returns False when the divergence guard trips."""
        self.thetas[k] = theta
        self.count = k + 1
        try:
            value, grad, self.grad_sq_sum = self.ens.snapshot(theta)
        except (FloatingPointError, ValueError):
            return False
        excess = value - self.f_star
        off = theta - self.theta_star
        self.cols["excess_risk"][k] = excess
        self.cols["r_sq"][k] = off @ off
        self.cols["grad_norm_sq"][k] = grad @ grad
        if self.cfg.stop == "guard":
            if not np.isfinite(excess) or excess > self.cfg.guard_excess:
                return False
            if np.sqrt(theta @ theta) > self.cfg.guard_norm:
                return False
        return True

    def finish(self, status, **meta):
        n = self.count
        return RunTrace(
            thetas=self.thetas[:n].copy(),
            excess_risk=self.cols["excess_risk"][:n].copy(),
            r_sq=self.cols["r_sq"][:n].copy(),
            v_norm_sq=self.cols["v_norm_sq"][:n].copy(),
            grad_norm_sq=self.cols["grad_norm_sq"][:n].copy(),
            energy_spent=self.energy[:n].copy(),
            status=status,
            algorithm=self.algorithm,
            meta=meta,
        )


def _iterate(ensemble, config, algorithm, make_v, energy_of):
    rec = _Recorder(ensemble, config, algorithm)
    theta = as_param(config.theta0, ensemble.dim).copy()
    ball = config.ball()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(config.k_max + 1):
            if not rec.observe(k, theta):
                return rec.finish("diverged", diverged_at=k)
            if k == config.k_max:
                break
            try:
                v = make_v(k, theta)
                rec.cols["v_norm_sq"][k] = v @ v
                rec.energy[k] = energy_of(rec.grad_sq_sum)
                theta = step(theta, v, config.beta, ball)
            except (DivergenceError, FloatingPointError, ValueError):
                return rec.finish("diverged", diverged_at=k)
            if not np.all(np.isfinite(theta)):
                return rec.finish("diverged", diverged_at=k + 1)
    return rec.finish("completed")


def run_gbma(ensemble, fading, noise, schedule, config):
    """Draw gains, aggregate over the air, step; repeated k_max times."""
    N = ensemble.n_nodes
    E_N = schedule.energy(N)
    sigma = effective_noise_sigma(noise, schedule, N)
    streams = _rng.Streams(config.seed)

    def make_v(k, theta):
        # same draws as draw_gains / stream(key, k, NOISE), without rebuilding generators
        gains = np.asarray(fading.sample(streams.at(k, _rng.GAINS), N), dtype=float)
        mean = ensemble.weighted_grad_mean(theta, gains)
        return mean + sigma * streams.at(k, _rng.NOISE).standard_normal(ensemble.dim)

    def energy_of(grad_sq_sum):
        return E_N * grad_sq_sum

    return _iterate(ensemble, config, "gbma", make_v, energy_of)


def run_centralized(ensemble, config):
    """Exact gradient descent, no channel."""

    def make_v(k, theta):
        return ensemble.weighted_grad_mean(theta, np.ones(ensemble.n_nodes))

    return _iterate(ensemble, config, "centralized", make_v, lambda grad_sq_sum: 0.0)


def run_fdm(ensemble, noise, per_node_energy, config):
    """Orthogonal-channel baseline.

    Each node's gradient arrives alone with known fading removed at the
    receiver, leaving g_n + w_n with w_n ~ N(0, sigma_w^2/E I).  The update
    uses the average of the N received vectors.
    """
    if not per_node_energy > 0:
        raise ValueError("per_node_energy must be positive")
    N, d = ensemble.n_nodes, ensemble.dim
    sigma = np.sqrt(noise.sigma_w_sq / per_node_energy)
    streams = _rng.Streams(config.seed)
    ones = np.ones(N)

    def make_v(k, theta):
        w = streams.at(k, _rng.NOISE).standard_normal((N, d))
        return ensemble.weighted_grad_mean(theta, ones) + sigma * np.add.reduce(w, axis=0) / N

    def energy_of(grad_sq_sum):
        return per_node_energy * grad_sq_sum

    return _iterate(ensemble, config, "fdm", make_v, energy_of)


def gbma_noise_variance(sigma_w_sq, E_N, N):
    """Per-dimension variance of the GBMA effective noise."""
    return sigma_w_sq / (E_N * N**2)


def fdm_noise_variance(sigma_w_sq, E, N):
    """Per-dimension variance of the averaged FDM noise."""
    return sigma_w_sq / (E * N)


def run_algorithm(name, ensemble, config, fading=Unit(), noise=None, schedule=None,
                  fdm_energy=1.0):
    noise = noise or NoiseModel(0.0)
    schedule = schedule or Const(1.0)
    if name == "gbma":
        return run_gbma(ensemble, fading, noise, schedule, config)
    if name == "centralized":
        return run_centralized(ensemble, config)
    if name == "fdm":
        return run_fdm(ensemble, noise, fdm_energy, config)
    raise ValueError(f"unknown algorithm {name!r}")
