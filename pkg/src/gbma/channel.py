"""Fading gains, matched-filter noise and per-node energy schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import UndefinedSNRError

# ---------------------------------------------------------------------------
# fading models
#
# Each model exposes moments() -> (mean, variance) of the effective gain and
# sample(rng, size).  Gains are always nonnegative.


@dataclass(frozen=True)
class Unit:
    """Equal channel gains, h = 1."""

    def moments(self):
        return 1.0, 0.0

    def sample(self, rng, size):
        return np.ones(size)

    @property
    def label(self):
        return "unit"


@dataclass(frozen=True)
class Rayleigh:
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Rayleigh scale must be positive")

    def moments(self):
        mean = self.scale * math.sqrt(math.pi / 2)
        var = (2 - math.pi / 2) * self.scale**2
        return mean, var

    def sample(self, rng, size):
        return rng.rayleigh(self.scale, size)

    @property
    def label(self):
        return f"rayleigh({self.scale:g})"


GENERIC_SAMPLERS = ("gamma", "lognormal", "uniform")


@dataclass(frozen=True)
class GenericIID:
    """Positive gains with prescribed mean/variance from a named family."""

    mean: float
    var: float
    sampler: str = "gamma"

    def __post_init__(self):
        if not self.mean > 0 or self.var < 0:
            raise ValueError("need mean > 0 and var >= 0")
        if self.sampler not in GENERIC_SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; pick one of {GENERIC_SAMPLERS}")
        if self.sampler == "uniform" and math.sqrt(3 * self.var) > self.mean:
            raise ValueError("uniform gains with this mean/variance would go negative")

    def moments(self):
        return float(self.mean), float(self.var)

    def sample(self, rng, size):
        m, v = self.mean, self.var
        if v == 0:
            return np.full(size, float(m))
        if self.sampler == "gamma":
            return rng.gamma(m * m / v, v / m, size)
        if self.sampler == "lognormal":
            s2 = math.log1p(v / (m * m))
            return rng.lognormal(math.log(m) - s2 / 2, math.sqrt(s2), size)
        half = math.sqrt(3 * v)
        return rng.uniform(m - half, m + half, size)

    @property
    def label(self):
        return f"{self.sampler}({self.mean:g},{self.var:g})"


@dataclass(frozen=True)
class PhaseResidual:
    """Base gain times cos(phase error), phase error ~ U[-max_phase, max_phase]."""

    base: object
    max_phase: float

    def __post_init__(self):
        if not 0 <= self.max_phase < math.pi / 4:
            raise ValueError("max_phase must lie in [0, pi/4)")

    def _cos_moments(self):
        p = self.max_phase
        if p == 0:
            return 1.0, 1.0
        c1 = math.sin(p) / p
        c2 = 0.5 * (1 + math.sin(2 * p) / (2 * p))
        return c1, c2

    def moments(self):
        mb, vb = self.base.moments()
        c1, c2 = self._cos_moments()
        mean = mb * c1
        return mean, (vb + mb * mb) * c2 - mean * mean

    def sample(self, rng, size):
        h = self.base.sample(rng, size)
        phase = rng.uniform(-self.max_phase, self.max_phase, size)
        return h * np.cos(phase)

    @property
    def label(self):
        return f"phase({self.base.label},{self.max_phase:g})"


def moments(model):
    """(mu_h, sigma_h^2) of the effective gain."""
    return model.moments()


def second_moment(model):
    m, v = model.moments()
    return v + m * m


@dataclass(frozen=True)
class ChannelDraw:
    k: int
    gains: np.ndarray


def draw_gains(model, k, N, seed):
    """Gains of all N nodes at slot ``k``; a pure function of (seed, k, N)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = _rng.stream(_rng.stream_key(seed), k, _rng.GAINS)
    return ChannelDraw(k, np.asarray(model.sample(rng, N), dtype=float))


# ---------------------------------------------------------------------------
# noise and energy


@dataclass(frozen=True)
class NoiseModel:
    sigma_w_sq: float = 0.0

    def __post_init__(self):
        if self.sigma_w_sq < 0:
            raise ValueError("sigma_w_sq must be >= 0")


@dataclass(frozen=True)
class Const:
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("energy must be positive")

    def energy(self, N):
        return float(self.value)

    @property
    def label(self):
        return f"E={self.value:g}"


@dataclass(frozen=True)
class PowerLaw:
    """E_N = N^(epsilon - 2)."""

    epsilon: float

    def energy(self, N):
        return float(N) ** (self.epsilon - 2.0)

    @property
    def label(self):
        return f"E=N^({self.epsilon:g}-2)"


@dataclass(frozen=True)
class Exponent:
    """E_N = N^p."""

    p: float

    def energy(self, N):
        return float(N) ** self.p

    @property
    def label(self):
        return f"E=N^{self.p:g}"


def in_scaling_window(schedule, N, epsilon):
    """N^(eps-2) <= E_N <= N^(-eps-1): centralised rate with vanishing total energy."""
    e = schedule.energy(N)
    lo, hi = float(N) ** (epsilon - 2), float(N) ** (-epsilon - 1)
    tol = 1e-12 * max(lo, hi)
    return lo - tol <= e <= hi + tol


def effective_noise_sigma(noise, schedule, N):
    """Per-dimension std of w_k = w~_k / (N sqrt(E_N))."""
    return math.sqrt(noise.sigma_w_sq) / (N * math.sqrt(schedule.energy(N)))


def snr_db(schedule, noise, mean_sq_gradient, model, N, d):
    """Received signal energy over noise energy of one node's transmission, in dB.

    SNR = E_N E[h^2] G / (d sigma_w^2), where G is the mean squared local
    gradient norm.  The same definition is used for GBMA and FDM (pass a
    ``Const`` schedule and the unit channel for a fading-corrected FDM link).
    """
    if noise.sigma_w_sq <= 0:
        raise UndefinedSNRError("SNR is undefined without channel noise")
    if mean_sq_gradient <= 0:
        raise UndefinedSNRError("SNR is undefined for zero gradients")
    ratio = schedule.energy(N) * second_moment(model) * mean_sq_gradient / (d * noise.sigma_w_sq)
    return 10.0 * math.log10(ratio)


def sigma_w_sq_for_snr(target_db, schedule, mean_sq_gradient, model, N, d):
    """Inverse of :func:`snr_db`: the noise power giving ``target_db``."""
    return schedule.energy(N) * second_moment(model) * mean_sq_gradient / (d * 10 ** (target_db / 10))
