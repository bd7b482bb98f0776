"""Closed-form error bounds and feasibility conditions.

All evaluators take the same :class:`~gbma.model.ObjectiveConstants` record
the simulator uses.  ``k`` may be a scalar or an array of iteration indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStepsizeError, NonCertifiedError

BOUND_KINDS = ("thm1", "thm2a", "thm2b", "centralized_strong", "centralized_convex")


def _require_certified(consts, force):
    if not consts.certified and not force:
        raise NonCertifiedError("constants are surrogates; pass force=True to evaluate anyway")


def strongly_convex_step_limits(consts, mu_h, sigma_h_sq, N):
    """The two upper limits on beta for the strongly convex fading bound.

    Returns ``(gain_limit, distortion_limit)``; the distortion limit is
    ``inf`` when the gains have no spread.
    """
    mu, L, Lb, delta = consts.mu, consts.L, consts.L_bar, consts.delta
    gain_limit = 2.0 / (mu_h * (mu + L))
    den = sigma_h_sq * Lb**2 * (1 + 2 * delta) * (mu + L)
    # den also underflows to zero for subnormal variances
    distortion_limit = np.inf if den == 0 else 2.0 * mu_h * mu * L * N / den
    return gain_limit, distortion_limit


def thm1_rate_c(beta, consts, mu_h, sigma_h_sq, N, force=False):
    """Contraction factor c of the strongly convex bound."""
    _require_certified(consts, force)
    if consts.mu <= 0:
        raise InfeasibleStepsizeError("strong convexity mu must be positive")
    gain_limit, distortion_limit = strongly_convex_step_limits(consts, mu_h, sigma_h_sq, N)
    if not beta > 0:
        raise InfeasibleStepsizeError(f"beta={beta} must be positive")
    if beta >= gain_limit:
        raise InfeasibleStepsizeError(
            f"beta={beta:.6g} violates the gain term beta < 2/(mu_h(mu+L)) = {gain_limit:.6g}"
        )
    if beta >= distortion_limit:
        raise InfeasibleStepsizeError(
            f"beta={beta:.6g} violates the distortion term "
            f"beta < 2 mu_h mu L N/(sigma_h^2 Lbar^2 (1+2 delta)(mu+L)) = {distortion_limit:.6g}"
        )
    mu, L = consts.mu, consts.L
    c = (
        1.0
        - 2.0 * beta * mu_h * mu * L / (mu + L)
        + beta**2 * sigma_h_sq * consts.L_bar**2 * (1 + 2 * consts.delta) / N
    )
    if not 0.0 < c < 1.0:
        raise InfeasibleStepsizeError(f"rate c={c!r} is outside (0, 1)")
    return c


def thm1_floor(beta, consts, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d, force=False):
    c = thm1_rate_c(beta, consts, mu_h, sigma_h_sq, N, force)
    delta, Lb = consts.delta, consts.L_bar
    drive = sigma_h_sq * delta * Lb**2 * (2 + delta) / N + d * sigma_w_sq / (E_N * N**2)
    return consts.L * beta**2 / (2 * (1 - c)) * drive


def thm1_bound(k, beta, consts, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d, force=False):
    """c^k r0^2 L/2 plus the distortion/noise floor."""
    c = thm1_rate_c(beta, consts, mu_h, sigma_h_sq, N, force)
    floor = thm1_floor(beta, consts, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d, force)
    k = np.asarray(k, dtype=float)
    out = c**k * consts.r0_sq * consts.L / 2 + floor
    return float(out) if out.ndim == 0 else out


def _check_k(k):
    k = np.asarray(k, dtype=float)
    if np.any(k < 1):
        raise ValueError("the convex bounds start at k = 1")
    return k


def thm2a_bound(k, beta, r0_sq, sigma_w_sq, N, E_N, d, L=None):
    """Equal-gain convex bound r0^2/(2 beta k) + beta d sigma_w^2/(E_N N^2)."""
    if not beta > 0:
        raise InfeasibleStepsizeError("beta must be positive")
    if L is not None and beta >= 1.0 / L:
        raise InfeasibleStepsizeError(f"beta={beta:.6g} violates beta < 1/L = {1 / L:.6g}")
    k = _check_k(k)
    # grouped like the fading bound so that it reduces to this one exactly
    out = r0_sq / (2 * beta * k) + beta * (d * sigma_w_sq / (E_N * N**2))
    return float(out) if out.ndim == 0 else out


def thm2b_bound(k, beta, r0_sq, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d, B_N, L=None):
    """Fading convex bound with gradient-norm envelope B(N)."""
    if B_N < 0:
        raise ValueError("B_N must be >= 0")
    if not beta > 0:
        raise InfeasibleStepsizeError("beta must be positive")
    if L is not None and beta >= 1.0 / (L * mu_h):
        raise InfeasibleStepsizeError(
            f"beta={beta:.6g} violates beta < 1/(L mu_h) = {1 / (L * mu_h):.6g}"
        )
    k = _check_k(k)
    out = r0_sq / (2 * beta * mu_h * k) + beta / mu_h * (
        B_N * sigma_h_sq / N + d * sigma_w_sq / (E_N * N**2)
    )
    return float(out) if out.ndim == 0 else out


def centralized_strong_bound(k, beta, consts):
    mu, L = consts.mu, consts.L
    if not 0 < beta < 2 / (mu + L):
        raise InfeasibleStepsizeError(f"beta={beta:.6g} violates 0 < beta < 2/(mu+L)")
    k = np.asarray(k, dtype=float)
    out = (1 - 2 * beta * mu * L / (mu + L)) ** k * consts.r0_sq * L / 2
    return float(out) if out.ndim == 0 else out


def centralized_convex_bound(k, beta, consts):
    if not 0 < beta < 1 / consts.L:
        raise InfeasibleStepsizeError(f"beta={beta:.6g} violates 0 < beta < 1/L")
    k = _check_k(k)
    out = consts.r0_sq / (2 * beta * k)
    return float(out) if out.ndim == 0 else out


def dispersion_index(mu_h, sigma_h_sq):
    """D = sigma_h^2 / mu_h."""
    if not mu_h > 0:
        raise ValueError("mu_h must be positive")
    return sigma_h_sq / mu_h


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class BoundCurve:
    kind: str
    ks: np.ndarray
    values: np.ndarray
    params: dict = field(default_factory=dict)


def bound_curve(kind, ks, beta, consts, mu_h=1.0, sigma_h_sq=0.0, sigma_w_sq=0.0,
                N=1, E_N=1.0, d=1, B_N=None, force=False):
    """Evaluate one bound over ``ks``; the params echo every input."""
    _require_certified(consts, force)
    ks = np.asarray(ks)
    params = dict(beta=beta, mu_h=mu_h, sigma_h_sq=sigma_h_sq, sigma_w_sq=sigma_w_sq, N=N,
                  E_N=E_N, d=d, delta=consts.delta, mu=consts.mu, L=consts.L,
                  L_bar=consts.L_bar, r0_sq=consts.r0_sq, B_N=B_N)
    if kind == "thm1":
        params["c"] = thm1_rate_c(beta, consts, mu_h, sigma_h_sq, N, force)
        vals = thm1_bound(ks, beta, consts, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d, force)
    elif kind == "thm2a":
        vals = thm2a_bound(ks, beta, consts.r0_sq, sigma_w_sq, N, E_N, d, L=consts.L)
    elif kind == "thm2b":
        if B_N is None:
            raise ValueError("thm2b needs B_N")
        vals = thm2b_bound(ks, beta, consts.r0_sq, mu_h, sigma_h_sq, sigma_w_sq, N, E_N, d,
                           B_N, L=consts.L)
    elif kind == "centralized_strong":
        vals = centralized_strong_bound(ks, beta, consts)
    elif kind == "centralized_convex":
        vals = centralized_convex_bound(ks, beta, consts)
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    return BoundCurve(kind, ks, np.atleast_1d(np.asarray(vals, dtype=float)), params)


# ---------------------------------------------------------------------------
# report-only checks


@dataclass
class MonotonicityReport:
    threshold: float
    holds: np.ndarray
    horizon: int
    first_failure: int | None


def check_monotonicity_condition(grad_norm_sq, sigma_w_sq, E_N, N, d):
    """Does E|grad F(theta_i)|^2 exceed d sigma_w^2/(E_N N^2) for i = 1..k?

    ``grad_norm_sq`` is indexed by iteration starting at i = 0 (a RunTrace or
    CurveStats column); index 0 is not part of the condition.  ``horizon`` is
    the largest k for which the condition holds for every i <= k (0 if it
    fails at i = 1).
    """
    g = np.asarray(getattr(grad_norm_sq, "grad_norm_sq", grad_norm_sq), dtype=float)
    threshold = d * sigma_w_sq / (E_N * N**2)
    holds = g > threshold
    tail = holds[1:]
    bad = np.flatnonzero(~tail)
    if bad.size:
        first = int(bad[0]) + 1
        horizon = first - 1
    else:
        first = None
        horizon = len(g) - 1
    return MonotonicityReport(threshold, holds, horizon, first)


def _sample_ball(rng, center, radius, samples):
    d = center.size
    u = rng.standard_normal((samples, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    # half the points on the sphere, where a convex |g|^2 attains its max
    radii = radius * rng.uniform(0, 1, samples) ** (1.0 / d)
    radii[: samples // 2] = radius
    return center + radii[:, None] * u


def estimate_B(ensemble, probe_region, samples, rng, margin=0.1):
    """Sampled max over the probe region of max_n |grad f_n|^2, inflated by ``margin``.

    ``probe_region`` is ``('ball', center, radius)``, ``('box', lo, hi)`` or an
    explicit (m, d) array of points.  This is an estimate, not a certificate.
    """
    rng = np.random.default_rng(rng)
    if isinstance(probe_region, tuple) and probe_region[0] == "ball":
        _, center, radius = probe_region
        center = np.asarray(center, dtype=float)
        pts = np.vstack([center, _sample_ball(rng, center, float(radius), samples)])
    elif isinstance(probe_region, tuple) and probe_region[0] == "box":
        _, lo, hi = probe_region
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        pts = rng.uniform(lo, hi, (samples, lo.size))
    else:
        pts = np.atleast_2d(np.asarray(probe_region, dtype=float))
    best = max(float(np.max(ensemble.grad_sq_norms(p))) for p in pts)
    return best * (1.0 + margin)


@dataclass
class GradientSumReport:
    checked: int
    violations: list
    premise_holds: bool
    node_spread: float
    worst_ratio: float

    @property
    def passed(self):
        return not self.violations


def gradient_sum_bound_check(ensemble, consts, thetas, rtol=1e-12):
    """(1/N^2) sum |grad f_n|^2 <= (Lbar^2/N)(r^2 + 2 delta r + delta^2) at each theta.

    The inequality is guaranteed when delta >= max_n |theta* - theta*_n|;
    ``premise_holds`` reports whether that is the case for ``consts``.
    """
    if ensemble.kind != "ridge" or not consts.certified:
        raise NonCertifiedError("the gradient-sum check needs a certified ridge ensemble")
    N = ensemble.n_nodes
    Lb2, delta = consts.L_bar**2, consts.delta
    spread = float(np.max(np.linalg.norm(ensemble.node_minimizers() - consts.theta_star, axis=1)))
    violations, worst = [], 0.0
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    for i, th in enumerate(thetas):
        r = float(np.linalg.norm(th - consts.theta_star))
        lhs = float(np.sum(ensemble.grad_sq_norms(th))) / N**2
        rhs = Lb2 / N * (r * r + 2 * delta * r + delta * delta)
        worst = max(worst, lhs / rhs)
        if lhs > rhs * (1 + rtol):
            violations.append(i)
    return GradientSumReport(len(thetas), violations, spread <= delta, spread, worst)
