"""Turn a validated Config into simulator objects and derived constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .algorithm import RunConfig, design_stepsize_convex, design_stepsize_strongly_convex
from .analysis import Scenario
from .bounds import estimate_B, thm1_rate_c
from .channel import (
    Const,
    Exponent,
    GenericIID,
    NoiseModel,
    PhaseResidual,
    PowerLaw,
    Rayleigh,
    Unit,
    sigma_w_sq_for_snr,
    snr_db,
)
from .config import data_path
from .data import gen_localization_field, gen_synthetic_ridge, load_msd_csv
from .errors import ConfigError, GBMAError
from .model import RidgeEnsemble, compute_constants


def build_fading(cfg):
    kind = cfg["channel.kind"]
    try:
        if kind == "unit":
            base = Unit()
        elif kind == "rayleigh":
            base = Rayleigh(cfg["channel.scale"])
        else:
            base = GenericIID(cfg["channel.mean"], cfg["channel.var"], cfg["channel.sampler"])
        phase = cfg["channel.phase_max"]
        return PhaseResidual(base, phase) if phase > 0 else base
    except ValueError as exc:
        raise ConfigError(f"channel: {exc}") from None


def build_schedule(cfg):
    kind = cfg["energy.kind"]
    try:
        if kind == "const":
            return Const(cfg["energy.value"])
        if kind == "powerlaw":
            return PowerLaw(cfg["energy.epsilon"])
        return Exponent(cfg["energy.p"])
    except ValueError as exc:
        raise ConfigError(f"energy: {exc}") from None


def build_field(cfg, N, seed):
    """Sensor field whose reference minimiser is the one in the basin of theta0."""
    try:
        ens = gen_localization_field(
            N, field_size=cfg["field.size"], source=cfg["field.source"],
            exclusion_radius=cfg["field.exclusion_radius"], A=cfg["field.A"],
            snr_db=cfg["field.snr_db"], seed=seed, guard_radius=cfg["loss.guard_radius"],
        )
    except ValueError as exc:
        raise ConfigError(f"field: {exc}") from None
    beta = cfg["run.beta"]
    if isinstance(beta, float):
        try:
            ens.set_theta_star(ens.basin_minimizer(build_theta0(cfg, ens), beta))
        except (ValueError, FloatingPointError) as exc:
            raise ConfigError(f"cannot locate the basin minimiser: {exc}") from None
    return ens


def build_ensemble(cfg, N):
    source = cfg["data.source"]
    if source == "localization":
        return build_field(cfg, N, cfg["data.seed"])
    if source == "synthetic":
        ds = gen_synthetic_ridge(N, cfg["data.d"], cfg["data.seed"], cfg["data.conditioning"],
                                 cfg["data.noise_std"])
    else:
        limit = cfg["data.limit"] if cfg["data.limit"] is not None else N
        if limit != N:
            raise ConfigError("data.limit must equal nodes.N (one sample per node)")
        try:
            ds = load_msd_csv(data_path(cfg), limit, cfg["data.standardize"])
        except OSError as exc:
            raise ConfigError(f"cannot read dataset: {exc}") from None
        if ds.n != N:
            raise ConfigError(f"dataset has {ds.n} rows, nodes.N={N}")
    return RidgeEnsemble(ds.X, ds.y, cfg["loss.lambda"])


def build_theta0(cfg, ensemble):
    kind, vec = cfg["run.theta0"]
    d = ensemble.dim
    if kind == "zeros":
        return np.zeros(d)
    vec = np.asarray(vec, dtype=float)
    if vec.size != d:
        raise ConfigError(f"run.theta0 has {vec.size} entries, the model has d={d}")
    if kind == "vector":
        return vec
    if kind == "star_offset":
        return ensemble.theta_star + vec
    ref = ensemble.theta_true if getattr(ensemble, "theta_true", None) is not None else ensemble.theta_star
    return ref + vec


def _surrogate(cfg):
    vals = {k: cfg[f"constants.{k}"] for k in ("mu", "L", "L_bar")}
    if any(v is None for v in vals.values()):
        return None
    return vals


@dataclass
class Resolved:
    cfg: object
    ensemble: object
    fading: object
    schedule: object
    noise: NoiseModel
    consts: object  # None when the loss has no constants
    beta: float
    theta0: np.ndarray
    run_config: RunConfig
    mean_sq_gradient: float
    B_N: float | None = None
    derived: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.ensemble.n_nodes

    @property
    def d(self):
        return self.ensemble.dim

    @property
    def E_N(self):
        return self.schedule.energy(self.N)

    @property
    def moments(self):
        return self.fading.moments()

    def scenario(self):
        """Scenario for the harness; a per-replication factory for per-rep fields."""
        cfg = self.cfg

        def make(ens):
            return Scenario(ens, self.run_config, self.fading, self.noise, self.schedule,
                            cfg["run.algorithm"], cfg["fdm.energy"])

        if cfg["data.source"] == "localization" and cfg["field.per_rep"]:
            N, base = self.N, cfg["data.seed"]
            return lambda r: make(build_field(cfg, N, _rng.replication_seed(base, r)))
        return make(self.ensemble)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def resolve(cfg, N=None):
    """Build everything a run needs; raises ConfigError on invalid combinations."""
    N = cfg["nodes.N"] if N is None else N
    ensemble = build_ensemble(cfg, N)
    fading = build_fading(cfg)
    schedule = build_schedule(cfg)
    mu_h, var_h = fading.moments()
    try:
        theta0 = build_theta0(cfg, ensemble)
        if ensemble.certified or _surrogate(cfg) is not None:
            consts = compute_constants(ensemble, theta0, cfg["run.delta"], _surrogate(cfg))
        else:
            consts = None  # no constants for this loss; bounds and auto stepsizes are unavailable
    except GBMAError as exc:
        raise ConfigError(str(exc)) from None
    theta_star = ensemble.theta_star if consts is None else consts.theta_star
    d, E_N = ensemble.dim, schedule.energy(N)

    _, _, gsq = ensemble.snapshot(theta0)
    G = gsq / N
    if cfg["noise.snr_db"] is not None:
        if not G > 0:
            raise ConfigError("noise.snr_db needs nonzero local gradients at theta0")
        sigma_w_sq = sigma_w_sq_for_snr(cfg["noise.snr_db"], schedule, G, fading, N, d)
    else:
        sigma_w_sq = cfg["noise.sigma_w_sq"] or 0.0
    noise = NoiseModel(sigma_w_sq)

    beta = cfg["run.beta"]
    if consts is None and isinstance(beta, str):
        raise ConfigError(f"run.beta={beta} needs objective constants; give a number or constants.*")
    try:
        if beta == "auto:strong":
            beta = design_stepsize_strongly_convex(consts, mu_h, var_h, N, cfg["run.safety"])
        elif beta == "auto:convex_equal":
            beta = design_stepsize_convex(consts, mu_h, "equal", cfg["run.safety"])
        elif beta == "auto:convex_fading":
            beta = design_stepsize_convex(consts, mu_h, "fading", cfg["run.safety"])
    except (GBMAError, ValueError) as exc:
        raise ConfigError(f"cannot design run.beta={cfg['run.beta']}: {exc}") from None

    radius = cfg["run.projection_radius"]
    run_config = RunConfig(
        beta=float(beta), k_max=cfg["run.k_max"], theta0=theta0, seed=cfg["run.seed"],
        stop=cfg["run.stop"], projection=cfg["run.projection"],
        projection_radius=radius, projection_center=theta_star if radius else None,
    )

    B_N = cfg["bounds.B_N"]
    if B_N == "auto":
        r0 = math.sqrt(float(np.sum((theta0 - theta_star) ** 2)))
        probe = cfg["bounds.probe_radius"] or max(r0, 1.0)
        B_N = estimate_B(ensemble, ("ball", theta_star, probe), cfg["bounds.samples"],
                         cfg["data.seed"])

    try:
        c = thm1_rate_c(beta, consts, mu_h, var_h, N) if consts and consts.certified else None
    except GBMAError:
        c = None
    res = Resolved(cfg, ensemble, fading, schedule, noise, consts, float(beta), theta0,
                   run_config, G, B_N)
    have = consts is not None
    derived = {
        "N": N, "d": d,
        "mu": consts.mu if have else None,
        "L": consts.L if have else None,
        "L_bar": consts.L_bar if have else None,
        "delta": consts.delta if have else None,
        "r0_sq": float(np.sum((theta0 - theta_star) ** 2)),
        "certified": bool(have and consts.certified),
        "delta_covers_nodes": consts.delta_covers_nodes if have else None,
        "mu_h": mu_h, "sigma_h_sq": var_h,
        "E_N": E_N, "sigma_w_sq": sigma_w_sq, "beta": float(beta), "c": c,
        "mean_sq_gradient_theta0": G, "B_N": B_N,
    }
    if sigma_w_sq > 0 and G > 0:
        derived["snr_db"] = snr_db(schedule, noise, G, fading, N, d)
        derived["snr_db_fdm"] = snr_db(Const(cfg["fdm.energy"]), noise, G, Unit(), N, d)
    res.derived = {k: _fmt(v) for k, v in derived.items()}
    return res


def check_derived(cfg, resolved):
    """Compare manifest ``derived.*`` entries with freshly computed values."""
    bad = []
    for key, old in cfg.derived.items():
        new = resolved.derived.get(key)
        if new is not None and new != old:
            bad.append(f"{key}: manifest {old}, recomputed {new}")
    if bad:
        raise ConfigError("derived values changed: " + "; ".join(bad))
