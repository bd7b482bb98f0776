"""Run a configuration and write CSV curves, manifests and plots."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import bounds as B
from .analysis import (
    MonteCarloConfig,
    energy_to_target,
    energy_vote,
    mc_run,
    plateau_estimator,
    validate_mean_v,
    validate_second_moment_v,
)
from .errors import GBMAError, NonCertifiedError
from .model import lemma5_property_check
from .resolve import check_derived, resolve

CSV_HEADER = ("k,excess_mean,excess_se,r_sq_mean,bound_thm1,bound_thm2a,bound_thm2b,"
              "bound_central,energy_cum")
ENERGY_HEADER = "N,total_energy,reached,k_hit,plateau,reps_reached,vote_fraction"


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def bound_columns(res, ks):
    """Bound curves that apply to this run; missing ones are None."""
    cfg, consts = res.cfg, res.consts
    mu_h, var_h = res.moments
    beta, N, d, E_N, s2 = res.beta, res.N, res.d, res.E_N, res.noise.sigma_w_sq
    algorithm = cfg["run.algorithm"]
    out = dict.fromkeys(("thm1", "thm2a", "thm2b", "central"))
    if consts is None or not consts.certified:
        return out
    ks = np.asarray(ks)
    pos = ks >= 1

    def from_k1(fn):
        vals = np.full(ks.shape, np.nan)
        vals[pos] = fn(ks[pos])
        return vals

    def attempt(fn):
        try:
            return fn()
        except (GBMAError, ValueError):
            return None

    if algorithm == "gbma":
        if consts.mu > 0:
            out["thm1"] = attempt(lambda: B.thm1_bound(ks, beta, consts, mu_h, var_h, s2, N, E_N, d))
        if var_h == 0 and mu_h == 1:
            out["thm2a"] = attempt(lambda: from_k1(
                lambda k: B.thm2a_bound(k, beta, consts.r0_sq, s2, N, E_N, d, L=consts.L)))
        elif res.B_N is not None:
            out["thm2b"] = attempt(lambda: from_k1(
                lambda k: B.thm2b_bound(k, beta, consts.r0_sq, mu_h, var_h, s2, N, E_N, d,
                                        res.B_N, L=consts.L)))
    central = None
    if consts.mu > 0:
        central = attempt(lambda: B.centralized_strong_bound(ks, beta, consts))
    if central is None:
        central = attempt(lambda: from_k1(lambda k: B.centralized_convex_bound(k, beta, consts)))
    out["central"] = central
    return out


def render_csv(stats, bound_cols):
    rows = [CSV_HEADER]
    n = len(stats.k)
    se = stats.excess_se
    cols = [bound_cols[k] for k in ("thm1", "thm2a", "thm2b", "central")]
    for i in range(n):
        cells = [str(int(stats.k[i])), _cell(stats.excess_mean[i]),
                 _cell(None if se is None else se[i]), _cell(stats.r_sq_mean[i])]
        cells += [_cell(None if c is None else c[i]) for c in cols]
        cells.append(_cell(stats.energy_cum_mean[i]))
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def run_checks(res):
    """Validators requested under ``checks.*``."""
    cfg, out = res.cfg, []
    if cfg["checks.moments"]:
        scenario = res.scenario()
        scenario = scenario if not callable(scenario) else scenario(0)
        draws = cfg["checks.moment_draws"]
        m1 = validate_mean_v(scenario, res.theta0, draws, seed=cfg["run.seed"])
        out.append(Check("mean_v", m1.passed, f"max |z| = {float(np.max(np.abs(m1.z))):.3g}"))
        m2 = validate_second_moment_v(scenario, res.theta0, draws, seed=cfg["run.seed"])
        out.append(Check("second_moment_v", m2.passed,
                         f"relative error {m2.rel_error:.3g}, z = {m2.z:.3g}"))
    if cfg["checks.cocoercivity"]:
        try:
            rep = lemma5_property_check(res.ensemble, cfg["checks.trials"], cfg["data.seed"])
            out.append(Check("cocoercivity", rep.passed,
                             f"{len(rep.violations)} of {rep.trials} pairs fail"))
        except (TypeError, GBMAError) as exc:
            out.append(Check("cocoercivity", False, str(exc)))
    if cfg["checks.gradient_sum"]:
        try:
            rng = np.random.default_rng(cfg["data.seed"])
            radius = max(math.sqrt(float(res.derived["r0_sq"])), 1.0)
            pts = B._sample_ball(rng, res.ensemble.theta_star, radius, 100)
            if res.consts is None:
                raise NonCertifiedError("no objective constants for this loss")
            rep = B.gradient_sum_bound_check(res.ensemble, res.consts, pts)
            ok = rep.passed and rep.premise_holds
            out.append(Check("gradient_sum", ok,
                             f"{len(rep.violations)} of {rep.checked} points fail; "
                             f"premise {'holds' if rep.premise_holds else 'fails'}"))
        except NonCertifiedError as exc:
            out.append(Check("gradient_sum", False, str(exc)))
    return out


@dataclass
class PointResult:
    label: str
    csv_path: str
    manifest_path: str
    stats: object
    resolved: object
    checks: list = field(default_factory=list)

    @property
    def n_diverged(self):
        return self.stats.n_diverged


@dataclass
class RunSummary:
    points: list
    extra_files: list = field(default_factory=list)
    energy_rows: list | None = None
    vote: float | None = None

    @property
    def n_diverged(self):
        return sum(p.n_diverged for p in self.points)

    @property
    def checks(self):
        return [c for p in self.points for c in p.checks]

    @property
    def ok(self):
        return self.n_diverged == 0 and all(c.passed for c in self.checks)

    @property
    def files(self):
        out = []
        for p in self.points:
            out += [p.csv_path, p.manifest_path]
        return out + self.extra_files


def _label(param, value):
    leaf = param.split(".")[-1]
    safe = "".join(ch if ch.isalnum() or ch in "-." else "_" for ch in value)
    return f"{leaf}_{safe}"


def sweep_points(cfg):
    """(label, point config) per sweep value; the point config has no sweep."""
    param, values = cfg.sweep_values()
    if param is None:
        return [("", cfg)]
    out = []
    for value in values:
        label = _label(param, value)
        point = cfg.with_overrides([f"{param}={value}", "sweep.param=none", "sweep.values=",
                                    "study.kind=curves", f"name={cfg['name']}__{label}"])
        out.append((label, point))
    return out


def _write_point(point_cfg, res, stats, out_dir):
    name = point_cfg["name"]
    csv_path = os.path.join(out_dir, f"{name}.csv")
    manifest_path = os.path.join(out_dir, f"{name}.manifest")
    cols = bound_columns(res, stats.k)
    atomic_write(csv_path, render_csv(stats, cols))
    derived = dict(res.derived)
    derived["bounds"] = ",".join(k for k, v in cols.items() if v is not None) or "none"
    derived["diverged"] = str(stats.n_diverged)
    derived["plateau"] = repr(plateau_estimator(stats).value) if len(stats.k) >= 20 else "none"
    atomic_write(manifest_path, point_cfg.render(derived))
    return csv_path, manifest_path


def run(cfg, out_dir=None, plot=None):
    """Run every sweep point of ``cfg``; returns a RunSummary."""
    out_dir = out_dir or cfg["output.dir"]
    plot = cfg["output.plot"] if plot is None else plot
    points = sweep_points(cfg)
    resolved = [(label, pc, resolve(pc)) for label, pc in points]
    for _, pc, res in resolved:
        check_derived(pc, res)
    summary = RunSummary([])
    reps, seed = cfg["run.reps"], cfg["run.seed"]
    if cfg["study.kind"] == "energy":
        by_N = {res.N: res for _, _, res in resolved}
        rows = energy_to_target(lambda N: by_N[N].scenario(), list(by_N), cfg["study.target"],
                                reps, seed)
        summary.energy_rows = rows
        summary.vote = energy_vote(rows)
        for (label, pc, res), row in zip(resolved, rows):
            csv_path, man_path = _write_point(pc, res, row.stats, out_dir)
            summary.points.append(PointResult(label, csv_path, man_path, row.stats, res,
                                              run_checks(res)))
        table = os.path.join(out_dir, f"{cfg['name']}__energy.csv")
        atomic_write(table, render_energy_table(rows, summary.vote))
        manifest = os.path.join(out_dir, f"{cfg['name']}.manifest")
        atomic_write(manifest, cfg.render({"vote_fraction": repr(summary.vote)}))
        summary.extra_files += [table, manifest]
    else:
        for label, pc, res in resolved:
            stats = mc_run(MonteCarloConfig(reps, seed, res.scenario()))
            csv_path, man_path = _write_point(pc, res, stats, out_dir)
            summary.points.append(PointResult(label, csv_path, man_path, stats, res,
                                              run_checks(res)))
    if plot:
        from .plotting import plot_summary

        summary.extra_files += plot_summary(cfg, summary, out_dir)
    return summary


def render_energy_table(rows, vote):
    lines = [ENERGY_HEADER]
    for r in rows:
        reached = int(np.sum(np.isfinite(r.rep_energy)))
        lines.append(",".join([
            str(r.N), _cell(r.total_energy if r.reached else None), "true" if r.reached else "false",
            "" if r.k_hit is None else str(r.k_hit), _cell(r.floor_estimate), str(reached),
            _cell(vote),
        ]))
    return "\n".join(lines) + "\n"


def bound_table(cfg):
    """Bound curves only (no simulation): {label: (ks, columns, resolved)}."""
    out = {}
    for label, pc in sweep_points(cfg):
        res = resolve(pc)
        ks = np.arange(pc["run.k_max"] + 1)
        out[label] = (ks, bound_columns(res, ks), res)
    return out


def render_bounds_csv(ks, cols):
    lines = ["k,bound_thm1,bound_thm2a,bound_thm2b,bound_central"]
    for i, k in enumerate(ks):
        cells = [str(int(k))] + [_cell(None if cols[c] is None else cols[c][i])
                                 for c in ("thm1", "thm2a", "thm2b", "central")]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"

