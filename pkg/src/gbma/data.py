"""Dataset ingestion and synthetic scenario generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DatasetFormatError, EmptyDatasetError
from .model import LocalizationEnsemble

MSD_FEATURES = 90


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    standardized: bool = False
    theta_true: np.ndarray | None = None
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    target_mean: float | None = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def standardize(X, y):
    """Zero-mean, unit-variance features and a centred target.

    Constant columns are left centred (std treated as 1).
    """
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    ym = float(y.mean())
    return (X - mean) / std, y - ym, mean, std, ym


def load_msd_csv(path, limit=None, standardize_features=True):
    """Read ``year,attr1,...,attr90`` rows, keeping the first ``limit`` in file order."""
    rows, years = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != MSD_FEATURES + 1:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {MSD_FEATURES + 1} columns, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            years.append(vals[0])
            rows.append(vals[1:])
            if limit is not None and len(rows) >= limit:
                break
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    X = np.array(rows)
    y = np.array(years)
    if not standardize_features:
        return Dataset(X, y)
    Xs, ys, mean, std, ym = standardize(X, y)
    return Dataset(Xs, ys, True, None, mean, std, ym)


def gen_synthetic_ridge(N, d, seed, conditioning=1.0, noise_std=0.1):
    """Gaussian features whose population second moment has condition number ``conditioning``.

    Column j is scaled by sqrt(conditioning^(-j/(d-1))), so E[x x^T] has
    eigenvalues spread geometrically over [1/conditioning, 1].  Targets are
    y = x . theta_true + noise_std * e with theta_true = ones(d)/sqrt(d).
    Rows are drawn in order from one stream, so a smaller N is a prefix of a
    larger one under the same seed.
    """
    if N < 1 or d < 1:
        raise ValueError("N and d must be >= 1")
    if conditioning < 1:
        raise ValueError("conditioning must be >= 1")
    feat_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    expo = np.arange(d) / (d - 1) if d > 1 else np.zeros(1)
    scales = np.sqrt(conditioning ** (-expo))
    X = feat_rng.standard_normal((N, d)) * scales
    theta_true = np.ones(d) / math.sqrt(d)
    y = X @ theta_true + noise_std * noise_rng.standard_normal(N)
    return Dataset(X, y, False, theta_true)


def gen_localization_field(N, field_size=100.0, source=(60.0, 60.0), exclusion_radius=8.0,
                           A=100.0, snr_db=math.inf, seed=0, guard_radius=1e-3):
    """Sensors uniform over a square field, rejected inside the exclusion radius.

    Measurements are A/|theta_true - r_n|^2 plus Gaussian noise with
    variance mean(s_n^2) / 10^(snr_db/10).  Positions and noise use separate
    streams and candidates are drawn in fixed-size chunks, so a smaller
    field is a prefix of a larger one under the same seed.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    source = np.asarray(source, dtype=float)
    corners = np.array([[0, 0], [0, field_size], [field_size, 0], [field_size, field_size]])
    if exclusion_radius >= field_size or np.all(
        np.linalg.norm(corners - source, axis=1) <= exclusion_radius
    ):
        raise ConfigError("exclusion radius covers the whole field")
    pos_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    kept, drawn = [], 0
    chunk = 256
    while sum(len(k) for k in kept) < N:
        cand = pos_rng.uniform(0.0, field_size, (chunk, 2))
        drawn += chunk
        kept.append(cand[np.linalg.norm(cand - source, axis=1) > exclusion_radius])
        if drawn > 1000 * max(N, chunk) and sum(len(k) for k in kept) < N:
            raise ConfigError("rejection sampling is stuck; exclusion zone too large")
    positions = np.vstack(kept)[:N]
    q = np.sum((positions - source) ** 2, axis=1)
    signal = A / q
    noise = noise_rng.standard_normal(N)
    if math.isinf(snr_db) and snr_db > 0:
        x = signal
    else:
        var = float(np.mean(signal**2)) / 10 ** (snr_db / 10)
        x = signal + math.sqrt(var) * noise
    return LocalizationEnsemble(positions, x, A, guard_radius, theta_true=source)
