"""Local losses, the averaged objective and its constants.

Nodes are indexed from 0 in code.  All node averages go through
:func:`node_mean`, which reduces in ascending node order, so repeated
evaluation of the same quantity is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize

from .errors import (
    ConstantsUnavailableError,
    NoUniqueMinimizerError,
    ShapeError,
    SingularityError,
)

DENSE_EIG_MAX_DIM = 512


def as_param(theta, d=None):
    """Validate and return a parameter vector as a float64 array."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise ShapeError(f"parameter vector must be 1-d and non-empty, got shape {theta.shape}")
    if d is not None and theta.size != d:
        raise ShapeError(f"expected dimension {d}, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("parameter vector has non-finite entries")
    return theta


def node_mean(a):
    """(1/N) * sum over the leading axis, ascending index order."""
    a = np.asarray(a, dtype=float)
    return np.add.reduce(a, axis=0) / a.shape[0]


# ---------------------------------------------------------------------------
# single-node losses


@dataclass(frozen=True)
class RidgeLocalLoss:
    """f(theta) = 0.5 (x.theta - y)^2 + (lam/2) |theta|^2."""

    x: np.ndarray
    y: float
    lam: float = 0.5

    def value(self, theta):
        theta = as_param(theta, self.x.size)
        return 0.5 * (self.x @ theta - self.y) ** 2 + 0.5 * self.lam * (theta @ theta)

    def grad(self, theta):
        theta = as_param(theta, self.x.size)
        return (self.x @ theta - self.y) * self.x + self.lam * theta

    @property
    def lipschitz(self):
        return float(self.x @ self.x) + self.lam

    @property
    def strong_convexity(self):
        return self.lam

    def minimizer(self):
        # (x x^T + lam I) theta = y x  is solved by a multiple of x
        nx = float(self.x @ self.x)
        if nx + self.lam == 0:
            raise NoUniqueMinimizerError("zero feature vector with lam=0")
        return self.y * self.x / (nx + self.lam)


@dataclass(frozen=True)
class LocalizationLocalLoss:
    """f(theta) = (x - A / |theta - r|^2)^2 for one acoustic sensor at r."""

    r: np.ndarray
    x: float
    A: float
    guard_radius: float = 1e-3

    def _q(self, theta):
        theta = as_param(theta, 2)
        diff = theta - self.r
        q = float(diff @ diff)
        if q < self.guard_radius**2:
            raise SingularityError(
                f"theta is within {self.guard_radius} m of sensor at {self.r.tolist()}"
            )
        return diff, q

    def value(self, theta):
        _, q = self._q(theta)
        return (self.x - self.A / q) ** 2

    def grad(self, theta):
        diff, q = self._q(theta)
        return 4.0 * self.A * (self.x - self.A / q) * diff / q**2


# ---------------------------------------------------------------------------
# ensembles


class LossEnsemble:
    """N local losses of one kind, evaluated in vectorised form.

    Subclasses implement :meth:`values` and :meth:`grads`; everything else is
    derived from those two.
    """

    kind = "abstract"
    certified = False

    @property
    def n_nodes(self):
        raise NotImplementedError

    @property
    def dim(self):
        raise NotImplementedError

    def __len__(self):
        return self.n_nodes

    def values(self, theta):
        raise NotImplementedError

    def grads(self, theta):
        raise NotImplementedError

    def local_loss(self, n):
        raise NotImplementedError

    @property
    def losses(self):
        return [self.local_loss(n) for n in range(self.n_nodes)]

    def check_node(self, n):
        if not 0 <= n < self.n_nodes:
            raise IndexError(f"node index {n} outside [0, {self.n_nodes})")

    def weighted_grad_mean(self, theta, weights=None):
        """(1/N) sum_n w_n g_n(theta); unit weights when ``weights`` is None."""
        g = self.grads(theta)
        if weights is None:
            weights = np.ones(self.n_nodes)
        return node_mean(np.asarray(weights, dtype=float)[:, None] * g)

    def grad_sq_norms(self, theta):
        g = self.grads(theta)
        return np.einsum("nd,nd->n", g, g)

    def value(self, theta):
        return float(node_mean(self.values(theta)))

    def grad(self, theta):
        return self.weighted_grad_mean(theta)

    def snapshot(self, theta):
        """(F(theta), grad F(theta), sum_n |grad f_n(theta)|^2) from one evaluation."""
        g = self.grads(theta)
        return (float(node_mean(self.values(theta))), node_mean(g),
                float(np.add.reduce(np.einsum("nd,nd->n", g, g))))

    def minimizer(self):
        raise NotImplementedError

    @cached_property
    def theta_star(self):
        return self.minimizer()

    def set_theta_star(self, theta):
        """Pin the reference minimiser (clears the cached optimal value)."""
        self.__dict__["theta_star"] = as_param(theta, self.dim)
        self.__dict__.pop("f_star", None)

    @cached_property
    def f_star(self):
        return self.value(self.theta_star)


class RidgeEnsemble(LossEnsemble):
    """One regularised least-squares sample per node."""

    kind = "ridge"
    certified = True

    def __init__(self, X, y, lam=0.5):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeError(f"X must be (N, d) and y (N,), got {X.shape} and {y.shape}")
        if X.shape[0] < 1:
            raise ShapeError("an ensemble needs at least one node")
        if lam < 0:
            raise ValueError("lam must be >= 0")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("data contains non-finite values")
        self.X = X
        self.y = y
        self.lam = float(lam)
        self.row_sq = np.einsum("nd,nd->n", X, X)

    @property
    def n_nodes(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]

    def local_loss(self, n):
        self.check_node(n)
        return RidgeLocalLoss(self.X[n].copy(), float(self.y[n]), self.lam)

    def residuals(self, theta):
        theta = as_param(theta, self.dim)
        return self.X @ theta - self.y

    def values(self, theta):
        theta = as_param(theta, self.dim)
        res = self.residuals(theta)
        return 0.5 * res**2 + 0.5 * self.lam * (theta @ theta)

    def grads(self, theta):
        theta = as_param(theta, self.dim)
        return self.residuals(theta)[:, None] * self.X + self.lam * theta

    def weighted_grad_mean(self, theta, weights=None):
        # sum_n w_n (res_n x_n + lam theta), without materialising the N x d gradients
        theta = as_param(theta, self.dim)
        w = np.ones(self.n_nodes) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (self.n_nodes,):
            raise ShapeError(f"expected {self.n_nodes} weights, got {w.shape}")
        res = self.residuals(theta)
        return ((w * res) @ self.X + self.lam * np.add.reduce(w) * theta) / self.n_nodes

    def grad_sq_norms(self, theta):
        theta = as_param(theta, self.dim)
        res = self.residuals(theta)
        xt = self.X @ theta
        return res**2 * self.row_sq + 2 * self.lam * res * xt + self.lam**2 * (theta @ theta)

    def snapshot(self, theta):
        theta = as_param(theta, self.dim)
        N = self.n_nodes
        tt = theta @ theta
        xt = self.X @ theta
        res = xt - self.y
        value = float(np.add.reduce(0.5 * res**2 + 0.5 * self.lam * tt) / N)
        grad = (res @ self.X + self.lam * N * theta) / N
        sq = res**2 * self.row_sq + 2 * self.lam * res * xt + self.lam**2 * tt
        return value, grad, float(np.add.reduce(sq))

    def hessian(self):
        """H = (1/N) sum x x^T (without the regulariser)."""
        return self.X.T @ self.X / self.n_nodes

    def minimizer(self):
        return ridge_minimizer(self)

    def node_minimizers(self):
        return self.y[:, None] * self.X / (self.row_sq + self.lam)[:, None]


class LocalizationEnsemble(LossEnsemble):
    """Acoustic source localisation: one sensor per node, theta in R^2.

    The objective is neither convex nor Lipschitz-smooth, so constants are
    only available as user-supplied surrogates and are never certified.
    """

    kind = "localization"
    certified = False

    def __init__(self, positions, measurements, A, guard_radius=1e-3, theta_true=None):
        positions = np.ascontiguousarray(positions, dtype=float)
        measurements = np.asarray(measurements, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise ShapeError(f"positions must be (N, 2), got {positions.shape}")
        if measurements.shape != (positions.shape[0],):
            raise ShapeError("one measurement per sensor is required")
        if A <= 0:
            raise ValueError("source strength A must be positive")
        self.positions = positions
        self.measurements = measurements
        self.A = float(A)
        self.guard_radius = float(guard_radius)
        self.theta_true = None if theta_true is None else as_param(theta_true, 2)

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return 2

    def local_loss(self, n):
        self.check_node(n)
        return LocalizationLocalLoss(
            self.positions[n].copy(), float(self.measurements[n]), self.A, self.guard_radius
        )

    def _geometry(self, theta):
        theta = as_param(theta, 2)
        diff = theta - self.positions
        q = np.einsum("nd,nd->n", diff, diff)
        if np.any(q < self.guard_radius**2):
            n = int(np.argmin(q))
            raise SingularityError(
                f"theta={theta.tolist()} is within the guard radius of sensor {n}"
            )
        return diff, q

    def values(self, theta):
        _, q = self._geometry(theta)
        return (self.measurements - self.A / q) ** 2

    def grads(self, theta):
        diff, q = self._geometry(theta)
        res = self.measurements - self.A / q
        return (4.0 * self.A * res / q**2)[:, None] * diff

    def minimizer(self, start=None):
        """Local minimiser of F found by BFGS from ``start`` (default: the true source)."""
        if start is None:
            if self.theta_true is None:
                raise ConstantsUnavailableError("no starting point for the localisation minimiser")
            start = self.theta_true
        res = optimize.minimize(
            self.value, np.asarray(start, dtype=float), jac=self.grad, method="BFGS",
            options={"gtol": 1e-13, "maxiter": 10_000},
        )
        return as_param(res.x, 2)

    def basin_minimizer(self, theta0, beta, max_iter=20_000, gtol=1e-9, box=1.0):
        """Local minimiser in the basin of ``theta0``.

        Noiseless gradient descent with stepsize ``beta`` is run from theta0
        until the gradient is small, then polished by L-BFGS-B inside a box
        of half width ``box`` around the end point, so the result stays in
        the basin that the simulated iterates see.
        """
        theta = as_param(theta0, 2).copy()
        for _ in range(max_iter):
            g = self.grad(theta)
            if np.sqrt(g @ g) < gtol:
                break
            theta = theta - beta * g
        res = optimize.minimize(
            self.value, theta, jac=self.grad, method="L-BFGS-B",
            bounds=[(t - box, t + box) for t in theta],
            options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 10_000},
        )
        best = res.x if res.fun <= self.value(theta) else theta
        return as_param(best, 2)


# ---------------------------------------------------------------------------
# minimisers and constants


def local_grad(ensemble, n, theta):
    """Gradient of node ``n``'s loss at ``theta``."""
    ensemble.check_node(n)
    return ensemble.local_loss(n).grad(as_param(theta, ensemble.dim))


def global_value_and_grad(ensemble, theta):
    """(F(theta), grad F(theta)) with F the node average."""
    theta = as_param(theta, ensemble.dim)
    return ensemble.value(theta), ensemble.grad(theta)


def ridge_minimizer(ensemble):
    """Solve ((1/N) X^T X + lam I) theta = (1/N) X^T y."""
    if ensemble.kind != "ridge":
        raise TypeError("ridge_minimizer needs a ridge ensemble")
    N, d = ensemble.X.shape
    A = ensemble.hessian() + ensemble.lam * np.eye(d)
    b = ensemble.X.T @ ensemble.y / N
    if ensemble.lam == 0:
        rank = np.linalg.matrix_rank(A)
        if rank < d:
            raise NoUniqueMinimizerError(f"(1/N) X^T X has rank {rank} < d={d} and lam=0")
    theta = np.linalg.solve(A, b)
    # one step of iterative refinement keeps the relative residual near eps
    theta = theta + np.linalg.solve(A, b - A @ theta)
    return theta


@dataclass(frozen=True)
class ObjectiveConstants:
    mu: float
    L: float
    L_bar: float
    delta: float
    r0_sq: float
    certified: bool = True
    theta_star: np.ndarray = field(default=None, repr=False, compare=False)
    L_n: np.ndarray = field(default=None, repr=False, compare=False)
    node_spread: float | None = None

    def __post_init__(self):
        if self.mu < 0 or self.L <= 0 or self.L_bar <= 0:
            raise ValueError(f"invalid constants mu={self.mu}, L={self.L}, L_bar={self.L_bar}")
        if self.mu > self.L * (1 + 1e-12):
            raise ValueError(f"mu={self.mu} exceeds L={self.L}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def delta_covers_nodes(self):
        """Whether delta bounds every |theta* - theta*_n| (needed by the fading bound)."""
        return self.node_spread is None or self.node_spread <= self.delta


def default_delta(r0_sq):
    return 2.0 * (np.sqrt(r0_sq) + 1.0)


def _extreme_eigenvalues(H):
    d = H.shape[0]
    if d <= DENSE_EIG_MAX_DIM:
        w = np.linalg.eigvalsh(H)
        return float(w[0]), float(w[-1])
    from scipy.sparse.linalg import LinearOperator, eigsh

    hi = float(eigsh(H, k=1, which="LA", tol=1e-12, return_eigenvectors=False)[0])
    # smallest eigenvalue through the top of hi I - H; the SA mode stalls on
    # the large null space of H when N < d
    shifted = LinearOperator(H.shape, matvec=lambda v: hi * v - H @ v, dtype=float)
    top = float(eigsh(shifted, k=1, which="LA", tol=1e-12, return_eigenvectors=False)[0])
    return hi - top, hi


def compute_constants(ensemble, theta0, delta=None, surrogate=None):
    """Strong convexity, smoothness and geometry constants of F.

    For ridge ensembles everything is exact: mu and L are the extreme
    eigenvalues of H + lam I, L_n = |x_n|^2 + lam.  Localisation ensembles
    need ``surrogate={'mu':..., 'L':..., 'L_bar':...}`` and come back flagged
    as non-certified.
    """
    theta0 = as_param(theta0, ensemble.dim)
    if ensemble.kind == "ridge":
        lo, hi = _extreme_eigenvalues(ensemble.hessian())
        lam = ensemble.lam
        mu, L = max(lo, 0.0) + lam, hi + lam
        L_n = ensemble.row_sq + lam
        L_bar = float(np.max(L_n))
        theta_star = ensemble.theta_star
        spread = float(np.max(np.linalg.norm(ensemble.node_minimizers() - theta_star, axis=1)))
        certified = True
    else:
        if surrogate is None:
            raise ConstantsUnavailableError(
                f"{ensemble.kind} objective has no derivable constants; supply surrogates"
            )
        mu, L, L_bar = float(surrogate["mu"]), float(surrogate["L"]), float(surrogate["L_bar"])
        L_n, spread, certified = None, None, False
        theta_star = ensemble.theta_star
    r0_sq = float(np.sum((theta0 - theta_star) ** 2))
    if delta is None:
        delta = default_delta(r0_sq)
    return ObjectiveConstants(
        mu=float(mu), L=float(L), L_bar=L_bar, delta=float(delta), r0_sq=r0_sq,
        certified=certified, theta_star=theta_star, L_n=L_n, node_spread=spread,
    )


@dataclass
class Lemma5Report:
    trials: int
    L: float
    violations: list
    worst_lower_gap: float
    worst_upper_gap: float

    @property
    def passed(self):
        return not self.violations


def lemma5_property_check(ensemble, trials, rng, L=None, half_width=5.0, rtol=1e-10):
    """Check 1/(2L)|dg|^2 <= F(b)-F(a)-<g(a),b-a> <= L/2 |a-b|^2 on random pairs.

    Pairs are drawn uniformly from a box of the given half width around the
    minimiser.  ``L`` defaults to the computed smoothness constant.
    """
    if ensemble.kind != "ridge":
        raise TypeError("the co-coercivity check needs a certified (ridge) ensemble")
    if L is None:
        L = compute_constants(ensemble, ensemble.theta_star).L
    rng = np.random.default_rng(rng)
    center = ensemble.theta_star
    violations = []
    worst_lo = worst_hi = -np.inf
    for t in range(trials):
        a = center + rng.uniform(-half_width, half_width, ensemble.dim)
        b = center + rng.uniform(-half_width, half_width, ensemble.dim)
        ga, gb = ensemble.grad(a), ensemble.grad(b)
        mid = ensemble.value(b) - ensemble.value(a) - ga @ (b - a)
        lower = (gb - ga) @ (gb - ga) / (2 * L)
        upper = 0.5 * L * ((a - b) @ (a - b))
        slack = rtol * max(1.0, abs(ensemble.value(a)), abs(ensemble.value(b)))
        worst_lo = max(worst_lo, lower - mid)
        worst_hi = max(worst_hi, mid - upper)
        if lower > mid + slack or mid > upper + slack:
            violations.append(t)
    return Lemma5Report(trials, L, violations, worst_lo, worst_hi)
