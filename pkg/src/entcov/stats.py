"""Simulation and asymptotic tools: Gaussian sampling, the Delta statistic,
information and sandwich matrices, strong-convexity constants, finite-sample
bounds and a Monte Carlo check of the normal limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, NotPositiveDefinite, SingularInformation, UnsupportedLink
from .model import AffineSubspace
from .solve import SolveOptions, fit
from .specfun import (
    LinkFunction,
    LinkKind,
    SymMatrix,
    _raw,
    as_sym,
    dgrad_conjugate,
    eig_floor,
    link_gradient,
    link_inverse_gradient,
)

__all__ = [
    "rng_for",
    "sample_gaussian",
    "simulate_gaussian",
    "delta_stat",
    "info_matrix",
    "AsymptoticReport",
    "sandwich_covariance",
    "gaussian_fourth_moment",
    "strong_convexity_mu",
    "mu_closed_form",
    "BoundInputs",
    "finite_sample_bound",
    "Radius",
    "epsilon_radius",
    "CltSummary",
    "clt_check",
    "ExceedanceSummary",
    "exceedance_check",
]

FourthMoment = Union[str, NDArray[np.float64], Callable[[NDArray, NDArray], float]]


# sampling -------------------------------------------------------------------


def rng_for(seed: int, rep: int = 0) -> np.random.Generator:
    """Philox stream for replication ``rep`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def _cholesky(Sigma0) -> NDArray[np.float64]:
    a = as_sym(Sigma0).array
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Sigma0 must be positive definite") from exc


def sample_gaussian(Sigma0, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """n x m matrix with i.i.d. N(0, Sigma0) rows."""
    if n < 1:
        raise ValueError("n must be at least 1")
    chol = _cholesky(Sigma0)
    z = rng.standard_normal((n, chol.shape[0]))
    return z @ chol.T


def simulate_gaussian(Sigma0, n: int, seed: int, rep: int = 0) -> SymMatrix:
    """Sample covariance X^T X / n of n draws from N(0, Sigma0).

    The draws are a deterministic function of ``(seed, rep)``.
    """
    x = sample_gaussian(Sigma0, n, rng_for(seed, rep))
    s = x.T @ x / n
    return SymMatrix._trusted(0.5 * (s + s.T))


# first and second order quantities -------------------------------------------


def _basis_arrays(basis, m: int | None = None) -> list[NDArray[np.float64]]:
    mats = [b.array for b in basis.basis] if isinstance(basis, AffineSubspace) else [_raw(b) for b in basis]
    if m is not None and any(b.shape != (m, m) for b in mats):
        raise DimensionMismatch(f"basis matrices must be {m}x{m}")
    return mats


def delta_stat(S_n, Sigma0, basis: AffineSubspace | Sequence[ArrayLike]) -> NDArray[np.float64]:
    """Delta_i = <S_n - Sigma0, A_i> for an orthonormal basis A_1..A_d."""
    diff = _raw(S_n) - _raw(Sigma0)
    if diff.ndim != 2 or diff.shape[0] != diff.shape[1]:
        raise DimensionMismatch("S_n and Sigma0 must be square matrices of equal size")
    mats = _basis_arrays(basis, diff.shape[0])
    return np.array([float(np.vdot(diff, a)) for a in mats])


def info_matrix(link: LinkFunction, theta0: ArrayLike, sub: AffineSubspace) -> NDArray[np.float64]:
    """I_ij = <A_i, D(grad F*)(L(theta0))[A_j]>, the Hessian of the empirical loss."""
    L0 = sub.point(theta0)
    mats = _basis_arrays(sub)
    cols = [dgrad_conjugate(link, L0, a).array for a in mats]
    info = np.array([[float(np.vdot(a, c)) for c in cols] for a in mats])
    return 0.5 * (info + info.T)


@dataclass(frozen=True)
class AsymptoticReport:
    """Information I, score covariance Omega and sandwich I^-1 Omega I^-1."""

    info: NDArray[np.float64]
    omega: NDArray[np.float64]
    sandwich: NDArray[np.float64]


def gaussian_fourth_moment(Sigma0) -> Callable[[NDArray, NDArray], float]:
    """S[A, B] = Cov(<XX^T, A>, <XX^T, B>) = 2 tr(A Sigma0 B Sigma0) for X ~ N(0, Sigma0)."""
    s = _raw(Sigma0)
    return lambda a, b: 2.0 * float(np.trace(a @ s @ b @ s))


def sandwich_covariance(
    link: LinkFunction,
    theta0: ArrayLike,
    sub: AffineSubspace,
    S_op: FourthMoment = "gaussian",
) -> AsymptoticReport:
    """Asymptotic covariance of sqrt(n)(theta_hat - theta0).

    Parameters
    ----------
    S_op : {"gaussian"}, ndarray or callable
        ``"gaussian"`` uses the analytic map at Sigma0 = grad F*(L(theta0)).
        An ``N x m`` array of draws gives the empirical covariance of
        ``<x x^T - Sigma0, A_i>``, centred at the true Sigma0.  A callable
        ``S_op(A, B)`` is used as is.
    """
    mats = _basis_arrays(sub)
    info = info_matrix(link, theta0, sub)
    w = np.linalg.eigvalsh(info)
    if w.size == 0 or w[0] <= 1e-12 * max(1.0, float(w[-1])):
        raise SingularInformation("information matrix is singular")
    sigma0 = link_inverse_gradient(link, sub.point(theta0)).array
    if isinstance(S_op, str):
        if S_op != "gaussian":
            raise ValueError(f"unknown fourth-moment model {S_op!r}")
        S_op = gaussian_fourth_moment(sigma0)
    if callable(S_op):
        omega = np.array([[S_op(a, b) for b in mats] for a in mats], dtype=float)
    else:
        x = np.asarray(S_op, dtype=float)
        if x.ndim != 2 or x.shape[1] != sub.m:
            raise DimensionMismatch(f"samples must be an N x {sub.m} array")
        # <x x^T, A> = x^T A x for every draw at once
        scores = np.stack([np.einsum("ni,ij,nj->n", x, a, x) - np.vdot(sigma0, a) for a in mats], axis=1)
        omega = scores.T @ scores / x.shape[0]
    omega = 0.5 * (omega + omega.T)
    inv = np.linalg.inv(info)
    sand = inv @ omega @ inv
    return AsymptoticReport(info=info, omega=omega, sandwich=0.5 * (sand + sand.T))


# finite-sample theory -----------------------------------------------------------


def mu_closed_form(link: LinkFunction, Sigma0, epsilon: float) -> float:
    """Strong-convexity constant of the population loss in the epsilon-ball.

    Power(q=1): 1.  LogDet: lmin^2 / (1 + epsilon lmin)^2.  VonNeumann:
    1 / (e^epsilon ||Sigma0||) with the operator norm.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    w = as_sym(Sigma0).eigenvalues
    if w[0] <= eig_floor(w):
        raise NotPositiveDefinite("Sigma0 must be positive definite")
    if link.kind is LinkKind.POWER and link.param == 1:
        return 1.0
    if link.kind is LinkKind.LOGDET:
        lmin = float(w[0])
        return lmin**2 / (1.0 + epsilon * lmin) ** 2
    if link.kind is LinkKind.VONNEUMANN:
        return 1.0 / (math.exp(epsilon) * float(w[-1]))
    raise UnsupportedLink(f"no closed-form strong-convexity constant for the {link.name} link")


def strong_convexity_mu(
    link: LinkFunction, theta0: ArrayLike, sub: AffineSubspace, epsilon: float
) -> float:
    """:func:`mu_closed_form` at Sigma0 = grad F*(L(theta0))."""
    if not (link.kind is LinkKind.POWER and link.param == 1) and link.kind not in (
        LinkKind.LOGDET,
        LinkKind.VONNEUMANN,
    ):
        raise UnsupportedLink(f"no closed-form strong-convexity constant for the {link.name} link")
    sigma0 = link_inverse_gradient(link, sub.point(theta0))
    return mu_closed_form(link, sigma0, epsilon)


@dataclass(frozen=True)
class BoundInputs:
    mu: float
    epsilon: float
    n: int
    d: int
    op_norm_sigma0: float

    def __post_init__(self):
        for name in ("mu", "epsilon", "n", "d", "op_norm_sigma0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def finite_sample_bound(b: BoundInputs) -> float:
    """Upper bound on P(||theta_hat - theta0|| > epsilon), in [0, 2d]."""
    s = b.op_norm_sigma0
    if b.epsilon <= 2.0 * s**2 * math.sqrt(b.d) / b.mu:
        expo = b.mu**2 * b.epsilon**2 * b.n / (32.0 * b.d * s**2)
    else:
        expo = b.mu * b.epsilon * b.n / (16.0 * math.sqrt(b.d) * s)
    return 2.0 * b.d * math.exp(-expo)


@dataclass(frozen=True)
class Radius:
    """Radius holding with probability 1 - delta, and whether n is large enough."""

    epsilon: float
    valid: bool


def epsilon_radius(delta: float, n: int, d: int, mu: float, op_norm_sigma0: float) -> Radius:
    """(4||Sigma0|| / mu) sqrt((2d/n) log(2d/delta)), valid when n >= 8 log(2d/delta)."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1 or d < 1 or mu <= 0 or op_norm_sigma0 <= 0:
        raise ValueError("n, d, mu and ||Sigma0|| must be positive")
    log_term = math.log(2 * d / delta)
    eps = 4.0 * op_norm_sigma0 / mu * math.sqrt(2.0 * d / n * log_term)
    return Radius(epsilon=eps, valid=n >= 8.0 * log_term)


# Monte Carlo ---------------------------------------------------------------------


def _true_theta(link, sub, Sigma0):
    L0 = link_gradient(link, Sigma0)
    if sub.distance(L0) > 1e-8 * max(1.0, float(np.linalg.norm(L0.array))):
        raise ValueError("grad F(Sigma0) does not lie in the model")
    return sub.coords(L0)


def _fit_replications(link, sub, Sigma0, n, reps, seed, solver, opts):
    thetas, failures = [], 0
    for rep in range(reps):
        S_n = simulate_gaussian(Sigma0, n, seed, rep)
        try:
            res = fit(link, sub, S_n, solver=solver, opts=opts)
        except ValueError:
            failures += 1
            continue
        if not res.converged:
            failures += 1
            continue
        thetas.append(res.theta_hat)
    return thetas, failures


@dataclass(frozen=True)
class CltSummary:
    """Moments of sqrt(n) (theta_hat - theta0) whitened by the sandwich covariance."""

    reps: int
    failures: int
    mean: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    variance: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    max_abs_z: float = float("nan")

    @property
    def empty(self) -> bool:
        return self.reps - self.failures == 0


def clt_check(
    link: LinkFunction,
    sub: AffineSubspace,
    Sigma0,
    n: int,
    reps: int,
    seed: int,
    solver: str = "auto",
    opts: SolveOptions | None = None,
) -> CltSummary:
    """Fit ``reps`` simulated data sets and standardize the estimates.

    Each replication draws its own Philox substream.  The z-scores are
    ``sandwich^(-1/2) sqrt(n) (theta_hat - theta0)``, so under the normal
    limit each coordinate has mean 0 and variance 1.
    """
    if reps < 0:
        raise ValueError("reps must be non-negative")
    theta0 = _true_theta(link, sub, Sigma0)
    if reps == 0:
        return CltSummary(reps=0, failures=0)
    cov = sandwich_covariance(link, theta0, sub).sandwich
    w, u = np.linalg.eigh(cov)
    if w[0] <= 0:
        raise SingularInformation("sandwich covariance is not positive definite")
    whiten = (u / np.sqrt(w)) @ u.T
    thetas, failures = _fit_replications(link, sub, Sigma0, n, reps, seed, solver, opts)
    if not thetas:
        return CltSummary(reps=reps, failures=failures)
    z = (np.sqrt(n) * (np.array(thetas) - theta0)) @ whiten.T
    return CltSummary(
        reps=reps,
        failures=failures,
        mean=z.mean(axis=0),
        variance=z.var(axis=0, ddof=1) if len(z) > 1 else np.full(z.shape[1], np.nan),
        max_abs_z=float(np.max(np.abs(z))),
    )


@dataclass(frozen=True)
class ExceedanceSummary:
    frequency: float
    bound: float
    epsilon: float
    mu: float
    reps: int
    failures: int


def exceedance_check(
    link: LinkFunction,
    sub: AffineSubspace,
    Sigma0,
    n: int,
    reps: int,
    epsilon: float,
    seed: int,
    solver: str = "auto",
) -> ExceedanceSummary:
    """Empirical P(||theta_hat - theta0|| > epsilon) next to the finite-sample bound."""
    theta0 = _true_theta(link, sub, Sigma0)
    mu = mu_closed_form(link, Sigma0, epsilon)
    bound = finite_sample_bound(
        BoundInputs(mu=mu, epsilon=epsilon, n=n, d=sub.dim, op_norm_sigma0=float(as_sym(Sigma0).eigenvalues[-1]))
    )
    thetas, failures = _fit_replications(link, sub, Sigma0, n, reps, seed, solver, None)
    hits = sum(float(np.linalg.norm(t - theta0)) > epsilon for t in thetas)
    freq = hits / len(thetas) if thetas else float("nan")
    return ExceedanceSummary(frequency=freq, bound=bound, epsilon=epsilon, mu=mu, reps=reps, failures=failures)
