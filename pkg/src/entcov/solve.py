"""Bregman estimators: projected gradient (dual and primal), cyclic Bregman
projections, the Jordan-algebra closed form and positive definite completion.

The estimator maximizes ``g_n(L) = -F*(L) + <L, S_n>`` over ``L`` in an affine
set, or equivalently minimizes ``F(Sigma) - <A0, Sigma>`` over
``Sigma - S_n`` orthogonal to the set.  Both are certified by the KKT pair
``L_hat in L`` and ``Sigma_hat - S_n in L^perp``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .breg import KktReport, kkt_from_pair
from .errors import (
    InfeasibleStart,
    NoInterior,
    NoMinimizer,
    NotJordan,
    NotPositiveDefinite,
    ProjectionNotPD,
)
from .model import (
    AffineSubspace,
    GraphSpec,
    contains_identity,
    is_jordan_algebra,
    subspace_from_graph,
)
from .specfun import (
    LinkFunction,
    LinkKind,
    SymMatrix,
    _loewner,
    _raw,
    as_sym,
    eig_floor,
    link_gradient,
)

__all__ = [
    "Status",
    "SolveOptions",
    "FitResult",
    "fit_dual_pgd",
    "fit_primal_pgd",
    "line_search_1d",
    "fit_bregman_projection",
    "fit_jordan_closed_form",
    "pd_completion",
    "fit",
    "default_primal_start",
    "jordan_applicable",
    "SOLVERS",
]

log = logging.getLogger(__name__)

TINY_STEP = 1e-16
TINY_STEP_COUNT = 5
BOUNDARY_EIG = 1e-9
MIN_TRIAL_STEP = 1e-20
STALL_RTOL = 1e-14


class Status(str, Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    BOUNDARY_DIVERGENCE = "BoundaryDivergence"
    INFEASIBLE_START = "InfeasibleStart"


@dataclass(frozen=True)
class SolveOptions:
    max_iter: int = 10000
    tol_kkt: float = 1e-8
    backtrack_beta: float = 0.5
    backtrack_c: float = 1e-4
    step_init: float = 1.0
    boundary_guard: float = 1e-12

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not 0 < self.backtrack_beta < 1:
            raise ValueError("backtrack_beta must lie in (0, 1)")
        for name in ("tol_kkt", "backtrack_c", "step_init", "boundary_guard"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class FitResult:
    """Outcome of a Bregman fit.

    ``theta_hat`` holds the coordinates of ``l_hat`` in the subspace basis
    when a subspace was given.  ``info`` carries solver diagnostics.
    """

    sigma_hat: SymMatrix
    l_hat: SymMatrix
    theta_hat: NDArray[np.float64] | None
    kkt: KktReport
    iters: int
    status: Status
    solver: str = ""
    info: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _resolve(opts: SolveOptions | None) -> SolveOptions:
    return SolveOptions() if opts is None else opts


def _eigh(a):
    return np.linalg.eigh(0.5 * (a + a.T))


def _rebuild(u, vals):
    out = (u * vals) @ u.T
    return 0.5 * (out + out.T)


def _finish(link, sub, sigma, L, S, iters, status, solver, opts, **info) -> FitResult:
    kkt = kkt_from_pair(link, sub, sigma, L, S)
    if status is Status.CONVERGED and not kkt.ok(opts.tol_kkt):
        status = Status.MAX_ITER
        info.setdefault("message", "final KKT check failed")
    return FitResult(
        sigma_hat=SymMatrix._trusted(sigma),
        l_hat=SymMatrix._trusted(L),
        theta_hat=sub.coords(L),
        kkt=kkt,
        iters=iters,
        status=status,
        solver=solver,
        info=info,
    )


# dual projected gradient -------------------------------------------------


def _dual_eval(link, sub, sigma, a0, guard):
    w, u = _eigh(sigma)
    if w[0] <= guard:
        return None
    obj = float(np.sum(link.phi(w))) - float(np.vdot(a0, sigma))
    L = _rebuild(u, link.phi_prime(w))
    G = sub.project_complement(L - a0)
    return obj, L, G, float(w[0])


def fit_dual_pgd(
    link: LinkFunction,
    sub: AffineSubspace,
    S_n,
    opts: SolveOptions | None = None,
    callback: Callable[[int, NDArray[np.float64], float], None] | None = None,
) -> FitResult:
    """Minimize F(Sigma) - <A0, Sigma> over Sigma in (S_n + L^perp) and PD.

    Starts at ``Sigma = S_n`` and moves along ``-Pi_perp(L - A0)``, so every
    iterate stays dually feasible.  Trial steps use the Barzilai-Borwein
    length and are shortened by backtracking until the iterate is PD and the
    objective has decreased.  ``callback(t, Sigma_t, objective_t)`` is
    invoked for the start point and after every accepted step.
    """
    opts = _resolve(opts)
    S = as_sym(S_n).array
    w0 = np.linalg.eigvalsh(S)
    if w0[0] <= max(eig_floor(w0), opts.boundary_guard):
        raise InfeasibleStart("S_n must be positive definite to start the dual iteration")
    a0 = sub.offset.array
    guard = opts.boundary_guard

    sigma = S.copy()
    obj, L, G, lmin = _dual_eval(link, sub, sigma, a0, guard)
    if callback is not None:
        callback(0, sigma, obj)
    prev = None
    tiny = 0
    status = Status.MAX_ITER
    it = 0
    message = ""
    for it in range(opts.max_iter + 1):
        gnorm2 = float(np.vdot(G, G))
        if np.sqrt(gnorm2) <= opts.tol_kkt:
            status = Status.CONVERGED
            break
        if it == opts.max_iter:
            break
        s = opts.step_init
        if prev is not None:
            dx = sigma - prev[0]
            dg = G - prev[1]
            sy = float(np.vdot(dx, dg))
            if sy > 0:
                s = float(np.vdot(dx, dx)) / sy
        accepted = None
        while s >= MIN_TRIAL_STEP:
            trial = sigma - s * G
            ev = _dual_eval(link, sub, trial, a0, guard)
            if ev is not None:
                o2, L2, G2, lmin2 = ev
                armijo = o2 <= obj - opts.backtrack_c * s * gnorm2
                # slope still negative at the trial point: by convexity the
                # objective decreased along the whole segment, even when the
                # decrease is below the rounding level of F
                if armijo or float(np.vdot(G2, G)) >= 0:
                    accepted = (trial, o2, L2, G2, lmin2)
                    break
            s *= opts.backtrack_beta
        if accepted is None:
            tiny += 1
            message = "backtracking exhausted"
        else:
            small = s < TINY_STEP or abs(accepted[1] - obj) <= STALL_RTOL * max(1.0, abs(obj))
            tiny = tiny + 1 if small else 0
            prev = (sigma, G)
            sigma, obj, L, G, lmin = accepted
            if callback is not None:
                callback(it + 1, sigma, obj)
        if tiny >= TINY_STEP_COUNT:
            if lmin < BOUNDARY_EIG:
                status = Status.BOUNDARY_DIVERGENCE
                message = "iterates pinned at the PSD boundary"
                break
            if accepted is None:
                message = "stalled before reaching the KKT tolerance"
                break
    return _finish(link, sub, sigma, L, S, it, status, "dual-pgd", opts, message=message)


# primal projected gradient -------------------------------------------------


def _primal_eval(link, sub, L, S, guard):
    w, u = _eigh(L)
    if not np.all(link.in_gradient_image(w)):
        return None
    x = link.phi_prime_inverse(w)
    if not np.all(np.isfinite(x)) or np.min(x) <= guard:
        return None
    sigma = _rebuild(u, x)
    val = -float(np.sum(link.phi_conjugate(w))) + float(np.vdot(L, S))
    if not np.isfinite(val):
        return None
    G = sub.project_linear(S - sigma)
    return val, sigma, G, float(np.min(x))


def default_primal_start(link: LinkFunction, sub: AffineSubspace, S_n) -> SymMatrix:
    """grad F(cI) with c = tr(S_n)/m, projected onto the affine set."""
    S = _raw(S_n)
    m = S.shape[0]
    c = float(np.trace(S)) / m
    if not c > 0:
        c = 1.0
    start = sub.project(float(link.phi_prime(c)) * np.eye(m))
    if not np.all(link.in_gradient_image(start.eigenvalues)):
        raise InfeasibleStart("projected default start lies outside the gradient image")
    return start


def fit_primal_pgd(
    link: LinkFunction,
    sub: AffineSubspace,
    L0,
    S_n,
    opts: SolveOptions | None = None,
    callback: Callable[[int, NDArray[np.float64], float], None] | None = None,
) -> FitResult:
    """Maximize g_n(L) = -F*(L) + <L, S_n> over L in the affine set.

    ``L0`` must be a point of the set inside the gradient image; ``None``
    selects :func:`default_primal_start`.  S_n only enters through its
    projection onto the linear part, so it need not be positive definite.
    ``callback(t, L_t, g_n(L_t))`` mirrors the dual variant.
    """
    opts = _resolve(opts)
    S = as_sym(S_n).array
    L0 = default_primal_start(link, sub, S) if L0 is None else as_sym(L0)
    L = L0.array.copy()
    if sub.distance(L) > 1e-8 * max(1.0, float(np.linalg.norm(L))):
        raise InfeasibleStart("L0 is not in the affine set")
    guard = opts.boundary_guard
    ev = _primal_eval(link, sub, L, S, guard)
    if ev is None:
        raise InfeasibleStart("L0 is outside the gradient image of the link")
    val, sigma, G, smin = ev
    if callback is not None:
        callback(0, L, val)

    prev = None
    tiny = 0
    status = Status.MAX_ITER
    it = 0
    message = ""
    for it in range(opts.max_iter + 1):
        gnorm2 = float(np.vdot(G, G))
        if np.sqrt(gnorm2) <= opts.tol_kkt:
            status = Status.CONVERGED
            break
        if it == opts.max_iter:
            break
        s = opts.step_init
        if prev is not None:
            dx = L - prev[0]
            dg = prev[1] - G  # gradient of -g_n changes by -(G - G_prev)
            sy = float(np.vdot(dx, dg))
            if sy > 0:
                s = float(np.vdot(dx, dx)) / sy
        accepted = None
        while s >= MIN_TRIAL_STEP:
            trial = L + s * G
            ev = _primal_eval(link, sub, trial, S, guard)
            if ev is not None:
                v2, sig2, G2, smin2 = ev
                armijo = v2 >= val + opts.backtrack_c * s * gnorm2
                if armijo or float(np.vdot(G2, G)) >= 0:
                    accepted = (trial, v2, sig2, G2, smin2)
                    break
            s *= opts.backtrack_beta
        if accepted is None:
            tiny += 1
            message = "backtracking exhausted"
        else:
            small = s < TINY_STEP or abs(accepted[1] - val) <= STALL_RTOL * max(1.0, abs(val))
            tiny = tiny + 1 if small else 0
            prev = (L, G)
            L, val, sigma, G, smin = accepted
            if callback is not None:
                callback(it + 1, L, val)
        if tiny >= TINY_STEP_COUNT:
            if smin < BOUNDARY_EIG:
                status = Status.BOUNDARY_DIVERGENCE
                message = "iterates pinned at the boundary of the gradient image"
                break
            if accepted is None:
                message = "stalled before reaching the KKT tolerance"
                break
    return _finish(link, sub, sigma, L, S, it, status, "primal-pgd", opts, message=message)


# one-dimensional Bregman projection ---------------------------------------


def _pd_interval(sigma, B):
    """Open interval of lambda keeping sigma + lambda B positive definite."""
    w, u = _eigh(sigma)
    r = (u / np.sqrt(w)) @ u.T
    nu = np.linalg.eigvalsh(r @ B @ r)
    pos, neg = nu[nu > 0], nu[nu < 0]
    lo = float(np.max(-1.0 / pos)) if pos.size else -np.inf
    hi = float(np.min(-1.0 / neg)) if neg.size else np.inf
    return lo, hi


def _offdiag_pair(B):
    """(i, j, scale) when B = scale * (e_i e_j^T + e_j e_i^T), else None."""
    nz = np.argwhere(np.abs(B) > 0)
    if len(nz) != 2:
        return None
    (i, j), (k, l) = nz
    if i == j or (i, j) != (l, k) or B[i, j] != B[j, i]:
        return None
    i, j = min(i, j), max(i, j)
    return int(i), int(j), float(B[i, j])


def _shifted_cubic(lam_s, sigma, i, j, c):
    """Stationary point of -log det + lam_s/2 tr(.^2) along e_i e_j^T + e_j e_i^T.

    With W the Schur complement of the {i, j} block, the derivative of the
    objective in t is  2(W12 + t)/(det W - 2 t W12 - t^2) + lam_s (2 s_ij + 2t) - c.
    Clearing the denominator leaves a cubic; the admissible root keeps
    W11 W22 > (W12 + t)^2.  Returns None when the selection is ambiguous.
    """
    m = sigma.shape[0]
    a_idx = [i, j]
    c_idx = [k for k in range(m) if k not in a_idx]
    W = sigma[np.ix_(a_idx, a_idx)]
    if c_idx:
        cross = sigma[np.ix_(a_idx, c_idx)]
        W = W - cross @ np.linalg.solve(sigma[np.ix_(c_idx, c_idx)], cross.T)
    w11, w22, w12 = W[0, 0], W[1, 1], W[0, 1]
    det = w11 * w22 - w12 * w12
    a = 2.0 * lam_s
    b = 2.0 * lam_s * sigma[i, j] - c
    coeffs = [-a, -2.0 * a * w12 - b, a * det - 2.0 * b * w12 + 2.0, b * det + 2.0 * w12]
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.max(np.abs(roots))))
    real = roots[np.abs(roots.imag) <= 1e-10 * scale].real
    ok = [t for t in real if w11 * w22 - (w12 + t) ** 2 > 1e-12 * max(1.0, w11 * w22)]
    if len(ok) != 1:
        return None
    return float(ok[0])


def line_search_1d(link: LinkFunction, Sigma, B, c: float) -> float:
    """argmin over lambda of F(Sigma + lambda B) - lambda c.

    For the shifted link with ``B`` proportional to ``e_i e_j^T + e_j e_i^T``
    the stationarity condition is a cubic solved in closed form.  Otherwise a
    safeguarded Newton iteration runs on a bracket inside the interval where
    ``Sigma + lambda B`` stays positive definite.
    """
    sigma = as_sym(Sigma).array
    B = _raw(B)
    w = np.linalg.eigvalsh(sigma)
    if w[0] <= eig_floor(w):
        raise NoInterior("Sigma is not positive definite, no interior lambda exists")
    if not np.any(B):
        raise NoMinimizer("direction B is zero")

    if link.kind is LinkKind.SHIFTED:
        pair = _offdiag_pair(B)
        if pair is not None:
            i, j, scale = pair
            t = _shifted_cubic(link.param, sigma, i, j, c / scale)
            if t is not None:
                return t / scale
    return _line_search_newton(link, sigma, B, c)


def _line_search_newton(link, sigma, B, c) -> float:
    """Safeguarded Newton on the derivative, bracketed inside the PD interval."""
    lo, hi = _pd_interval(sigma, B)
    smooth = link.essential_smooth

    def deriv(lam):
        wl, ul = _eigh(sigma + lam * B)
        if wl[0] <= eig_floor(wl):
            if smooth:
                return np.inf if lam > 0 else -np.inf
            return None
        return float(np.vdot(_rebuild(ul, link.phi_prime(wl)), B)) - c

    def second(lam):
        wl, ul = _eigh(sigma + lam * B)
        gamma = _loewner(wl, link.phi_prime, link.phi_second)
        core = ul.T @ B @ ul
        return float(np.sum(gamma * core * core))

    d0 = deriv(0.0)
    if d0 == 0:
        return 0.0
    direction = 1.0 if d0 < 0 else -1.0
    end = hi if direction > 0 else lo
    a, fa = 0.0, d0
    b = None
    step = 1.0
    for k in range(1, 2000):
        if np.isfinite(end):
            cand = end * (1.0 - 2.0 ** (-k))
        else:
            cand = direction * step
            step *= 2.0
            if step > 1e300:
                break
        fc = deriv(cand)
        if fc is None:
            break
        if np.sign(fc) == np.sign(d0) and fc != 0:
            a, fa = cand, fc
            if np.isfinite(end) and k > 60:
                break
            continue
        b = cand
        break
    if b is None:
        if np.isfinite(end):
            raise NoMinimizer("minimizer lies on the boundary of the PSD cone")
        raise NoMinimizer("objective is unbounded below along B")
    lo_b, hi_b = (a, b) if a < b else (b, a)
    x = a
    fx = fa
    ctol = 1e-14 * max(1.0, abs(c), float(np.linalg.norm(B)))
    for _ in range(300):
        h2 = second(x)
        xn = x - fx / h2 if h2 > 0 else np.nan
        if not (lo_b < xn < hi_b):
            xn = 0.5 * (lo_b + hi_b)
        fn = deriv(xn)
        if fn is None:
            fn = np.inf if xn > 0 else -np.inf
        if fn < 0:
            lo_b = xn
        else:
            hi_b = xn
        x, fx = xn, fn
        if abs(fx) <= ctol or hi_b - lo_b <= 4e-16 * max(1.0, abs(x)):
            break
    return float(x)


def _as_hyperplanes(hyperplanes, m):
    if isinstance(hyperplanes, AffineSubspace):
        return hyperplanes, [(b.array, c) for b, c in hyperplanes.hyperplanes()]
    planes = [(_raw(b).astype(float), float(c)) for b, c in hyperplanes]
    if not planes:
        return AffineSubspace.full(m), []
    sub = AffineSubspace.from_hyperplanes([p[0] for p in planes], [p[1] for p in planes])
    return sub, planes


def fit_bregman_projection(
    link: LinkFunction,
    hyperplanes: AffineSubspace | Sequence[tuple[ArrayLike, float]],
    S,
    opts: SolveOptions | None = None,
) -> FitResult:
    """Cyclic Bregman projections onto hyperplanes ``<B_i, L> = c_i``.

    ``hyperplanes`` is either a list of ``(B_i, c_i)`` pairs or an
    :class:`AffineSubspace`, which is converted to its orthonormal
    hyperplane description.  Each projection is a single
    :func:`line_search_1d`; ``iters`` counts full sweeps.
    """
    opts = _resolve(opts)
    S = as_sym(S).array
    sub, planes = _as_hyperplanes(hyperplanes, S.shape[0])
    w0 = np.linalg.eigvalsh(S)
    if w0[0] <= eig_floor(w0):
        raise InfeasibleStart("S must be positive definite")
    if link.closed_domain or not link.essential_smooth:
        warnings.warn(
            f"dom F is not the open PD cone for the {link.name} link; "
            "cyclic projections carry no convergence guarantee",
            RuntimeWarning,
            stacklevel=2,
        )
    sigma = S.copy()
    if not planes:
        L = link_gradient(link, sigma).array
        return _finish(link, sub, sigma, L, S, 0, Status.CONVERGED, "bregman-proj", opts)
    status = Status.MAX_ITER
    message = ""
    sweep = 0
    for sweep in range(1, opts.max_iter + 1):
        try:
            for B, c in planes:
                sigma = sigma + line_search_1d(link, sigma, B, c) * B
                sigma = 0.5 * (sigma + sigma.T)
        except NoMinimizer as exc:
            status = Status.BOUNDARY_DIVERGENCE
            message = str(exc)
            break
        L = link_gradient(link, sigma).array
        if sub.distance(L) <= opts.tol_kkt:
            status = Status.CONVERGED
            break
    try:
        L = link_gradient(link, sigma).array
    except NotPositiveDefinite:
        L = np.full_like(sigma, np.nan)
    return _finish(link, sub, sigma, L, S, sweep, status, "bregman-proj", opts, message=message)


# closed forms and wrappers ---------------------------------------------------


def fit_jordan_closed_form(link: LinkFunction, sub: AffineSubspace, S_n) -> FitResult:
    """Sigma_hat = orthogonal projection of S_n onto a Jordan algebra containing I."""
    if not sub.is_linear or not is_jordan_algebra(sub) or not contains_identity(sub):
        raise NotJordan("subspace must be a Jordan algebra containing the identity")
    S = as_sym(S_n).array
    proj = sub.project(S)
    w = proj.eigenvalues
    if w[0] <= eig_floor(w):
        raise ProjectionNotPD("projection of S_n onto the subspace is not positive definite")
    L = link_gradient(link, proj).array
    return _finish(
        link, sub, proj.array, L, S, 0, Status.CONVERGED, "jordan", SolveOptions()
    )


def pd_completion(
    link: LinkFunction, g: GraphSpec, S, opts: SolveOptions | None = None
) -> FitResult:
    """Complete S from its diagonal and edge entries.

    The result matches S on the diagonal and on edges while grad F vanishes
    on every non-edge.  Entries of S off the graph are ignored and may be
    NaN.  When the given S (or S with zeros off the graph) is PD the dual
    iteration is used; otherwise the primal iteration, which reads S only on
    the graph, takes over.
    """
    S = np.array(_raw(S), dtype=float)
    m = g.m
    if S.shape != (m, m):
        raise ValueError(f"S must be {m}x{m}")
    sub = subspace_from_graph(g)
    mask = np.eye(m, dtype=bool)
    for i, j in g.edges:
        mask[i, j] = mask[j, i] = True
    if not np.all(np.isfinite(S[mask])):
        raise ValueError("S must be finite on the diagonal and on edges")
    for cand in (S, np.where(mask, S, 0.0)):
        if np.all(np.isfinite(cand)) and np.allclose(cand, cand.T, rtol=1e-9, atol=0):
            w = np.linalg.eigvalsh(0.5 * (cand + cand.T))
            if w[0] > eig_floor(w):
                return fit_dual_pgd(link, sub, SymMatrix(cand, rtol=1e-9), opts)
    filled = SymMatrix(np.where(mask, S, 0.0), rtol=1e-9)
    return fit_primal_pgd(link, sub, None, filled, opts)


SOLVERS = ("auto", "dual-pgd", "primal-pgd", "bregman-proj", "jordan")


def jordan_applicable(sub: AffineSubspace, S_n) -> bool:
    if not (sub.is_linear and is_jordan_algebra(sub) and contains_identity(sub)):
        return False
    w = sub.project(S_n).eigenvalues
    return bool(w[0] > eig_floor(w))


def fit(
    link: LinkFunction,
    sub: AffineSubspace,
    S_n,
    solver: str = "auto",
    opts: SolveOptions | None = None,
    L0=None,
) -> FitResult:
    """Dispatch to a named solver; ``auto`` prefers the Jordan closed form."""
    if solver == "auto":
        solver = "jordan" if jordan_applicable(sub, S_n) else "dual-pgd"
    if solver == "jordan":
        return fit_jordan_closed_form(link, sub, S_n)
    if solver == "dual-pgd":
        return fit_dual_pgd(link, sub, S_n, opts)
    if solver == "primal-pgd":
        return fit_primal_pgd(link, sub, L0, S_n, opts)
    if solver == "bregman-proj":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fit_bregman_projection(link, sub, S_n, opts)
    raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
