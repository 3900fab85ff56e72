"""Bregman divergence, the concave estimation objective and KKT residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotInDomain, NotPositiveDefinite
from .model import AffineSubspace
from .specfun import (
    LinkFunction,
    _raw,
    as_sym,
    eig_floor,
    inner,
    link_conjugate_value,
    link_gradient,
    link_inverse_gradient,
)

__all__ = [
    "KktReport",
    "bregman",
    "bregman_dual",
    "objective",
    "objective_gradient",
    "kkt_residual",
    "kkt_from_pair",
]


@dataclass(frozen=True)
class KktReport:
    """Optimality certificate for a pair (Sigma_hat, L_hat = grad F(Sigma_hat)).

    Attributes
    ----------
    primal_feas : float
        Distance of L_hat to the affine set.
    dual_feas : float
        Norm of the projection of Sigma_hat - S_n onto the linear part.
    min_eig_sigma : float
        Smallest eigenvalue of Sigma_hat.
    min_eig_L_domain : float
        Distance of the spectrum of L_hat to the boundary of the gradient
        image (``inf`` when the image is all of S^m).
    """

    primal_feas: float
    dual_feas: float
    min_eig_sigma: float
    min_eig_L_domain: float

    @property
    def max_residual(self) -> float:
        return max(self.primal_feas, self.dual_feas)

    def ok(self, tol: float) -> bool:
        return self.max_residual <= tol


def _value_allow_boundary(link: LinkFunction, S, label: str) -> float:
    """F(S), accepting PSD S when phi(0) is finite."""
    w = as_sym(S).eigenvalues
    floor = eig_floor(w)
    if w[0] > floor:
        return float(np.sum(link.phi(w)))
    if link.closed_domain and w[0] >= -floor:
        w = np.where(w <= floor, 0.0, w)
        return float(np.sum(link.phi(w)))
    raise NotInDomain(f"{label} is outside dom(F) for the {link.name} link", label)


def bregman(link: LinkFunction, S, Sigma) -> float:
    """D_F(S, Sigma) = F(S) - F(Sigma) - <grad F(Sigma), S - Sigma>."""
    try:
        L = link_gradient(link, Sigma)
    except NotPositiveDefinite as exc:
        raise NotInDomain(f"Sigma is not positive definite: {exc}", "Sigma") from exc
    fs = _value_allow_boundary(link, S, "S")
    sig = as_sym(Sigma)
    fsig = float(np.sum(link.phi(sig.eigenvalues)))
    d = fs - fsig - inner(L, _raw(S) - sig.array)
    return max(d, 0.0) if d > -1e-12 * max(1.0, abs(fs)) else d


def bregman_dual(link: LinkFunction, S, L) -> float:
    """D_F(S, L) = F(S) + F*(L) - <L, S>, the divergence written in L."""
    fs = _value_allow_boundary(link, S, "S")
    return fs + link_conjugate_value(link, L) - inner(L, S)


def objective(link: LinkFunction, L, S_n) -> float:
    """g_n(L) = -F*(L) + <L, S_n>, maximized over the model."""
    return -link_conjugate_value(link, L) + inner(L, S_n)


def objective_gradient(link: LinkFunction, L, S_n) -> np.ndarray:
    """grad g_n(L) = S_n - grad F*(L)."""
    return _raw(S_n) - link_inverse_gradient(link, L).array


def kkt_from_pair(link: LinkFunction, sub: AffineSubspace, Sigma, L, S_n) -> KktReport:
    sig = as_sym(Sigma)
    lm = as_sym(L)
    return KktReport(
        primal_feas=sub.distance(lm),
        dual_feas=float(np.linalg.norm(sub.project_linear(sig.array - _raw(S_n)))),
        min_eig_sigma=float(sig.eigenvalues[0]),
        min_eig_L_domain=link.image_margin(lm.eigenvalues),
    )


def kkt_residual(link: LinkFunction, sub: AffineSubspace, Sigma_hat, S_n) -> KktReport:
    """Residuals of ``L_hat in L`` and ``Sigma_hat - S_n in L^perp``."""
    L = link_gradient(link, Sigma_hat)
    return kkt_from_pair(link, sub, Sigma_hat, L, S_n)
