"""Spectral sums F(Sigma) = tr phi(Sigma) and their conjugates.

Every link in the catalogue is a scalar convex function ``phi`` on the
positive half line.  Matrix quantities are obtained by applying the scalar
maps to the eigenvalues of a symmetric matrix:

========================  ===============  =====================
link                      grad F(Sigma)    L-domain (image)
========================  ===============  =====================
``logdet``                -Sigma^{-1}      negative definite
``power:q`` (q > 0)       Sigma^q          positive definite
``power:q`` (q < 0)       -Sigma^q         negative definite
``vonneumann``            log Sigma        all symmetric
``shifted:lam``           lam Sigma - inv  all symmetric
========================  ===============  =====================
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import xlogy

from .errors import (
    ConjugateDomainError,
    DimensionMismatch,
    DomainError,
    NotPositiveDefinite,
)

__all__ = [
    "SymMatrix",
    "as_sym",
    "LinkKind",
    "LinkFunction",
    "parse_link",
    "eig_floor",
    "apply_matrix_function",
    "link_value",
    "link_gradient",
    "link_hessian",
    "link_conjugate_value",
    "link_inverse_gradient",
    "dgrad_conjugate",
    "inner",
]

SYMMETRY_RTOL = 1e-12
EIG_FLOOR_RTOL = 1e-10
DIVIDED_DIFF_RTOL = 1e-7


class SymMatrix:
    """Immutable dense symmetric matrix with a lazily cached eigendecomposition.

    Parameters
    ----------
    entries : array_like
        Square matrix.  Entries must satisfy
        ``|a_ij - a_ji| <= 1e-12 * max(1, |a_ij|)``; the stored matrix is the
        exact symmetrization ``(a + a.T) / 2``.
    """

    __slots__ = ("_a", "_eig", "_lock")

    def __init__(self, entries: ArrayLike, *, rtol: float = SYMMETRY_RTOL):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        if np.any(np.abs(a - a.T) > rtol * np.maximum(1.0, np.abs(a))):
            raise ValueError("matrix is not symmetric")
        self._init(a)

    def _init(self, a: NDArray[np.float64]) -> None:
        a = 0.5 * (a + a.T)
        a.flags.writeable = False
        self._a = a
        self._eig = None
        self._lock = threading.Lock()

    @classmethod
    def _trusted(cls, a: NDArray[np.float64]) -> "SymMatrix":
        obj = cls.__new__(cls)
        obj._init(np.array(a, dtype=float))
        return obj

    @property
    def array(self) -> NDArray[np.float64]:
        """Read-only view of the entries."""
        return self._a

    @property
    def m(self) -> int:
        return self._a.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._a.shape

    def eigh(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Ascending eigenvalues and orthonormal eigenvectors (cached)."""
        if self._eig is None:
            with self._lock:
                if self._eig is None:
                    w, u = np.linalg.eigh(self._a)
                    w.flags.writeable = False
                    u.flags.writeable = False
                    self._eig = (w, u)
        return self._eig

    @property
    def eigenvalues(self) -> NDArray[np.float64]:
        return self.eigh()[0]

    def __array__(self, dtype=None, copy=None):
        if copy is False and dtype in (None, np.float64):
            return self._a
        return np.array(self._a, dtype=dtype)

    def __getitem__(self, idx):
        return self._a[idx]

    def __add__(self, other):
        return SymMatrix._trusted(self._a + _raw(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SymMatrix._trusted(self._a - _raw(other))

    def __rsub__(self, other):
        return SymMatrix._trusted(_raw(other) - self._a)

    def __neg__(self):
        return SymMatrix._trusted(-self._a)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return SymMatrix._trusted(float(c) * self._a)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"SymMatrix({np.array2string(self._a, precision=6)})"


def _raw(x) -> NDArray[np.float64]:
    if isinstance(x, SymMatrix):
        return x.array
    return np.asarray(x, dtype=float)


def as_sym(x: ArrayLike | SymMatrix) -> SymMatrix:
    """Return ``x`` as a :class:`SymMatrix` (no copy when it already is one)."""
    if isinstance(x, SymMatrix):
        return x
    return SymMatrix(x)


def inner(a, b) -> float:
    """Trace inner product <A, B> = tr(AB) of symmetric matrices."""
    return float(np.vdot(_raw(a), _raw(b)))


def eig_floor(w: NDArray[np.float64]) -> float:
    """Eigenvalues at or below this value count as "not positive"."""
    return EIG_FLOOR_RTOL * max(1.0, float(np.max(w)))


class LinkKind(str, Enum):
    POWER = "power"
    LOGDET = "logdet"
    VONNEUMANN = "vonneumann"
    SHIFTED = "shifted"


@dataclass(frozen=True)
class LinkFunction:
    """Scalar convex function phi generating F(Sigma) = tr phi(Sigma).

    Use the constructors :meth:`logdet`, :meth:`power`, :meth:`von_neumann`
    and :meth:`shifted`, or :func:`parse_link` for the ``name:param`` form.
    All scalar methods are vectorized over numpy arrays.
    """

    kind: LinkKind
    param: float | None = None

    def __post_init__(self):
        kind = LinkKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LinkKind.POWER:
            if self.param is None or not np.isfinite(self.param) or self.param == 0:
                raise ValueError("power link needs a finite nonzero exponent q")
            if self.param == -1:
                raise ValueError("power:-1 is the logdet link; use LinkFunction.logdet()")
            object.__setattr__(self, "param", float(self.param))
        elif kind is LinkKind.SHIFTED:
            lam = 1.0 if self.param is None else float(self.param)
            if not (np.isfinite(lam) and lam > 0):
                raise ValueError("shifted link needs lambda > 0")
            object.__setattr__(self, "param", lam)
        elif self.param is not None:
            raise ValueError(f"{kind.value} link takes no parameter")

    @classmethod
    def logdet(cls) -> "LinkFunction":
        return cls(LinkKind.LOGDET)

    @classmethod
    def power(cls, q: float) -> "LinkFunction":
        return cls(LinkKind.POWER, q)

    @classmethod
    def von_neumann(cls) -> "LinkFunction":
        return cls(LinkKind.VONNEUMANN)

    @classmethod
    def shifted(cls, lam: float = 1.0) -> "LinkFunction":
        return cls(LinkKind.SHIFTED, lam)

    @property
    def name(self) -> str:
        if self.param is None:
            return self.kind.value
        return f"{self.kind.value}:{format(self.param, '.17g')}"

    def __str__(self) -> str:
        return self.name

    @property
    def essential_smooth(self) -> bool:
        """|phi'(x)| -> inf as x -> 0+."""
        return not (self.kind is LinkKind.POWER and self.param > 0)

    @property
    def closed_domain(self) -> bool:
        """phi(0) is finite, so dom F is the closed PSD cone."""
        if self.kind is LinkKind.VONNEUMANN:
            return True
        return self.kind is LinkKind.POWER and self.param > -1

    # scalar maps -------------------------------------------------------

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return -np.log(x)
        if k is LinkKind.VONNEUMANN:
            return xlogy(x, x) - x
        if k is LinkKind.SHIFTED:
            return -np.log(x) + 0.5 * p * x**2
        if p > 0:
            return x ** (p + 1) / (p + 1)
        return -(x ** (p + 1)) / (p + 1)

    def phi_prime(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return -1.0 / x
        if k is LinkKind.VONNEUMANN:
            return np.log(x)
        if k is LinkKind.SHIFTED:
            return p * x - 1.0 / x
        return x**p if p > 0 else -(x**p)

    def phi_second(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return 1.0 / x**2
        if k is LinkKind.VONNEUMANN:
            return 1.0 / x
        if k is LinkKind.SHIFTED:
            return p + 1.0 / x**2
        return abs(p) * x ** (p - 1)

    def phi_prime_inverse(self, y):
        """(phi')^{-1} = (phi*)'; maps the L-domain back to (0, inf)."""
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return -1.0 / y
        if k is LinkKind.VONNEUMANN:
            return np.exp(y)
        if k is LinkKind.SHIFTED:
            r = np.sqrt(y * y + 4.0 * p)
            # 2 / (r - y) avoids cancellation for y << 0
            return np.where(y >= 0, (y + r) / (2.0 * p), 2.0 / (r - y))
        return y ** (1.0 / p) if p > 0 else (-y) ** (1.0 / p)

    def phi_prime_inverse_deriv(self, y):
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return 1.0 / y**2
        if k is LinkKind.VONNEUMANN:
            return np.exp(y)
        if k is LinkKind.SHIFTED:
            r = np.sqrt(y * y + 4.0 * p)
            return 2.0 / (r * (r - y))
        if p > 0:
            return y ** (1.0 / p - 1.0) / p
        return -((-y) ** (1.0 / p - 1.0)) / p

    def phi_conjugate(self, y):
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.param
        if k is LinkKind.LOGDET:
            return -1.0 - np.log(-y)
        if k is LinkKind.VONNEUMANN:
            return np.exp(y)
        if k is LinkKind.SHIFTED:
            x = self.phi_prime_inverse(y)
            return x * y + np.log(x) - 0.5 * p * x * x
        e = (p + 1.0) / p
        if p > 0:
            pos = np.maximum(y, 0.0)
            return p / (p + 1.0) * pos**e
        with np.errstate(divide="ignore"):
            return -p / (p + 1.0) * (-y) ** e

    # domains -----------------------------------------------------------

    def in_conjugate_domain(self, y):
        """Elementwise membership of eigenvalues in dom(phi*)."""
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.param
        if k in (LinkKind.VONNEUMANN, LinkKind.SHIFTED) or (k is LinkKind.POWER and p > 0):
            return np.isfinite(y)
        if k is LinkKind.POWER and p < -1:
            return y <= 0
        return y < 0

    def in_gradient_image(self, y):
        """Elementwise membership of eigenvalues in phi'((0, inf))."""
        y = np.asarray(y, dtype=float)
        k, p = self.kind, self.param
        if k in (LinkKind.VONNEUMANN, LinkKind.SHIFTED):
            return np.isfinite(y)
        if k is LinkKind.POWER and p > 0:
            return y > 0
        return y < 0

    def image_margin(self, y) -> float:
        """Distance of the spectrum ``y`` to the boundary of the gradient image."""
        y = np.asarray(y, dtype=float)
        if self.kind in (LinkKind.VONNEUMANN, LinkKind.SHIFTED):
            return float("inf")
        if self.kind is LinkKind.POWER and self.param > 0:
            return float(np.min(y))
        return float(-np.max(y))


def parse_link(text: str) -> LinkFunction:
    """Parse ``logdet``, ``vonneumann``, ``power:<q>`` or ``shifted[:<lambda>]``."""
    name, _, arg = text.strip().lower().partition(":")
    name = name.replace("_", "").replace("-", "")
    if name == "logdet":
        if arg:
            raise ValueError("logdet takes no parameter")
        return LinkFunction.logdet()
    if name in ("vonneumann", "log"):
        if arg:
            raise ValueError("vonneumann takes no parameter")
        return LinkFunction.von_neumann()
    if name == "power":
        if not arg:
            raise ValueError("power link needs an exponent, e.g. power:1")
        return LinkFunction.power(float(arg))
    if name == "shifted":
        return LinkFunction.shifted(float(arg) if arg else 1.0)
    raise ValueError(f"unknown link {text!r}")


# matrix functions ------------------------------------------------------


def _rebuild(u, vals) -> NDArray[np.float64]:
    out = (u * vals) @ u.T
    return 0.5 * (out + out.T)


def _loewner(w, f, df) -> NDArray[np.float64]:
    """First divided differences of ``f`` on the spectrum ``w``."""
    fw = f(w)
    dfw = df(w)
    dw = w[:, None] - w[None, :]
    scale = np.maximum(1.0, np.abs(w))
    close = np.abs(dw) <= DIVIDED_DIFF_RTOL * np.maximum(scale[:, None], scale[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (fw[:, None] - fw[None, :]) / np.where(close, 1.0, dw)
    return np.where(close, 0.5 * (dfw[:, None] + dfw[None, :]), g)


def _frechet(u, gamma, b) -> NDArray[np.float64]:
    return _rebuild_full(u, gamma * (u.T @ b @ u))


def _rebuild_full(u, core) -> NDArray[np.float64]:
    out = u @ core @ u.T
    return 0.5 * (out + out.T)


def apply_matrix_function(
    f: Callable, Sigma, domain: Callable | None = None
) -> SymMatrix:
    """Return U f(Lambda) U^T.

    ``domain`` is an optional elementwise predicate on eigenvalues; without it
    any non-finite value of ``f`` on the spectrum is treated as a domain error.
    """
    s = as_sym(Sigma)
    w, u = s.eigh()
    if domain is not None and not np.all(domain(w)):
        raise DomainError(f"eigenvalue outside the domain of f: {w}")
    with np.errstate(all="ignore"):
        fw = np.asarray(f(w), dtype=float)
    if not np.all(np.isfinite(fw)):
        raise DomainError(f"f is not finite on the spectrum {w}")
    return SymMatrix._trusted(_rebuild(u, fw))


def _pd_eigs(Sigma) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    w, u = as_sym(Sigma).eigh()
    if w[0] <= eig_floor(w):
        raise NotPositiveDefinite(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    return w, u


def link_value(link: LinkFunction, Sigma) -> float:
    """F(Sigma) = sum_i phi(lambda_i) for positive definite Sigma."""
    w, _ = _pd_eigs(Sigma)
    return float(np.sum(link.phi(w)))


def link_gradient(link: LinkFunction, Sigma) -> SymMatrix:
    """grad F(Sigma) = phi'(Sigma)."""
    w, u = _pd_eigs(Sigma)
    return SymMatrix._trusted(_rebuild(u, link.phi_prime(w)))


def link_hessian(link: LinkFunction, Sigma, B) -> SymMatrix:
    """Directional derivative of grad F at Sigma in direction B."""
    w, u = _pd_eigs(Sigma)
    gamma = _loewner(w, link.phi_prime, link.phi_second)
    return SymMatrix._trusted(_frechet(u, gamma, _raw(B)))


def _conj_check(link, w):
    ok = link.in_conjugate_domain(w)
    if not np.all(ok):
        bad = float(w[~ok][0])
        raise ConjugateDomainError(
            f"eigenvalue {bad:.6g} outside dom(phi*) for the {link.name} link", bad
        )


def _image_eigs(link, L):
    w, u = as_sym(L).eigh()
    ok = link.in_gradient_image(w)
    if not np.all(ok):
        bad = float(w[~ok][0])
        raise ConjugateDomainError(
            f"eigenvalue {bad:.6g} outside the gradient image of the {link.name} link", bad
        )
    return w, u


def link_conjugate_value(link: LinkFunction, L) -> float:
    """F*(L) = sum_i phi*(mu_i)."""
    w, _ = as_sym(L).eigh()
    _conj_check(link, w)
    return float(np.sum(link.phi_conjugate(w)))


def link_inverse_gradient(link: LinkFunction, L) -> SymMatrix:
    """grad F*(L): the unique Sigma with grad F(Sigma) = L."""
    w, u = _image_eigs(link, L)
    return SymMatrix._trusted(_rebuild(u, link.phi_prime_inverse(w)))


def dgrad_conjugate(link: LinkFunction, L, B) -> SymMatrix:
    """Directional derivative of grad F* at L in direction B.

    With L = U M U^T this is U (Gamma o U^T B U) U^T where Gamma holds the
    first divided differences of (phi*)' on the spectrum of L.
    """
    w, u = _image_eigs(link, L)
    gamma = _loewner(w, link.phi_prime_inverse, link.phi_prime_inverse_deriv)
    return SymMatrix._trusted(_frechet(u, gamma, _raw(B)))
