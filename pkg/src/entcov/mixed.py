"""Mixed parametrization (Sigma_A, L_B), correlation-matrix parametrizations
and the two-step estimator under constraints on both parts."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .breg import kkt_from_pair
from .errors import ConvergenceError, EmptyBasis, NoPDExtension, NotEssentiallySmooth
from .model import AffineSubspace, _unit, coordinate_subspace, orthonormalize
from .solve import FitResult, SolveOptions, Status, fit_dual_pgd, fit_primal_pgd
from .specfun import (
    LinkFunction,
    SymMatrix,
    _raw,
    as_sym,
    eig_floor,
    link_inverse_gradient,
)

__all__ = [
    "EntryPartition",
    "entry_constraint",
    "fit_mixed",
    "solve_mixed",
    "corr_from_offdiag",
    "offdiag_of",
    "two_step_fit",
    "constraint_residual",
]

log = logging.getLogger(__name__)

Pair = tuple[int, int]
EntryValues = Union[Mapping[Pair, float], Sequence[float], NDArray[np.float64]]


def _norm_pair(p) -> Pair:
    i, j = (int(v) for v in p)
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True)
class EntryPartition:
    """Split of the index pairs ``i <= j`` of an m x m matrix into A and B.

    Pairs are 0-based.  ``pairs_A`` and ``pairs_B`` are sorted and fix the
    order in which sequence-valued targets are read.
    """

    m: int
    set_A: frozenset[Pair]

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        pairs = frozenset(_norm_pair(p) for p in self.set_A)
        for i, j in pairs:
            if not 0 <= i <= j < self.m:
                raise ValueError(f"pair {(i, j)} out of range for m={self.m}")
        object.__setattr__(self, "set_A", pairs)

    @classmethod
    def diagonal(cls, m: int) -> "EntryPartition":
        """A = diagonal, B = off-diagonal."""
        return cls(m, frozenset((i, i) for i in range(m)))

    @property
    def all_pairs(self) -> list[Pair]:
        return [(i, j) for i in range(self.m) for j in range(i, self.m)]

    @property
    def set_B(self) -> frozenset[Pair]:
        return frozenset(self.all_pairs) - self.set_A

    @property
    def pairs_A(self) -> list[Pair]:
        return sorted(self.set_A)

    @property
    def pairs_B(self) -> list[Pair]:
        return sorted(self.set_B)


def _values(values: EntryValues, pairs: list[Pair], label: str) -> dict[Pair, float]:
    if isinstance(values, Mapping):
        got = {_norm_pair(k): float(v) for k, v in values.items()}
        if set(got) != set(pairs):
            raise ValueError(f"{label} must give exactly the pairs {pairs}")
        return got
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size != len(pairs):
        raise ValueError(f"{label} needs {len(pairs)} values, got {arr.size}")
    return dict(zip(pairs, arr.tolist()))


def _place(m: int, vals: Mapping[Pair, float]) -> NDArray[np.float64]:
    out = np.zeros((m, m))
    for (i, j), v in vals.items():
        out[i, j] = out[j, i] = v
    return out


def _is_pd(a) -> bool:
    w = np.linalg.eigvalsh(a)
    return bool(w[0] > eig_floor(w))


def _helper_matrix(part: EntryPartition, targets: Mapping[Pair, float], opts) -> NDArray[np.float64]:
    """A PD matrix agreeing with the targets on A.

    Zeros go on B off-diagonals and delta on B diagonals, doubling delta
    from 1e-6.  If that never becomes PD, the log-det maximizing completion
    of the A-entries (B diagonals kept at the last delta) is tried.
    """
    m = part.m
    base = _place(m, targets)
    free_diag = [i for i in range(m) if (i, i) not in part.set_A]
    if not free_diag:
        if _is_pd(base):
            return base
        cand = base
    else:
        scale = max(1.0, float(np.max(np.abs(base))) * m)
        delta = 1e-6
        cand = base
        while delta <= 1e6 * scale:
            cand = base.copy()
            cand[free_diag, free_diag] = delta
            if _is_pd(cand):
                return cand
            delta *= 2.0
    # max-det completion over the A off-diagonals with every diagonal fixed
    sub = coordinate_subspace(
        m, [(i, i) for i in range(m)] + [p for p in part.pairs_A if p[0] != p[1]]
    )
    try:
        res = fit_primal_pgd(LinkFunction.logdet(), sub, None, cand, opts)
    except Exception as exc:  # noqa: BLE001 - any failure means no extension found
        raise NoPDExtension(f"no PD matrix matches the A targets: {exc}") from exc
    if not res.converged:
        raise NoPDExtension("no PD matrix matches the A targets")
    return res.sigma_hat.array


def fit_mixed(
    link: LinkFunction,
    part: EntryPartition,
    sigma_A_target: EntryValues,
    l_B_target: EntryValues,
    opts: SolveOptions | None = None,
) -> FitResult:
    """Solver result for the matrix with prescribed Sigma_A and (grad F)_B."""
    if not link.essential_smooth:
        raise NotEssentiallySmooth(
            f"the {link.name} link is not essentially smooth; (Sigma_A, L_B) need not determine Sigma"
        )
    a_vals = _values(sigma_A_target, part.pairs_A, "sigma_A_target")
    b_vals = _values(l_B_target, part.pairs_B, "l_B_target")
    S = _helper_matrix(part, a_vals, opts)
    sub = coordinate_subspace(part.m, part.pairs_A, offset=_place(part.m, b_vals))
    return fit_dual_pgd(link, sub, SymMatrix._trusted(0.5 * (S + S.T)), opts)


def solve_mixed(
    link: LinkFunction,
    part: EntryPartition,
    sigma_A_target: EntryValues,
    l_B_target: EntryValues,
    opts: SolveOptions | None = None,
) -> SymMatrix:
    """The PD matrix Sigma with Sigma_A = sigma_A_target and grad F(Sigma)_B = l_B_target.

    Targets are mappings keyed by 0-based pairs or sequences ordered as
    ``part.pairs_A`` / ``part.pairs_B``.

    Raises
    ------
    NotEssentiallySmooth
        For Power links with q > 0.
    NoPDExtension
        When no PD matrix carries the A targets.
    ConvergenceError
        When the inner solve does not converge.
    """
    res = fit_mixed(link, part, sigma_A_target, l_B_target, opts)
    if not res.converged:
        raise ConvergenceError(f"mixed solve ended with status {res.status.value}", res)
    return res.sigma_hat


def corr_from_offdiag(
    link: LinkFunction,
    offdiag: ArrayLike,
    m: int | None = None,
    opts: SolveOptions | None = None,
) -> SymMatrix:
    """Correlation matrix R with off-diagonal part of grad F(R) equal to ``offdiag``.

    ``offdiag`` lists the strict upper triangle row by row.  Any real vector
    is admissible, so this is an unconstrained parametrization of the
    correlation matrices.
    """
    vals = np.asarray(offdiag, dtype=float).ravel()
    if m is None:
        m = int(round((1 + np.sqrt(1 + 8 * vals.size)) / 2))
    if vals.size != m * (m - 1) // 2:
        raise ValueError(f"expected {m * (m - 1) // 2} off-diagonal values for m={m}, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("off-diagonal values must be finite")
    part = EntryPartition.diagonal(m)
    return solve_mixed(link, part, np.ones(m), vals, opts)


def offdiag_of(M) -> NDArray[np.float64]:
    """Strict upper triangle of M, row by row."""
    a = _raw(M)
    return a[np.triu_indices(a.shape[0], k=1)]


# two-step estimator ---------------------------------------------------------


def entry_constraint(
    m: int, pairs: Sequence[Pair], fixed: Mapping[Pair, float] | None = None
) -> AffineSubspace:
    """Affine set of matrices supported on ``pairs`` with some entries fixed.

    Pairs not in ``fixed`` are free.  ``fixed=None`` gives the vacuous
    constraint (every entry free).
    """
    pairs = sorted({_norm_pair(p) for p in pairs})
    fixed = {} if fixed is None else {_norm_pair(k): float(v) for k, v in fixed.items()}
    if not set(fixed) <= set(pairs):
        raise ValueError("fixed entries must belong to the constrained pairs")
    free = [p for p in pairs if p not in fixed]
    return AffineSubspace(_place(m, fixed), [_unit(m, i, j) for i, j in free])


def _mask(m: int, pairs) -> NDArray[np.bool_]:
    mask = np.zeros((m, m), dtype=bool)
    for i, j in pairs:
        mask[i, j] = mask[j, i] = True
    return mask


def _check_support(c: AffineSubspace, mask, label: str) -> None:
    mats = [c.offset.array] + [b.array for b in c.basis]
    if any(np.any(np.abs(a[~mask]) > 1e-12) for a in mats):
        raise ValueError(f"{label} must only involve its own entries")


def constraint_residual(M, c: AffineSubspace, pairs) -> float:
    """Distance of the restriction of M to ``pairs`` from the constraint set."""
    a = _raw(M)
    restricted = np.where(_mask(c.m, pairs), a, 0.0)
    return c.distance(restricted)


def two_step_fit(
    link: LinkFunction,
    part: EntryPartition,
    constraint_A: AffineSubspace | None,
    constraint_B: AffineSubspace | None,
    S_n,
    opts: SolveOptions | None = None,
) -> FitResult:
    """Two-step estimate under affine constraints on Sigma_A and on L_B.

    Step one fits L_hat over ``{L : L_B in constraint_B}`` with L_A free.
    Step two keeps L_B = L_hat_B and moves L_A until Sigma_A lands in
    ``constraint_A``; it minimizes D_F(Sigma, L_hat) over that set.
    Constraints are affine sets supported on the A (resp. B) entries, e.g.
    from :func:`entry_constraint`; ``None`` means no constraint.

    The returned result describes step two; ``info`` holds the step-one
    result and both constraint residuals.
    """
    if not link.essential_smooth:
        raise NotEssentiallySmooth(f"the {link.name} link is not essentially smooth")
    m = part.m
    S = as_sym(S_n)
    mask_A, mask_B = _mask(m, part.pairs_A), _mask(m, part.pairs_B)
    if constraint_A is None:
        constraint_A = entry_constraint(m, part.pairs_A)
    if constraint_B is None:
        constraint_B = entry_constraint(m, part.pairs_B)
    _check_support(constraint_A, mask_A, "constraint_A")
    _check_support(constraint_B, mask_B, "constraint_B")

    units_A = [_unit(m, i, j) for i, j in part.pairs_A]
    sub1 = AffineSubspace(
        constraint_B.offset, [b.array for b in constraint_B.basis] + units_A
    )
    step1 = fit_dual_pgd(link, sub1, S, opts)
    if not step1.converged:
        raise ConvergenceError(f"step one ended with status {step1.status.value}", step1)
    L_hat = step1.l_hat

    # directions in coord(A) orthogonal to the free part of constraint_A
    normals = [u - constraint_A.project_linear(u) for u in units_A]
    normals = [n for n in normals if np.linalg.norm(n) > 1e-10]
    try:
        basis2 = [b.array for b in orthonormalize(normals)] if normals else []
    except EmptyBasis:
        basis2 = []
    sub2 = AffineSubspace(L_hat, basis2)
    target = constraint_A.offset
    if basis2:
        res = fit_primal_pgd(link, sub2, L_hat, target, opts)
    else:
        sigma = link_inverse_gradient(link, L_hat)
        res = FitResult(
            sigma_hat=sigma,
            l_hat=L_hat,
            theta_hat=sub2.coords(L_hat),
            kkt=kkt_from_pair(link, sub2, sigma, L_hat, target),
            iters=0,
            status=Status.CONVERGED,
            solver="two-step",
        )
    res.solver = "two-step"
    res.info.update(
        step1=step1,
        constraint_A_residual=constraint_residual(res.sigma_hat, constraint_A, part.pairs_A),
        constraint_B_residual=constraint_residual(res.l_hat, constraint_B, part.pairs_B),
        l_in_image=bool(np.all(link.in_gradient_image(res.l_hat.eigenvalues))),
    )
    return res
