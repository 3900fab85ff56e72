"""Affine constraint sets L = A0 + span{A1, ..., Ad} of symmetric matrices.

Matrices are handled internally in "svec" coordinates: the diagonal followed by
sqrt(2) times the strict upper triangle, an isometry between (S^m, tr(AB)) and
R^{m(m+1)/2} with the dot product.  Graph indices are 0-based in the Python
API; the JSON front end converts from 1-based.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space

from .errors import DimensionMismatch, EmptyBasis, NotLinear
from .specfun import SymMatrix, _raw

__all__ = [
    "svec",
    "smat",
    "AffineSubspace",
    "GraphSpec",
    "orthonormalize",
    "coordinate_subspace",
    "subspace_from_graph",
    "equicorrelation_subspace",
    "row_sum_subspace",
    "project",
    "is_jordan_algebra",
    "contains_identity",
    "graph_from_spec",
    "subspace_from_spec",
]

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10


def _tri(m: int):
    return np.triu_indices(m, 1)


def svec(a) -> NDArray[np.float64]:
    """Isometric vectorization of a symmetric matrix."""
    a = _raw(a)
    m = a.shape[0]
    iu = _tri(m)
    return np.concatenate([np.diag(a), np.sqrt(2.0) * a[iu]])


def smat(v, m: int) -> NDArray[np.float64]:
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    a = np.diag(v[:m])
    iu = _tri(m)
    off = v[m:] / np.sqrt(2.0)
    a[iu] = off
    a[(iu[1], iu[0])] = off
    return a


def _svec_dim(m: int) -> int:
    return m * (m + 1) // 2


def orthonormalize(mats: Sequence[ArrayLike]) -> list[SymMatrix]:
    """Modified Gram-Schmidt under <A, B> = tr(AB).

    Inputs whose residual norm falls below ``1e-10 * max input norm`` are
    dropped, so rank-deficient families are reduced to a basis of their span.
    """
    if len(mats) == 0:
        raise EmptyBasis("no matrices given")
    raw = [_raw(a) for a in mats]
    m = raw[0].shape[0]
    if any(a.shape != (m, m) for a in raw):
        raise DimensionMismatch("all generators must share one square shape")
    vecs = [svec(a) for a in raw]
    top = max(np.linalg.norm(v) for v in vecs)
    if top == 0:
        raise EmptyBasis("all generators are zero")
    out: list[NDArray[np.float64]] = []
    for v in vecs:
        r = v.copy()
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            for q in out:
                r -= np.dot(q, r) * q
        nr = np.linalg.norm(r)
        if nr >= RANK_RTOL * top:
            out.append(r / nr)
    if not out:
        raise EmptyBasis("all generators are numerically zero")
    if len(out) < len(vecs):
        log.warning("dropped %d linearly dependent generator(s)", len(vecs) - len(out))
    return [SymMatrix._trusted(smat(q, m)) for q in out]


class AffineSubspace:
    """Affine set ``offset + span(basis)`` with an orthonormal basis.

    Parameters
    ----------
    offset : array_like
        Any point A0 of the set (it need not be orthogonal to the span).
    basis : sequence of array_like
        Generators A1..Ad, orthonormal under the trace inner product.  Use
        :meth:`from_generators` for arbitrary spanning families.  An empty
        basis gives the single point ``{offset}``.
    """

    def __init__(self, offset: ArrayLike, basis: Sequence[ArrayLike] = ()):
        off = SymMatrix(_raw(offset)) if not isinstance(offset, SymMatrix) else offset
        m = off.m
        vecs = [svec(b) for b in basis]
        if any(_raw(b).shape != (m, m) for b in basis):
            raise DimensionMismatch("basis matrices must match the offset shape")
        mat = np.array(vecs, dtype=float).reshape(len(vecs), _svec_dim(m))
        gram = mat @ mat.T
        if not np.allclose(gram, np.eye(len(vecs)), atol=1e-10, rtol=0):
            raise ValueError("basis is not orthonormal; use AffineSubspace.from_generators")
        mat.flags.writeable = False
        self._offset = off
        self._m = m
        self._mat = mat
        self._off_vec = svec(off)

    @classmethod
    def from_generators(cls, generators: Sequence[ArrayLike], offset: ArrayLike | None = None):
        gens = orthonormalize(generators)
        if offset is None:
            offset = np.zeros(gens[0].shape)
        return cls(offset, gens)

    @classmethod
    def full(cls, m: int) -> "AffineSubspace":
        """The whole space S^m."""
        return cls(np.zeros((m, m)), [smat(e, m) for e in np.eye(_svec_dim(m))])

    @classmethod
    def from_hyperplanes(cls, normals: Sequence[ArrayLike], values: Sequence[float]):
        """The set ``{L : <B_i, L> = c_i for all i}``."""
        if len(normals) != len(values):
            raise DimensionMismatch("need one value per hyperplane normal")
        if len(normals) == 0:
            raise EmptyBasis("no hyperplanes given; use AffineSubspace.full")
        m = _raw(normals[0]).shape[0]
        nmat = np.array([svec(b) for b in normals])
        c = np.asarray(values, dtype=float)
        # least-norm point satisfying all equations
        x, *_ = np.linalg.lstsq(nmat, c, rcond=None)
        if not np.allclose(nmat @ x, c, atol=1e-9 * max(1.0, np.max(np.abs(c)))):
            raise ValueError("hyperplanes are inconsistent")
        comp = null_space(nmat, rcond=RANK_RTOL) if nmat.size else np.eye(_svec_dim(m))
        return cls(smat(x, m), [smat(v, m) for v in comp.T])

    # properties --------------------------------------------------------

    @property
    def m(self) -> int:
        return self._m

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    d = dim

    @property
    def offset(self) -> SymMatrix:
        return self._offset

    @property
    def basis(self) -> list[SymMatrix]:
        return [SymMatrix._trusted(smat(v, self._m)) for v in self._mat]

    @property
    def basis_svec(self) -> NDArray[np.float64]:
        """Basis as the rows of a ``d x m(m+1)/2`` matrix."""
        return self._mat

    @property
    def is_linear(self) -> bool:
        """True when A0 lies in the span, i.e. the set is a linear subspace."""
        resid = self._off_vec - self._mat.T @ (self._mat @ self._off_vec)
        return bool(np.linalg.norm(resid) <= 1e-12 * max(1.0, np.linalg.norm(self._off_vec)))

    def linear_part(self) -> "AffineSubspace":
        return AffineSubspace(np.zeros((self._m, self._m)), self.basis)

    def complement_basis(self) -> list[SymMatrix]:
        """Orthonormal basis of the orthogonal complement of the linear part."""
        if self.dim == 0:
            return [SymMatrix._trusted(smat(e, self._m)) for e in np.eye(_svec_dim(self._m))]
        comp = null_space(self._mat, rcond=RANK_RTOL)
        return [SymMatrix._trusted(smat(v, self._m)) for v in comp.T]

    def hyperplanes(self) -> list[tuple[SymMatrix, float]]:
        """Equations ``<B_i, L> = c_i`` with orthonormal normals describing the set."""
        return [(b, float(svec(b) @ self._off_vec)) for b in self.complement_basis()]

    # maps ----------------------------------------------------------------

    def _check(self, M) -> NDArray[np.float64]:
        a = _raw(M)
        if a.shape != (self._m, self._m):
            raise DimensionMismatch(f"expected a {self._m}x{self._m} matrix, got {a.shape}")
        return a

    def coords(self, M) -> NDArray[np.float64]:
        """theta_i = <M - A0, A_i>."""
        a = self._check(M)
        return self._mat @ (svec(a) - self._off_vec)

    def point(self, theta: ArrayLike) -> SymMatrix:
        """A0 + sum_i theta_i A_i."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} coordinates, got {theta.shape[0]}")
        return SymMatrix._trusted(smat(self._off_vec + self._mat.T @ theta, self._m))

    def project(self, M) -> SymMatrix:
        """Orthogonal projection onto the affine set."""
        return self.point(self.coords(M))

    def project_linear(self, M) -> NDArray[np.float64]:
        """Projection onto the linear part (as a raw array)."""
        a = self._check(M)
        return smat(self._mat.T @ (self._mat @ svec(a)), self._m)

    def project_complement(self, M) -> NDArray[np.float64]:
        """M minus its projection onto the linear part."""
        a = self._check(M)
        return a - self.project_linear(a)

    def distance(self, M) -> float:
        a = self._check(M)
        return float(np.linalg.norm(self.project_complement(a - self._offset.array)))

    def __repr__(self) -> str:
        return f"AffineSubspace(m={self._m}, dim={self.dim}, linear={self.is_linear})"


@dataclass(frozen=True)
class GraphSpec:
    """Undirected simple graph on nodes ``0..m-1``; the diagonal is always free."""

    m: int
    edges: frozenset = frozenset()

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("graph needs at least one node")
        norm = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop {e} given; the diagonal is implicit")
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge {e} out of range for m={self.m}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[Sequence[int]], one_based: bool = False):
        edges = list(edges)
        if one_based:
            edges = [(i - 1, j - 1) for i, j in edges]
        pairs = [tuple(sorted(e)) for e in edges]
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate edges")
        return cls(m, frozenset(pairs))

    @classmethod
    def complete(cls, m: int) -> "GraphSpec":
        return cls(m, frozenset(itertools.combinations(range(m), 2)))

    @property
    def non_edges(self) -> list[tuple[int, int]]:
        return [p for p in itertools.combinations(range(self.m), 2) if p not in self.edges]


def _unit(m: int, i: int, j: int) -> NDArray[np.float64]:
    e = np.zeros((m, m))
    if i == j:
        e[i, i] = 1.0
    else:
        e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
    return e


def coordinate_subspace(m: int, pairs: Iterable[tuple[int, int]], offset=None) -> AffineSubspace:
    """Matrices free on the given entries (i <= j), fixed to ``offset`` elsewhere."""
    pairs = sorted({(min(i, j), max(i, j)) for i, j in pairs})
    off = np.zeros((m, m)) if offset is None else _raw(offset)
    return AffineSubspace(off, [_unit(m, i, j) for i, j in pairs])


def subspace_from_graph(g: GraphSpec) -> AffineSubspace:
    """L_G = {L : L_ij = 0 for non-edges ij}; offset 0, dimension m + |E|."""
    pairs = [(i, i) for i in range(g.m)] + sorted(g.edges)
    return coordinate_subspace(g.m, pairs)


def equicorrelation_subspace(m: int) -> AffineSubspace:
    """span{I, J - I}: equal diagonal and equal off-diagonal entries."""
    gens = [np.eye(m)]
    if m > 1:
        gens.append(np.ones((m, m)) - np.eye(m))
    return AffineSubspace.from_generators(gens)


def row_sum_subspace(m: int) -> AffineSubspace:
    """Symmetric matrices with all row sums equal; dimension m(m-1)/2 + 1."""
    if m < 1:
        raise ValueError("m must be positive")
    ones = np.ones((m, m))
    p = np.eye(m) - ones / m
    gens = [ones]
    for i in range(m):
        for j in range(i, m):
            e = np.zeros((m, m))
            e[i, j] = e[j, i] = 1.0
            gens.append(p @ e @ p)
    gens = [g for g in gens if np.linalg.norm(g) > 1e-12]
    return AffineSubspace.from_generators(gens)


def project(sub: AffineSubspace, M) -> SymMatrix:
    """A0 + sum_i <M - A0, A_i> A_i."""
    return sub.project(M)


def is_jordan_algebra(sub: AffineSubspace, tol: float | None = None) -> bool:
    """Check closure of the span under the symmetrized product (AB + BA) / 2."""
    if not sub.is_linear:
        raise NotLinear("Jordan check needs a linear subspace (offset in the span)")
    if tol is None:
        tol = 1e-9 * max(1, sub.dim)
    basis = [b.array for b in sub.basis]
    for i, a in enumerate(basis):
        for b in basis[i:]:
            prod = a @ b
            jp = 0.5 * (prod + prod.T)
            if np.linalg.norm(sub.project_complement(jp)) > tol:
                return False
    return True


def contains_identity(sub: AffineSubspace) -> bool:
    m = sub.m
    eye = np.eye(m)
    return bool(np.linalg.norm(eye - sub.project(eye).array) <= 1e-10 * np.sqrt(m))


def _spec_body(spec: Mapping) -> Mapping:
    body = spec.get("constraint", spec)
    if not isinstance(body, Mapping) or "type" not in body:
        raise ValueError('model spec needs a "type" field')
    return body


def graph_from_spec(spec: Mapping) -> GraphSpec:
    """GraphSpec from ``{"type": "graph", "m": m, "edges": [[i, j], ...]}`` (1-based)."""
    body = _spec_body(spec)
    if body["type"] != "graph":
        raise ValueError(f'expected a graph model spec, got type {body["type"]!r}')
    return GraphSpec.from_edges(int(body["m"]), [tuple(e) for e in body.get("edges", [])], one_based=True)


def subspace_from_spec(spec: Mapping) -> AffineSubspace:
    """Affine set described by a JSON model spec.

    Accepted types: ``graph`` (m, 1-based edges), ``basis`` (optional
    offset, generators), ``rowsum`` (m), ``equicorrelation`` (m) and
    ``full`` (m).  The model spec may be wrapped as ``{"constraint": {...}}``.
    """
    body = _spec_body(spec)
    kind = body["type"]
    if kind == "graph":
        return subspace_from_graph(graph_from_spec(body))
    if kind == "basis":
        gens = [np.asarray(g, dtype=float) for g in body.get("generators", [])]
        offset = body.get("offset")
        if offset is None:
            if not gens:
                raise ValueError("basis spec needs generators or an offset")
            offset = np.zeros(gens[0].shape)
        offset = SymMatrix(offset, rtol=1e-9)
        if not gens:
            return AffineSubspace(offset)
        return AffineSubspace.from_generators([SymMatrix(g, rtol=1e-9) for g in gens], offset)
    if kind == "rowsum":
        return row_sum_subspace(int(body["m"]))
    if kind == "equicorrelation":
        return equicorrelation_subspace(int(body["m"]))
    if kind == "full":
        return AffineSubspace.full(int(body["m"]))
    raise ValueError(f"unknown model spec type {kind!r}")
