import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALL_LINKS, link_id, random_orthogonal, random_pd, random_sym
from entcov.errors import ConjugateDomainError, DomainError, NotPositiveDefinite
from entcov.specfun import (
    LinkFunction,
    LinkKind,
    SymMatrix,
    apply_matrix_function,
    dgrad_conjugate,
    link_conjugate_value,
    link_gradient,
    link_hessian,
    link_inverse_gradient,
    link_value,
    parse_link,
)

EXP_OFFDIAG = np.array([[np.cosh(1), np.sinh(1)], [np.sinh(1), np.cosh(1)]])


def test_symmatrix_rejects_asymmetric_and_symmetrizes():
    with pytest.raises(ValueError):
        SymMatrix([[1.0, 2.0], [2.1, 1.0]])
    s = SymMatrix([[1.0, 2.0], [2.0 + 1e-14, 1.0]])
    assert np.array_equal(s.array, s.array.T)
    assert not s.array.flags.writeable


def test_symmatrix_eigh_cached():
    s = SymMatrix(np.diag([3.0, 1.0]))
    assert s.eigh() is s.eigh()
    assert np.allclose(s.eigenvalues, [1.0, 3.0])


def test_symmatrix_arithmetic():
    a = SymMatrix(np.eye(2))
    b = a * 2 - a + np.eye(2)
    assert isinstance(b, SymMatrix)
    assert np.allclose(np.asarray(b), 2 * np.eye(2))


@pytest.mark.parametrize(
    "text, kind, param",
    [
        ("logdet", LinkKind.LOGDET, None),
        ("vonneumann", LinkKind.VONNEUMANN, None),
        ("power:1", LinkKind.POWER, 1.0),
        ("power:-0.5", LinkKind.POWER, -0.5),
        ("shifted", LinkKind.SHIFTED, 1.0),
        ("shifted:2.5", LinkKind.SHIFTED, 2.5),
    ],
)
def test_parse_link(text, kind, param):
    link = parse_link(text)
    assert link.kind is kind and link.param == param
    assert parse_link(link.name) == link


@pytest.mark.parametrize("text", ["power:0", "power:-1", "shifted:-1", "logdet:2", "power", "frobenius"])
def test_parse_link_rejects(text):
    with pytest.raises(ValueError):
        parse_link(text)


def test_essential_smoothness_flags():
    assert LinkFunction.logdet().essential_smooth
    assert LinkFunction.von_neumann().essential_smooth
    assert LinkFunction.shifted().essential_smooth
    assert LinkFunction.power(-2).essential_smooth
    assert not LinkFunction.power(1).essential_smooth
    assert not LinkFunction.power(0.5).essential_smooth


def test_apply_matrix_function_examples():
    assert np.allclose(apply_matrix_function(np.square, np.diag([1.0, 2.0])).array, np.diag([1.0, 4.0]))
    assert np.allclose(apply_matrix_function(np.log, np.eye(3)).array, 0.0)
    out = apply_matrix_function(np.exp, [[0.0, 1.0], [1.0, 0.0]]).array
    series = sum(np.linalg.matrix_power(np.array([[0.0, 1.0], [1.0, 0.0]]), k) / float(np.prod(range(1, k + 1))) for k in range(50))
    assert np.allclose(out, series, atol=1e-12)
    assert np.allclose(out, [[1.5431, 1.1752], [1.1752, 1.5431]], atol=1e-4)


def test_apply_matrix_function_domain():
    with pytest.raises(DomainError):
        apply_matrix_function(np.log, np.diag([1.0, -1.0]))


def test_link_value_examples():
    assert link_value(LinkFunction.logdet(), np.diag([2.0, 0.5])) == pytest.approx(0.0, abs=1e-15)
    assert link_value(LinkFunction.power(1), np.eye(2)) == pytest.approx(1.0)
    assert link_value(LinkFunction.von_neumann(), np.diag([np.e, 1.0])) == pytest.approx(-1.0)


def test_link_value_requires_pd():
    with pytest.raises(NotPositiveDefinite):
        link_value(LinkFunction.logdet(), np.diag([1.0, 0.0]))


def test_link_gradient_examples():
    assert np.allclose(link_gradient(LinkFunction.logdet(), np.eye(3)).array, -np.eye(3))
    assert np.allclose(link_gradient(LinkFunction.logdet(), np.diag([2.0, 4.0])).array, -np.diag([0.5, 0.25]))
    assert np.allclose(link_gradient(LinkFunction.shifted(1.0), [[2.0]]).array, [[1.5]])


def test_power_gradient_signs():
    s = np.diag([2.0, 3.0])
    assert np.allclose(link_gradient(LinkFunction.power(2), s).array, s @ s)
    assert np.allclose(link_gradient(LinkFunction.power(-2), s).array, -np.linalg.inv(s @ s))
    assert np.allclose(link_gradient(LinkFunction.power(-0.5), s).array, -np.diag(np.array([2.0, 3.0]) ** -0.5))


def test_conjugate_examples():
    assert link_conjugate_value(LinkFunction.logdet(), -np.eye(2)) == pytest.approx(-2.0)
    assert link_conjugate_value(LinkFunction.von_neumann(), np.zeros((3, 3))) == pytest.approx(3.0)
    assert link_conjugate_value(LinkFunction.power(1), [[3.0]]) == pytest.approx(4.5)


def test_conjugate_domain_error():
    with pytest.raises(ConjugateDomainError) as err:
        link_conjugate_value(LinkFunction.logdet(), np.diag([-1.0, 0.5]))
    assert err.value.eigenvalue == pytest.approx(0.5)


def test_inverse_gradient_examples():
    assert np.allclose(link_inverse_gradient(LinkFunction.shifted(1.0), np.zeros((2, 2))).array, np.eye(2))
    assert np.allclose(link_inverse_gradient(LinkFunction.logdet(), -np.diag([0.5, 0.25])).array, np.diag([2.0, 4.0]))
    out = link_inverse_gradient(LinkFunction.von_neumann(), [[0.0, 1.0], [1.0, 0.0]]).array
    assert np.allclose(out, EXP_OFFDIAG, atol=1e-12)


def test_inverse_gradient_outside_image():
    with pytest.raises(ConjugateDomainError):
        link_inverse_gradient(LinkFunction.logdet(), np.eye(2))
    with pytest.raises(ConjugateDomainError):
        link_inverse_gradient(LinkFunction.power(1), -np.eye(2))


def test_dgrad_conjugate_examples(rng):
    B = random_sym(rng, 3)
    L = random_pd(rng, 3)  # grad F* is the identity on the gradient image of Power(1)
    assert np.allclose(dgrad_conjugate(LinkFunction.power(1), L, B).array, B, atol=1e-12)
    assert np.allclose(dgrad_conjugate(LinkFunction.logdet(), -np.eye(3), np.eye(3)).array, np.eye(3))
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    vn = LinkFunction.von_neumann()
    h = 1e-6
    fd = (link_inverse_gradient(vn, h * flip).array - link_inverse_gradient(vn, -h * flip).array) / (2 * h)
    assert np.allclose(dgrad_conjugate(vn, np.zeros((2, 2)), flip).array, flip, atol=1e-12)
    assert np.allclose(fd, flip, atol=1e-8)


def _random_conj_point(link, rng, m):
    return link_gradient(link, random_pd(rng, m)).array


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_orthogonal_invariance(link, rng):
    for _ in range(5):
        m = int(rng.integers(1, 9))
        s = random_pd(rng, m)
        q = random_orthogonal(rng, m)
        a, b = link_value(link, s), link_value(link, q @ s @ q.T)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_gradient_matches_central_differences(link, rng):
    h = 1e-5
    for _ in range(20):
        m = int(rng.integers(2, 6))
        s, b = random_pd(rng, m, floor=0.5), random_sym(rng, m)
        fd = (link_value(link, s + h * b) - link_value(link, s - h * b)) / (2 * h)
        an = float(np.vdot(link_gradient(link, s).array, b))
        assert abs(fd - an) <= 1e-5 * max(1.0, abs(an))


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_fenchel_equality(link, rng):
    for _ in range(20):
        s = random_pd(rng, int(rng.integers(2, 6)))
        L = link_gradient(link, s).array
        gap = link_value(link, s) + link_conjugate_value(link, L) - float(np.vdot(s, L))
        assert abs(gap) <= 1e-8


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_inverse_gradient_roundtrip(link, rng):
    for _ in range(20):
        s = random_pd(rng, int(rng.integers(2, 6)))
        back = link_inverse_gradient(link, link_gradient(link, s)).array
        assert np.linalg.norm(back - s) <= 1e-9


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_dgrad_conjugate_finite_differences_and_symmetry(link, rng):
    h = 1e-6
    for _ in range(20):
        m = int(rng.integers(2, 5))
        L = _random_conj_point(link, rng, m)
        a, b = random_sym(rng, m), random_sym(rng, m)
        # keep the probe small relative to the distance to the image boundary
        step = h * min(1.0, 0.5 * link.image_margin(np.linalg.eigvalsh(L)) if np.isfinite(link.image_margin(np.linalg.eigvalsh(L))) else 1.0)
        fd = (link_inverse_gradient(link, L + step * b).array - link_inverse_gradient(link, L - step * b).array) / (2 * step)
        an = dgrad_conjugate(link, L, b).array
        assert np.linalg.norm(fd - an) <= 1e-5 * max(1.0, np.linalg.norm(an))
        lhs = float(np.vdot(a, an))
        rhs = float(np.vdot(b, dgrad_conjugate(link, L, a).array))
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_hessian_inverts_dgrad_conjugate(link, rng):
    s = random_pd(rng, 4)
    b = random_sym(rng, 4)
    L = link_gradient(link, s)
    db = link_hessian(link, s, b)
    assert np.allclose(dgrad_conjugate(link, L, db).array, b, atol=1e-8)


def test_divided_differences_with_repeated_eigenvalues():
    link = LinkFunction.von_neumann()
    b = np.array([[1.0, 2.0], [2.0, -1.0]])
    # at a multiple of I the derivative of exp is e^c times the identity map
    assert np.allclose(dgrad_conjugate(link, 0.3 * np.eye(2), b).array, np.exp(0.3) * b)


@settings(max_examples=60, deadline=None)
@given(
    q=st.floats(min_value=-3.0, max_value=3.0).filter(lambda q: abs(q) > 0.05 and abs(q + 1) > 0.05),
    x=st.floats(min_value=0.05, max_value=20.0),
)
def test_power_scalar_roundtrip(q, x):
    link = LinkFunction.power(q)
    y = link.phi_prime(x)
    assert link.phi_prime_inverse(y) == pytest.approx(x, rel=1e-10)
    gap = link.phi(x) + link.phi_conjugate(y) - x * y
    assert abs(gap) <= 1e-9 * max(1.0, abs(x * y))


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(min_value=0.01, max_value=50.0), y=st.floats(min_value=-1e4, max_value=1e4))
def test_shifted_inverse_is_stable(lam, y):
    link = LinkFunction.shifted(lam)
    x = link.phi_prime_inverse(y)
    assert x > 0
    assert link.phi_prime(x) == pytest.approx(y, rel=1e-9, abs=1e-9)
