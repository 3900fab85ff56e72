import numpy as np
import pytest

from conftest import ALL_LINKS, CHAIN_S, link_id, random_pd, random_sym
from entcov.breg import bregman, bregman_dual, kkt_residual, objective, objective_gradient
from entcov.errors import ConjugateDomainError, NotInDomain
from entcov.model import AffineSubspace
from entcov.solve import fit_dual_pgd
from entcov.specfun import LinkFunction, link_gradient, link_inverse_gradient

LOGDET = LinkFunction.logdet()
VN = LinkFunction.von_neumann()
LIN = LinkFunction.power(1)


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_bregman_zero_on_diagonal(link):
    assert bregman(link, np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-14)


def test_bregman_examples():
    assert bregman(LOGDET, np.diag([2.0, 1.0]), np.eye(2)) == pytest.approx(1 - np.log(2))
    assert bregman(LIN, np.eye(2), 2 * np.eye(2)) == pytest.approx(1.0)


def test_bregman_domain():
    psd = np.diag([1.0, 0.0])
    assert bregman(LIN, psd, np.eye(2)) == pytest.approx(0.5)
    assert bregman(VN, psd, np.eye(2)) == pytest.approx(1.0)
    with pytest.raises(NotInDomain) as err:
        bregman(LOGDET, psd, np.eye(2))
    assert err.value.argument == "S"
    with pytest.raises(NotInDomain) as err:
        bregman(LOGDET, np.eye(2), psd)
    assert err.value.argument == "Sigma"


def test_bregman_dual_examples():
    s = np.diag([2.0, 1.0])
    assert bregman_dual(LOGDET, s, link_gradient(LOGDET, s)) == pytest.approx(0.0, abs=1e-14)
    assert bregman_dual(VN, np.eye(2), np.zeros((2, 2))) == pytest.approx(0.0, abs=1e-14)
    assert bregman_dual(LOGDET, s, -np.eye(2)) == pytest.approx(1 - np.log(2))


def test_bregman_dual_outside_conjugate_domain():
    with pytest.raises(ConjugateDomainError):
        bregman_dual(LOGDET, np.eye(2), np.eye(2))


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_bregman_nonnegative_and_consistent(link, rng):
    for _ in range(125):
        m = int(rng.integers(1, 5))
        s, sig = random_pd(rng, m), random_pd(rng, m)
        d = bregman(link, s, sig)
        assert d >= 0
        if np.linalg.norm(s - sig) > 1e-8:
            assert d > 1e-10
        dual = bregman_dual(link, s, link_gradient(link, sig))
        assert abs(dual - d) <= 1e-8 * max(1.0, abs(d))


def test_objective_examples(rng):
    assert objective(LOGDET, -np.eye(2), np.eye(2)) == pytest.approx(0.0, abs=1e-14)
    s = random_pd(rng, 3)
    assert objective(LIN, s, s) == pytest.approx(0.5 * np.linalg.norm(s) ** 2)
    assert objective(VN, np.zeros((4, 4)), s[:1, :1] * np.eye(4)) == pytest.approx(-4.0)


@pytest.mark.parametrize("link", ALL_LINKS, ids=link_id)
def test_objective_concave_along_segments(link, rng):
    for _ in range(20):
        m = 3
        s_n = random_pd(rng, m)
        l1 = link_gradient(link, random_pd(rng, m)).array
        l2 = link_gradient(link, random_pd(rng, m)).array
        for t in (0.25, 0.5, 0.75):
            mid = objective(link, t * l1 + (1 - t) * l2, s_n)
            chord = t * objective(link, l1, s_n) + (1 - t) * objective(link, l2, s_n)
            assert mid >= chord - 1e-9


def test_objective_gradient_examples(rng):
    s = random_pd(rng, 3)
    for link in ALL_LINKS:
        assert np.allclose(objective_gradient(link, link_gradient(link, s), s), 0.0, atol=1e-10)
    L = random_pd(rng, 3)
    assert np.allclose(objective_gradient(LIN, L, s), s - L)
    assert np.allclose(objective_gradient(LOGDET, -np.eye(2), 2 * np.eye(2)), np.eye(2))


@pytest.mark.parametrize("link", [LOGDET, VN, LinkFunction.shifted(1.0)], ids=link_id)
def test_objective_gradient_matches_finite_differences(link, rng):
    s_n = random_pd(rng, 3)
    L = link_gradient(link, random_pd(rng, 3)).array
    b = random_sym(rng, 3)
    h = 1e-6
    fd = (objective(link, L + h * b, s_n) - objective(link, L - h * b, s_n)) / (2 * h)
    assert fd == pytest.approx(float(np.vdot(objective_gradient(link, L, s_n), b)), rel=1e-6)


def test_kkt_residual_examples(chain3):
    s = np.diag([1.0, 2.0, 3.0])
    rep = kkt_residual(LOGDET, chain3, s, s)
    assert rep.primal_feas == pytest.approx(0.0, abs=1e-15) and rep.dual_feas == 0.0
    sigma = fit_dual_pgd(LOGDET, chain3, CHAIN_S).sigma_hat.array
    rep = kkt_residual(LOGDET, chain3, sigma, CHAIN_S)
    assert rep.max_residual <= 1e-8 and rep.ok(1e-8)


def test_kkt_residual_perturbations(chain3):
    sigma = fit_dual_pgd(LOGDET, chain3, CHAIN_S).sigma_hat.array
    on_model = sigma.copy()
    on_model[0, 1] += 0.1
    on_model[1, 0] += 0.1
    assert kkt_residual(LOGDET, chain3, on_model, CHAIN_S).dual_feas == pytest.approx(0.1 * np.sqrt(2), rel=1e-9)
    off_model = sigma.copy()
    off_model[0, 2] += 0.1
    off_model[2, 0] += 0.1
    rep = kkt_residual(LOGDET, chain3, off_model, CHAIN_S)
    assert rep.dual_feas <= 1e-12
    expected = np.sqrt(2) * abs(link_gradient(LOGDET, off_model).array[0, 2])
    assert rep.primal_feas == pytest.approx(expected, rel=1e-9)


def test_kkt_report_domain_margin():
    rep = kkt_residual(LOGDET, AffineSubspace.full(2), np.diag([1.0, 2.0]), np.diag([1.0, 2.0]))
    assert rep.min_eig_L_domain == pytest.approx(0.5)
    assert rep.min_eig_sigma == pytest.approx(1.0)
    assert np.allclose(link_inverse_gradient(LOGDET, -np.diag([1.0, 0.5])).array, np.diag([1.0, 2.0]))
