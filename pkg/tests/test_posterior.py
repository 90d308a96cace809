import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bogc.errors import DimensionMismatch, InvalidParameter, InvalidProbability, NotPositiveDefinite
from bogc.model import REGRESSION, Batch, ToyMultiModalNet
from bogc.posterior import (
    GaussianPosterior,
    PriorSpec,
    ggn_matrix,
    laplace_posterior,
    modality_posterior,
    neg_log_joint_gradient,
    nll_output_hessian,
)
from conftest import random_net_and_batch


def test_nll_hessian_examples():
    np.testing.assert_array_equal(nll_output_hessian(np.array([0.0, 1.0, 0.0])), np.zeros((3, 3)))
    np.testing.assert_allclose(nll_output_hessian(np.array([0.5, 0.5])),
                               [[0.25, -0.25], [-0.25, 0.25]])
    with pytest.raises(InvalidProbability):
        nll_output_hessian(np.array([0.7, 0.7]))
    with pytest.raises(InvalidProbability):
        nll_output_hessian(np.array([1.1, -0.1]))


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_nll_hessian_rows_sum_to_zero_and_psd(C, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(C))
    B = nll_output_hessian(p)
    assert np.max(np.abs(B.sum(axis=1))) < 1e-12
    assert np.min(np.linalg.eigvalsh(B)) > -1e-12


def test_ggn_hand_two_parameter_head():
    # One feature, two hidden units, two classes: Theta is 1x2.
    net = ToyMultiModalNet.init([2], hidden_dim=2, feature_dim=1, num_classes=2, scale=0.0)
    net.params["enc0.w1"] = np.eye(2)
    net.params["head0.w"] = np.array([[1.0], [-1.0]])
    x = np.array([[np.arctanh(0.5), np.arctanh(-0.25)]])
    G = ggn_matrix(net, Batch([x], [0]), 0, PriorSpec(1.0))
    # p = (1/2, 1/2) so W^T B W = 1 and G = psi psi^T + I with psi = (0.5, -0.25).
    np.testing.assert_allclose(G, [[1.25, -0.125], [-0.125, 1.0625]], rtol=1e-12)


def test_confident_outputs_leave_only_prior(gen):
    net, batch = random_net_and_batch(gen, M=2, T=4)
    net.params["head0.b"] = np.zeros(net.num_classes)
    net.params["head0.b"][0] = 60.0
    G = ggn_matrix(net, batch, 0, PriorSpec(0.5))
    np.testing.assert_allclose(G, 2.0 * np.eye(net.theta_dim), atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["classification", REGRESSION]),
       st.floats(0.1, 10))
def test_ggn_symmetric_pd_and_above_prior(seed, mode, v):
    net, batch = random_net_and_batch(np.random.default_rng(seed), mode=mode)
    prior = PriorSpec(v)
    for i in range(net.num_modalities):
        G = ggn_matrix(net, batch, i, prior)
        assert np.array_equal(G, G.T)
        np.linalg.cholesky(G)
        assert np.min(np.linalg.eigvalsh(G - prior.precision * np.eye(len(G)))) >= -1e-10


def test_laplace_examples():
    post = laplace_posterior(np.array([1.0, 1.0]), 2 * np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(post.mean, [1.0, 1.0])
    post = laplace_posterior(np.array([1.0, 1.0]), 2 * np.eye(2), np.array([2.0, 0.0]))
    np.testing.assert_allclose(post.mean, [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(post.covariance, 0.5 * np.eye(2))
    np.testing.assert_allclose(post.chol_factor @ post.chol_factor.T, post.covariance)


def test_laplace_errors():
    with pytest.raises(DimensionMismatch):
        laplace_posterior(np.zeros(2), np.eye(3), np.zeros(2))
    with pytest.raises(NotPositiveDefinite):
        laplace_posterior(np.zeros(2), -np.eye(2), np.zeros(2))
    with pytest.raises(InvalidParameter):
        PriorSpec(0.0)


@given(st.integers(0, 2**32 - 1))
def test_stronger_prior_shrinks_covariance(seed):
    net, batch = random_net_and_batch(np.random.default_rng(seed), M=1)
    wide = modality_posterior(net, batch, 0, PriorSpec(2.0)).covariance
    narrow = modality_posterior(net, batch, 0, PriorSpec(0.5)).covariance
    assert np.min(np.linalg.eigvalsh(wide - narrow)) >= -1e-10


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5))
def test_covariance_bounded_by_prior(seed, v):
    net, batch = random_net_and_batch(np.random.default_rng(seed))
    for i in range(net.num_modalities):
        cov = modality_posterior(net, batch, i, PriorSpec(v)).covariance
        assert np.max(np.linalg.eigvalsh(cov)) <= v + 1e-9


def test_duplicating_batch_never_increases_variance(gen):
    net, batch = random_net_and_batch(gen, M=2, T=5)
    doubled = batch.take(np.concatenate([np.arange(5), np.arange(5)]))
    for i in range(2):
        a = modality_posterior(net, batch, i).covariance
        b = modality_posterior(net, doubled, i).covariance
        assert np.all(np.diag(b) <= np.diag(a) * (1 + 1e-12))


def test_mean_shift_toggle(small_net_batch):
    net, batch = small_net_batch
    plain = modality_posterior(net, batch, 1, shift=False)
    np.testing.assert_array_equal(plain.mean, net.theta(1))
    shifted = modality_posterior(net, batch, 1, shift=True)
    q = neg_log_joint_gradient(net, batch, 1)
    np.testing.assert_allclose(shifted.mean, net.theta(1) - shifted.covariance @ q, rtol=1e-12)
    np.testing.assert_array_equal(plain.covariance, shifted.covariance)


def test_first_order_term_matches_finite_differences(small_net_batch):
    net, batch = small_net_batch
    from bogc.model import compute_losses

    prior = PriorSpec(0.7)
    q = neg_log_joint_gradient(net, batch, 0, prior)

    def neg_log_joint(theta):
        n = net.copy()
        n.set_theta(0, theta)
        nll = compute_losses(n, batch).uni[0] * batch.size
        return nll + 0.5 * prior.precision * theta @ theta

    th = net.theta(0)
    eps = 1e-6
    fd = np.array([(neg_log_joint(th + eps * e) - neg_log_joint(th - eps * e)) / (2 * eps)
                   for e in np.eye(len(th))])
    np.testing.assert_allclose(q, fd, rtol=1e-6, atol=1e-8)


def test_json_roundtrip_is_row_major():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    post = GaussianPosterior.from_covariance(np.array([1.0, -1.0]), cov)
    obj = json.loads(post.dumps())
    assert obj["covariance"] == [2.0, 0.5, 0.5, 1.0]
    back = GaussianPosterior.from_json(obj)
    np.testing.assert_array_equal(back.covariance, cov)
    np.testing.assert_array_equal(back.mean, post.mean)
