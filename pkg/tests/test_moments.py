import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthgmm import DomainError, MomentModel, StructuralError
from synthgmm.moments import (
    evaluate_psi,
    glm_loss,
    glm_loss_gradient,
    hessian_rows,
    loss_rows,
    psi_jacobian,
    psi_rows,
)


def test_identity_score_is_residual_times_x():
    model = MomentModel(2, "identity")
    x = np.array([1.0, 2.0])
    psi = evaluate_psi(model, [0.5, 0.25], x, 3.0)
    np.testing.assert_allclose(psi, x * (3.0 - 1.0))


def test_logistic_score_at_zero():
    model = MomentModel(1, "logistic")
    assert evaluate_psi(model, [0.0], [2.0], 1.0)[0] == pytest.approx(1.0)


def test_logistic_loss_stable_for_large_index():
    model = MomentModel(1, "logistic")
    assert glm_loss(model, [800.0], [1.0], 1.0) == pytest.approx(0.0, abs=1e-12)
    assert glm_loss(model, [-800.0], [1.0], 1.0) == pytest.approx(800.0)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.sampled_from([0.0, 1.0]),
    st.sampled_from(["identity", "logistic"]),
)
def test_psi_is_negated_loss_gradient(theta, x, y, link):
    model = MomentModel(3, link)
    np.testing.assert_array_equal(evaluate_psi(model, theta, x, y), -glm_loss_gradient(model, theta, x, y))


def test_jacobian_symmetric_negative_semidefinite(rng):
    model = MomentModel(3, "logistic")
    J = psi_jacobian(model, rng.standard_normal(3), rng.standard_normal(3), 1.0)
    np.testing.assert_allclose(J, J.T)
    assert np.linalg.eigvalsh(J).max() <= 1e-15


def test_vector_kernels_match_single_record(rng):
    model = MomentModel(2, "logistic")
    X, y, theta = rng.standard_normal((5, 2)), rng.integers(0, 2, 5).astype(float), rng.standard_normal(2)
    rows = psi_rows(model, theta, X, y)
    for i in range(5):
        np.testing.assert_allclose(rows[i], evaluate_psi(model, theta, X[i], y[i]))
    np.testing.assert_allclose(loss_rows(model, theta, X, y), [glm_loss(model, theta, X[i], y[i]) for i in range(5)])
    H = hessian_rows(model, theta, X)
    np.testing.assert_allclose(H, -sum(psi_jacobian(model, theta, X[i], y[i]) for i in range(5)))


def test_errors():
    model = MomentModel(2)
    with pytest.raises(StructuralError):
        evaluate_psi(model, [0.0, 0.0], [1.0], 0.0)
    with pytest.raises(DomainError):
        evaluate_psi(model, [np.nan, 0.0], [1.0, 1.0], 0.0)
    with pytest.raises(Exception):
        MomentModel(2, "probit")
