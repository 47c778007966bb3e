import numpy as np
import pytest

from synthgmm import IdentificationError, MomentModel, UsageError
from synthgmm import simulation as sim
from synthgmm._optim import fit_glm
from synthgmm.baselines import human_only_estimate
from synthgmm.estimators import MethodResult
from synthgmm.moments import psi_rows
from synthgmm.simulation import (
    DgpConfig,
    StudyConfig,
    effective_sample_size,
    fidelity_sweep,
    generate_dgp_sample,
    monte_carlo_study,
    resolve_workers,
    run_trial,
)


def test_sample_layout_and_determinism():
    dgp = DgpConfig(n=7, m=13, seed=4)
    a = generate_dgp_sample(dgp, 3)
    b = generate_dgp_sample(dgp, 3)
    c = generate_dgp_sample(dgp, 4)
    assert (a.T, a.n, a.M) == (20, 7, 2)
    assert np.all(a.s[:7] == 1) and np.all(a.s[7:] == 0)
    for field in ("x", "y", "aux_x", "aux_y"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.aux_y, c.aux_y)
    assert np.all(a.aux_x[:, :, 0] == 1.0)


def test_rows_do_not_depend_on_sample_size():
    small = generate_dgp_sample(DgpConfig(n=5, m=5), 0)
    large = generate_dgp_sample(DgpConfig(n=5, m=50), 0)
    np.testing.assert_array_equal(small.aux_x[:, :10], large.aux_x[:, :10])


@pytest.mark.parametrize("link", ["logistic", "identity"])
def test_noiseless_proxy_equals_real(link):
    dgp = DgpConfig(n=50, m=10, link=link, proxy_x_noise=0.0, proxy_y_flip=0.0, proxy_y_noise=0.0)
    data = generate_dgp_sample(dgp, 1)
    np.testing.assert_array_equal(data.aux_x[0, :50], data.x)
    np.testing.assert_array_equal(data.aux_y[0, :50], data.y)


@pytest.mark.parametrize("link", ["logistic", "identity"])
def test_calibrated_synthetic_moments_match_real(link):
    dgp = DgpConfig(n=100_000, m=0, link=link, synth_fidelity=1.0)
    data = generate_dgp_sample(dgp, 2)
    model = MomentModel(2, link)
    theta = np.asarray(dgp.theta_star)
    real = psi_rows(model, theta, data.x, data.y)
    synth = psi_rows(model, theta, data.aux_x[1], data.aux_y[1])
    diff = real - synth
    z = np.abs(diff.mean(axis=0)) / (diff.std(axis=0) / np.sqrt(len(diff)))
    assert np.all(z < 4)
    # anchored: synthetic residuals track the real ones
    assert np.corrcoef(real[:, 1], synth[:, 1])[0, 1] > 0.3


def test_misspecified_synthetic_law():
    dgp = DgpConfig(n=40_000, m=0, synth_fidelity=0.0, synth_shift=(0.5, -0.5))
    data = generate_dgp_sample(dgp, 0)
    eta = fit_glm(MomentModel(2), data.aux_x[1], data.aux_y[1]).x
    np.testing.assert_allclose(eta, [0.0, 0.5], atol=0.06)


def test_rows_independent():
    data = generate_dgp_sample(DgpConfig(n=20_000, m=0), 5)
    r = np.corrcoef(data.y[:-1], data.y[1:])[0, 1]
    assert abs(r) < 4 / np.sqrt(data.n)


def test_config_validation():
    with pytest.raises(UsageError):
        DgpConfig(theta_star=(1.0,))
    with pytest.raises(UsageError):
        DgpConfig(proxy_y_flip=1.5)
    with pytest.raises(UsageError):
        StudyConfig(methods=())
    with pytest.raises(UsageError):
        StudyConfig(methods=("ols",))
    with pytest.raises(UsageError):
        StudyConfig(trials=0)


def _oracle(theta_star):
    def fake(name, data, *args, **kwargs):
        t = np.asarray(theta_star, dtype=float)
        return MethodResult(name, t, np.ones(2), t - 1.96, t + 1.96, True)
    return fake


def test_perfect_estimator_metrics(monkeypatch):
    study = StudyConfig(DgpConfig(n=20, m=20), methods=("human-only",), trials=5)
    monkeypatch.setattr(sim, "fit_method", _oracle(study.dgp.theta_star))
    m = monte_carlo_study(study)["human-only"]
    assert m.mse_target == 0.0 and m.coverage_target == 1.0
    assert m.n_converged == 5 and m.trials == 5


def test_failures_are_counted(monkeypatch):
    good = _oracle((-0.5, 1.0))

    def flaky(name, data, *args, seed=0, **kwargs):
        if data.y.sum() % 2:
            raise IdentificationError("odd")
        return good(name, data)

    monkeypatch.setattr(sim, "fit_method", flaky)
    study = StudyConfig(DgpConfig(n=20, m=20), methods=("human-only",), trials=30)
    metrics = monte_carlo_study(study)
    m = metrics["human-only"]
    assert 0 < m.n_failed < 30
    assert m.n_failed + m.n_converged + m.n_nonconverged == 30
    assert np.isnan(metrics.estimates("human-only")).any()


def test_run_trial_methods_see_same_data():
    study = StudyConfig(DgpConfig(n=60, m=60), methods=("human-only", "ppi-synth"), trials=1)
    recs = run_trial(study, 0)
    assert [r["method"] for r in recs] == ["human-only", "ppi-synth"]
    data = generate_dgp_sample(study.dgp, (study.seed, sim.MAIN_STREAM, 0))
    np.testing.assert_array_equal(recs[0]["theta"], human_only_estimate(MomentModel(2), data).theta)


def test_effective_sample_size():
    curve = [(100, 0.04), (200, 0.02), (400, 0.01)]
    assert effective_sample_size(0.02, curve).n_eff == pytest.approx(200)
    assert effective_sample_size(0.015, curve).n_eff == pytest.approx(200 * 0.02 / 0.015)
    low = effective_sample_size(0.001, curve)
    assert low.n_eff == 400 and low.out_of_range
    high = effective_sample_size(1.0, curve)
    assert high.n_eff == 100 and high.out_of_range
    bumpy = effective_sample_size(0.02, [(100, 0.04), (200, 0.05), (400, 0.01)])
    assert bumpy.monotonized and 100 < bumpy.n_eff < 400
    with pytest.raises(UsageError):
        effective_sample_size(0.02, [(100, 0.04)])
    with pytest.raises(UsageError):
        effective_sample_size(0.02, [(100, 0.0), (200, 0.01)])


def test_fidelity_sweep_rows():
    study = StudyConfig(DgpConfig(n=60, m=140), methods=("human-only", "gmm-synth"), trials=6)
    rows = fidelity_sweep(study, [0.0, 0.5, 1.0])
    assert [r["gamma"] for r in rows] == [0.0, 0.5, 1.0]
    assert {"mse[gmm-synth]", "var[human-only]"} <= set(rows[0])
    with pytest.raises(UsageError):
        fidelity_sweep(study, [1.5])


def test_fidelity_helps():
    study = StudyConfig(DgpConfig(n=100, m=900), methods=("human-only", "gmm-synth"), trials=150, seed=3)
    lo, hi = fidelity_sweep(study, [0.0, 1.0])
    assert hi["mse[gmm-synth]"] <= lo["mse[gmm-synth]"]


def test_consistency_trend():
    mses = []
    for n in (100, 300, 800):
        study = StudyConfig(DgpConfig(n=n, m=n), methods=("gmm-synth",), trials=100, seed=2)
        mses.append(monte_carlo_study(study)["gmm-synth"].mse_target)
    assert mses[0] > mses[1] > mses[2]


def test_studentized_errors_near_standard_normal():
    study = StudyConfig(DgpConfig(n=500, m=500), methods=("human-only", "gmm-synth"), trials=500, seed=12)
    metrics = monte_carlo_study(study)
    for name in study.methods:
        rows = [r for r in metrics.trials if r["method"] == name and not r["failed"]]
        z = np.array([(r["theta"][1] - 1.0) / r["se"][1] for r in rows])
        assert 0.8 <= z.var() <= 1.25
        assert abs(z.mean()) < 4 / np.sqrt(len(z))


def test_worker_cap(monkeypatch):
    monkeypatch.setenv(sim.WORKER_CAP_ENV, "2")
    assert resolve_workers(8) == 2
    monkeypatch.setenv(sim.WORKER_CAP_ENV, "x")
    with pytest.raises(UsageError):
        resolve_workers(3)


def test_parallel_matches_serial():
    study = StudyConfig(DgpConfig(n=40, m=80), methods=("human-only", "ppi-synth-crossfit"), trials=6)
    a = monte_carlo_study(study)
    b = monte_carlo_study(StudyConfig(**{**study.__dict__, "workers": 3}))
    np.testing.assert_array_equal(a.estimates("ppi-synth-crossfit"), b.estimates("ppi-synth-crossfit"))
