"""Acceptance criteria 1-13, each checked at its stated tolerance.

Every criterion prints one ``[PASS]``/``[FAIL]`` line; under pytest the
lines are also collected into a terminal summary section. Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""

import filecmp
import functools
import os
import sys
import tempfile
import time

import numpy as np
import pytest
import yaml

sys.path.insert(0, os.path.dirname(__file__))
from conftest import ACCEPTANCE_LINES, make_dataset  # noqa: E402

from synthgmm import (  # noqa: E402
    AugmentedSystem,
    Dataset,
    DgpConfig,
    MomentModel,
    ObservationRecord,
    PackedParameters,
    PpiConfig,
    StudyConfig,
    build_augmented_moments,
    efficient_covariance,
    effective_sample_size,
    generate_dgp_sample,
    human_only_estimate,
    monte_carlo_study,
    partitioned_theta_variance,
    ppi_estimate,
    sandwich_covariance,
    select_alpha_crossfit,
    two_step_estimate,
)
from synthgmm.augmented import augmented_jacobian  # noqa: E402
from synthgmm.baselines import ppi_loss_gradient, select_alpha  # noqa: E402
from synthgmm.cli import cmd_simulate  # noqa: E402
from synthgmm.moments import evaluate_psi, glm_loss_gradient, psi_jacobian  # noqa: E402


def _random_spd(rng, k, cond=50.0):
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return Q @ np.diag(np.geomspace(1.0, cond, k)) @ Q.T


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# -- criteria -------------------------------------------------------------------


def criterion_1():
    rng = np.random.default_rng(1)
    n, d = 50, 3
    X = rng.standard_normal((n, d))
    X[:, 0] = 1.0
    y = X @ np.array([0.5, -1.0, 2.0]) + rng.standard_normal(n) * (1 + np.abs(X[:, 1]))
    data = Dataset(np.ones(n, dtype=int), X, y, np.zeros((0, n, d)), np.zeros((0, n)))
    t0 = time.perf_counter()
    est = two_step_estimate(AugmentedSystem(MomentModel(d, "identity"), 0), data)
    elapsed = time.perf_counter() - t0
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    e = y - X @ beta
    bread = np.linalg.inv(X.T @ X)
    hc0 = np.sqrt(np.diag(bread @ (X.T * e**2) @ X @ bread))
    sand_se = np.sqrt(np.diag(est.diagnostics["sandwich_covariance"]) / n)
    err_theta = np.max(np.abs(est.theta - beta))
    err_se = max(np.max(np.abs(est.theta_se - hc0)), np.max(np.abs(sand_se - hc0)))
    ok = err_theta <= 1e-8 and err_se <= 1e-6 and elapsed < 1.0
    return ok, f"|theta-OLS|={err_theta:.2e}, |se-HC0|={err_se:.2e}, {elapsed:.3f}s"


def criterion_2():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        link = rng.choice(["identity", "logistic"])
        data = make_dataset(rng, n=int(rng.integers(30, 120)), m=int(rng.integers(50, 300)), link=link)
        model = MomentModel(2, link)
        est = two_step_estimate(AugmentedSystem(model, 2), data)
        ref = human_only_estimate(model, data).theta
        worst = max(worst, float(np.max(np.abs(est.diagnostics["first_step_theta"] - ref))))
    return worst <= 1e-8, f"max |theta_step1 - theta_human| = {worst:.2e} over 50 datasets"


def criterion_3():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        M = int(rng.integers(1, 3))
        ph = 2 * M * d
        k = d + ph
        F = _random_spd(rng, k)
        Gm = rng.standard_normal((d, d)) + 3 * np.eye(d)
        Gh = np.zeros((ph, M * d))
        for i in range(M):
            B = rng.standard_normal((d, d)) + 3 * np.eye(d)
            Gh[i * d:(i + 1) * d, i * d:(i + 1) * d] = B * rng.uniform(0.3, 1.0)
            Gh[(M + i) * d:(M + i + 1) * d, i * d:(i + 1) * d] = B
        G = np.zeros((k, d + M * d))
        G[:d, :d] = Gm
        G[d:, d:] = Gh
        full = np.linalg.inv(G.T @ np.linalg.inv(F) @ G)[:d, :d]
        part = partitioned_theta_variance((F[:d, :d], F[:d, d:], F[d:, d:]), (Gm, Gh))
        worst = max(worst, _rel(part, full))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-10 and elapsed < 5.0, f"max relative error {worst:.2e}, {elapsed:.2f}s"


def criterion_4():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        q = int(rng.integers(1, 5))
        k = q + int(rng.integers(0, 6))
        G = rng.standard_normal((k, q))
        F = _random_spd(rng, k)
        W = np.linalg.inv(F)
        worst = max(worst, _rel(sandwich_covariance(G, W, F), efficient_covariance(G, F)))
    return worst <= 1e-10, f"max relative difference {worst:.2e} over 100 systems"


def _central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def criterion_5():
    rng = np.random.default_rng(5)
    neg, worst_psi, worst_aug = 0.0, 0.0, 0.0
    for i in range(100):
        d = int(rng.integers(1, 5))
        link = ("identity", "logistic")[i % 2]
        model = MomentModel(d, link)
        theta, x = rng.standard_normal(d), rng.standard_normal(d)
        y = float(rng.integers(0, 2)) if link == "logistic" else float(rng.standard_normal())
        neg = max(neg, float(np.max(np.abs(evaluate_psi(model, theta, x, y) + glm_loss_gradient(model, theta, x, y)))))
        J = psi_jacobian(model, theta, x, y)
        fd = _central_diff(lambda t: evaluate_psi(model, t, x, y), theta)
        worst_psi = max(worst_psi, float(np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(J)))))

        M = int(rng.integers(0, 3))
        system = AugmentedSystem(model, M)
        s = int(rng.integers(0, 2))
        aux = [(rng.standard_normal(d), float(rng.integers(0, 2))) for _ in range(M)]
        rec = ObservationRecord("p", s, tuple(x) if s else None, y if s else None, aux)
        flat = rng.standard_normal(system.total_params)
        J = augmented_jacobian(system, rec, PackedParameters.from_flat(system, flat))
        fd = _central_diff(
            lambda v: build_augmented_moments(system, rec, PackedParameters.from_flat(system, v)), flat
        )
        worst_aug = max(worst_aug, float(np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(J)))))
    ok = neg == 0.0 and worst_psi <= 1e-5 and worst_aug <= 1e-5
    return ok, f"psi+grad={neg:.1e}, psi FD {worst_psi:.1e}, augmented FD {worst_aug:.1e}"


def criterion_6():
    t0 = time.perf_counter()
    methods = ("human-only", "gmm-proxy", "gmm-synth", "ppi-proxy")
    study = StudyConfig(DgpConfig(n=500, m=500, synth_fidelity=1.0), methods=methods, trials=500, seed=6)
    metrics = monte_carlo_study(study)
    elapsed = time.perf_counter() - t0
    cov = {name: metrics[name].coverage_target for name in methods}
    ok = all(0.92 <= c <= 0.97 for c in cov.values()) and elapsed < 600
    return ok, ", ".join(f"{k}={v:.3f}" for k, v in cov.items()) + f" ({elapsed:.0f}s)"


@functools.lru_cache(maxsize=None)
def _efficiency_study():
    study = StudyConfig(
        DgpConfig(n=100, m=900, proxy_x_noise=0.05, proxy_y_flip=0.05, synth_fidelity=1.0),
        methods=("human-only", "gmm-synth"),
        trials=200,
        ess_grid=(50, 100, 200, 400, 800),
        seed=7,
    )
    return monte_carlo_study(study)


def criterion_7():
    m = _efficiency_study()
    h, g = m["human-only"], m["gmm-synth"]
    ratio = g.mse_target / h.mse_target
    ok = ratio <= 0.7 and g.width_target < h.width_target and g.coverage_target >= 0.90
    return ok, (f"MSE ratio {ratio:.3f}, width {g.width_target:.3f} vs {h.width_target:.3f}, "
                f"coverage {g.coverage_target:.3f}")


def criterion_8():
    dgp = DgpConfig(n=200, m=800, synth_fidelity=0.0, proxy_independent=True)
    m = monte_carlo_study(StudyConfig(dgp, methods=("human-only", "gmm-synth"), trials=400, seed=8))
    ratio = m["gmm-synth"].mse_target / m["human-only"].mse_target
    return 0.75 <= ratio <= 1.25, f"MSE(gmm-synth)/MSE(human-only) = {ratio:.3f}"


def criterion_9():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(20):
        link = ("identity", "logistic")[i % 2]
        data = make_dataset(rng, n=80, m=200, link=link)
        model = MomentModel(2, link)
        synth = ppi_estimate(model, data, PpiConfig(alpha=1.0), method="ppi-synth")
        proxy = ppi_estimate(model, data.select_sources([0]), PpiConfig(alpha=1.0), method="ppi-proxy")
        worst = max(worst, float(np.max(np.abs(synth.theta - proxy.theta))),
                    float(np.max(np.abs(synth.se - proxy.se))))
    return worst <= 1e-12, f"max difference {worst:.1e} over 20 datasets"


def criterion_10():
    rng = np.random.default_rng(10)
    model = MomentModel(2, "logistic")
    data = make_dataset(rng, n=120, m=300)
    cf = select_alpha_crossfit(model, data, PpiConfig(folds=2), seed=3)
    mean_exact = np.array_equal(cf.theta, cf.diagnostics["fold_thetas"].mean(axis=0))

    half = make_dataset(rng, n=80, m=120)
    T = half.T
    doubled = Dataset(
        np.r_[half.s, half.s], np.r_[half.x, half.x], np.r_[half.y, half.y],
        np.concatenate([half.aux_x, half.aux_x], axis=1), np.concatenate([half.aux_y, half.aux_y], axis=1),
    )
    folds = np.r_[np.zeros(T, int), np.ones(T, int)]
    dup = select_alpha_crossfit(model, doubled, PpiConfig(folds=2), folds=folds)
    pilot = human_only_estimate(model, half).theta
    alpha, _ = select_alpha(model, half, pilot, PpiConfig().alpha_grid, 1.0)
    single = ppi_estimate(model, half, PpiConfig(alpha=alpha))
    dup_err = float(np.max(np.abs(dup.theta - single.theta)))
    return mean_exact and dup_err == 0.0, f"mean-of-folds exact={mean_exact}, duplicated-fold diff={dup_err:.1e}"


def criterion_11():
    dgp = DgpConfig(n=30, m=60, proxy_x_noise=0.3, proxy_y_flip=0.2, synth_fidelity=0.5)
    model = MomentModel(2, "logistic")
    theta = np.asarray(dgp.theta_star)
    reps = 10_000
    grads = {a: np.empty((reps, 2)) for a in (0.0, 0.5, 1.0)}
    for r in range(reps):
        data = generate_dgp_sample(dgp, (11, r))
        for a in grads:
            grads[a][r] = ppi_loss_gradient(model, data, theta, a, 1.0)
    z = {a: np.abs(g.mean(axis=0)) / (g.std(axis=0, ddof=1) / np.sqrt(reps)) for a, g in grads.items()}
    worst = max(float(v.max()) for v in z.values())
    return worst < 4.0, "max |mean|/se = " + ", ".join(f"a={a}: {v.max():.2f}" for a, v in z.items())


def criterion_12():
    curve = [(100, 0.04), (400, 0.01)]
    n_eff = effective_sample_size(0.02, curve).n_eff
    m = _efficiency_study()
    ess = m["gmm-synth"].effective_sample_size
    ok = abs(n_eff - 200) <= 2.0 and ess > 100
    return ok, f"1/n curve n_eff={n_eff:.3f}, gmm-synth ESS={ess:.1f} at n=100"


def criterion_13():
    outputs = ("summary.csv", "trials.csv", "metrics.json")
    cfg = {
        "seed": 13, "trials": 12, "ess_grid": [50, 100, 200],
        "dgp": {"n": 60, "m": 240, "synth_fidelity": 0.7},
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "study.yaml")
        with open(path, "w") as fh:
            yaml.safe_dump(cfg, fh)
        runs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 8)):
            out = os.path.join(tmp, tag)
            cmd_simulate(path, out, {"workers": workers})
            runs.append(out)
        same = all(
            filecmp.cmp(os.path.join(runs[0], f), os.path.join(other, f), shallow=False)
            for other in runs[1:] for f in outputs
        )
    return same, "rerun and 8-worker outputs byte-identical" if same else "outputs differ"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def _run(i):
    ok, detail = CRITERIA[i]()
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {i}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok, detail


@pytest.mark.parametrize("i", sorted(CRITERIA))
def test_criterion(i):
    ok, detail = _run(i)
    assert ok, detail


if __name__ == "__main__":
    results = [_run(i)[0] for i in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
