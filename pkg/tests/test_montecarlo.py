import csv
import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from replica_cs.bounds import gap_bounds, mi_sandwich, mmse_sandwich
from replica_cs.channel import i_x, mmse_x
from replica_cs.errors import EnumerationTooLarge, OutOfRange
from replica_cs.montecarlo import (
    Instance,
    _posterior_discrete,
    _posterior_mixture,
    estimate,
    exact_posterior_mean,
    mi_density,
    mi_difference_profile,
    sample_instance,
    trial_statistics,
)
from replica_cs.prior import (
    bernoulli_gaussian_prior,
    bpsk_prior,
    figure1_prior,
    gaussian_prior,
    make_prior,
    moments,
)


def brute_force_discrete(p, inst):
    """Posterior mean, per-coordinate variance and MI density by explicit loops."""
    atoms = list(zip(p.weights, p.means))
    logs, xs = [], []
    for combo in itertools.product(atoms, repeat=inst.n):
        x = np.array([m for _, m in combo])
        r = inst.y - inst.a @ x
        logs.append(sum(math.log(w) for w, _ in combo) - 0.5 * r @ r)
        xs.append(x)
    logs, xs = np.array(logs), np.array(xs)
    top = logs.max()
    wts = np.exp(logs - top)
    lse = top + math.log(wts.sum())
    wts /= wts.sum()
    mean = wts @ xs
    var = (wts @ xs**2 - mean**2).mean()
    r = inst.y - inst.a @ inst.x
    return mean, var, -0.5 * r @ r - lse


def gaussian_instance_oracle(var, inst):
    """Conjugate formulas for a zero-mean Gaussian prior."""
    a, y = inst.a, inst.y
    cov = np.linalg.inv(np.eye(inst.n) / var + a.T @ a)
    mean = cov @ a.T @ y
    c = np.eye(inst.m) + var * a @ a.T
    r = y - a @ inst.x
    mi = -0.5 * r @ r + 0.5 * np.linalg.slogdet(c)[1] + 0.5 * y @ np.linalg.solve(c, y)
    return mean, np.trace(cov) / inst.n, mi


class TestSampling:
    def test_empty_measurements(self):
        inst = sample_instance(bpsk_prior(), 5, 0, seed=1)
        assert inst.y.shape == (0,) and inst.a.shape == (0, 5)

    def test_deterministic(self):
        a = sample_instance(figure1_prior(0.1), 4, 6, seed=9, trial=3)
        b = sample_instance(figure1_prior(0.1), 4, 6, seed=9, trial=3)
        for f in ("x", "a", "w", "y"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_trials_differ(self):
        a = sample_instance(bpsk_prior(), 4, 6, seed=9, trial=0)
        b = sample_instance(bpsk_prior(), 4, 6, seed=9, trial=1)
        assert not np.array_equal(a.a, b.a)

    def test_model_equation(self):
        inst = sample_instance(gaussian_prior(), 5, 7, seed=2)
        assert np.array_equal(inst.y, inst.a @ inst.x + inst.w)

    def test_prefix_nesting(self):
        big = sample_instance(bpsk_prior(), 4, 20, seed=5, trial=11)
        small = sample_instance(bpsk_prior(), 4, 8, seed=5, trial=11)
        assert np.array_equal(big.x, small.x)
        assert np.array_equal(big.a[:8], small.a)
        assert np.array_equal(big.w[:8], small.w)

    def test_matrix_entry_variance(self):
        n = 5
        col = np.array([sample_instance(bpsk_prior(), n, 1, seed=3, trial=t).a[0, 0] for t in range(10_000)])
        sq = col**2
        assert abs(sq.mean() - 1 / n) < 5 * sq.std() / math.sqrt(sq.size)

    def test_seed_range(self):
        with pytest.raises(OutOfRange):
            sample_instance(bpsk_prior(), 2, 2, seed=-1)
        with pytest.raises(OutOfRange):
            sample_instance(bpsk_prior(), 2, 2, seed=2**64)


class TestPosterior:
    def test_symmetric_observation(self):
        inst = Instance(np.array([1.0]), np.array([[1.0]]), np.array([-1.0]), np.array([0.0]))
        mean, _ = exact_posterior_mean(bpsk_prior(), inst)
        assert mean[0] == pytest.approx(0.0, abs=1e-15)

    def test_scalar_tanh(self):
        inst = Instance(np.array([1.0]), np.array([[1.0]]), np.array([0.0]), np.array([1.0]))
        mean, var = exact_posterior_mean(bpsk_prior(), inst)
        assert mean[0] == pytest.approx(math.tanh(1.0), abs=1e-15)
        assert var == pytest.approx(1 - math.tanh(1.0) ** 2, abs=1e-15)

    def test_no_data(self, any_prior):
        inst = sample_instance(any_prior, 3, 0, seed=1)
        mean, var = exact_posterior_mean(any_prior, inst)
        assert np.all(mean == moments(any_prior)[0]) and var == moments(any_prior)[1]
        assert mi_density(any_prior, inst) == 0.0

    @pytest.mark.parametrize("p", [bpsk_prior(), make_prior([(0.2, -1, 0), (0.5, 0, 0), (0.3, 2, 0)])],
                             ids=["bpsk", "ternary"])
    def test_discrete_against_loops(self, p):
        for trial in range(5):
            inst = sample_instance(p, 4, 6, seed=17, trial=trial)
            mean, var, mi = brute_force_discrete(p, inst)
            got_mean, got_var = exact_posterior_mean(p, inst)
            np.testing.assert_allclose(got_mean, mean, atol=1e-12)
            assert got_var == pytest.approx(var, abs=1e-12)
            assert mi_density(p, inst) == pytest.approx(mi, abs=1e-10)

    def test_gaussian_conjugate(self):
        var = 2.0
        p = gaussian_prior(var)
        for trial in range(5):
            inst = sample_instance(p, 5, 3 + trial, seed=4, trial=trial)
            mean, post_var, mi = gaussian_instance_oracle(var, inst)
            got_mean, got_var = exact_posterior_mean(p, inst)
            np.testing.assert_allclose(got_mean, mean, atol=1e-12)
            assert got_var == pytest.approx(post_var, rel=1e-12)
            assert mi_density(p, inst) == pytest.approx(mi, abs=1e-10)

    def test_mixture_against_scalar_integral(self):
        p = bernoulli_gaussian_prior(0.3, 4.0)
        a, y = 0.8, 1.7
        inst = Instance(np.array([0.0]), np.array([[a]]), np.array([y]), np.array([y]))
        rho, v = 0.3, 4.0

        def lik(x):
            return math.exp(-0.5 * (y - a * x) ** 2)

        def dens(x):
            return rho * math.exp(-0.5 * x * x / v) / math.sqrt(2 * math.pi * v)

        z0 = (1 - rho) * lik(0.0)
        z = z0 + integrate.quad(lambda x: dens(x) * lik(x), -60, 60, epsabs=1e-14)[0]
        m1 = integrate.quad(lambda x: x * dens(x) * lik(x), -60, 60, epsabs=1e-14)[0] / z
        m2 = integrate.quad(lambda x: x * x * dens(x) * lik(x), -60, 60, epsabs=1e-14)[0] / z
        mean, var = exact_posterior_mean(p, inst)
        assert mean[0] == pytest.approx(m1, abs=1e-11)
        assert var == pytest.approx(m2 - m1**2, abs=1e-11)
        assert mi_density(p, inst) == pytest.approx(math.log(lik(0.0) / z), abs=1e-11)

    def test_paths_agree_on_point_masses(self):
        p = bpsk_prior()
        inst = sample_instance(p, 5, 9, seed=8)
        a, y = inst.a[None], inst.y[None]
        d = _posterior_discrete(p, a, y, [2, 9], 2**24)
        m = _posterior_mixture(p, a, y, [2, 9], 2**24)
        for u, v in zip(d, m):
            np.testing.assert_allclose(u, v, atol=1e-12)

    def test_large_means_are_stable(self):
        p = figure1_prior(0.1)
        inst = sample_instance(p, 3, 40, seed=6)
        mean, var = exact_posterior_mean(p, inst)
        assert np.all(np.isfinite(mean)) and 0 <= var < moments(p)[1]
        assert math.isfinite(mi_density(p, inst))

    def test_enumeration_limit(self):
        inst = sample_instance(bpsk_prior(), 10, 2, seed=1)
        with pytest.raises(EnumerationTooLarge):
            exact_posterior_mean(bpsk_prior(), inst, max_states=2**9)
        with pytest.raises(EnumerationTooLarge):
            estimate(bpsk_prior(), 25, 4, 2, seed=1)


class TestEstimate:
    def test_no_data_is_exact(self, any_prior):
        est = estimate(any_prior, 3, 0, 20, seed=1)
        assert est.mmse_hat == moments(any_prior)[1]
        assert est.mi_hat == 0.0

    def test_invariants(self, any_prior):
        est = estimate(any_prior, 3, 4, 400, seed=2)
        var_x = moments(any_prior)[1]
        assert 0 <= est.mmse_hat <= var_x + 5 * est.mmse_se
        assert est.mi_hat >= -5 * est.mi_se

    @pytest.mark.parametrize("p", [bpsk_prior(), bernoulli_gaussian_prior(0.2, 3.0)], ids=["bpsk", "bg"])
    def test_estimators_agree(self, p):
        a = estimate(p, 4, 6, 3000, seed=12, estimator="posterior_var_avg")
        b = estimate(p, 4, 6, 3000, seed=12, estimator="error_avg")
        pooled = math.hypot(a.mmse_se, b.mmse_se)
        assert abs(a.mmse_hat - b.mmse_hat) <= 3 * pooled
        assert a.mi_hat == b.mi_hat
        assert a.mmse_se < b.mmse_se

    def test_unknown_estimator(self):
        with pytest.raises(ValueError):
            estimate(bpsk_prior(), 2, 2, 10, seed=1, estimator="median")

    def test_reproducible(self):
        a = estimate(bpsk_prior(), 4, 5, 300, seed=77)
        b = estimate(bpsk_prior(), 4, 5, 300, seed=77)
        assert a == b

    def test_single_trial_has_no_standard_error(self):
        est = estimate(bpsk_prior(), 2, 2, 1, seed=0)
        assert math.isnan(est.mmse_se) and est.to_dict()["mmse_se"] is None

    def test_trial_dump(self, tmp_path):
        path = tmp_path / "trials.csv"
        est = estimate(bpsk_prior(), 3, 4, 50, seed=3, dump_path=path)
        rows = list(csv.DictReader(path.open()))
        assert len(rows) == 50
        assert np.mean([float(r["posterior_var"]) for r in rows]) == pytest.approx(est.mmse_hat, rel=1e-12)

    def test_gaussian_oracle(self):
        var, n, m = 1.5, 4, 6
        est = estimate(gaussian_prior(var), n, m, 4000, seed=31)
        rng = np.random.default_rng(99)
        mm, mi = [], []
        for _ in range(40_000):
            z = rng.standard_normal((m, n))
            ev = np.linalg.eigvalsh(z.T @ z / n)
            mm.append(np.mean(var / (1 + var * ev)))
            mi.append(0.5 * np.log1p(var * ev).sum())
        se_o = np.std(mm) / math.sqrt(len(mm))
        assert abs(est.mmse_hat - np.mean(mm)) < 4 * math.hypot(est.mmse_se, se_o)
        se_i = np.std(mi) / math.sqrt(len(mi))
        assert abs(est.mi_hat - np.mean(mi)) < 4 * math.hypot(est.mi_se, se_i)

    @pytest.mark.slow
    def test_bpsk_scalar_mi_against_double_integral(self):
        est = estimate(bpsk_prior(), 1, 1, 1_000_000, seed=2718)

        def inner(a):
            s = a * a
            rs = abs(a)
            f = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi) * (
                abs(s + rs * z) + math.log1p(math.exp(-2 * abs(s + rs * z))) - math.log(2)
            )
            lc = integrate.quad(f, -40, -rs, epsabs=1e-13)[0] + integrate.quad(f, -rs, 40, epsabs=1e-13)[0]
            return math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi) * (s - lc)

        ref = 2 * integrate.quad(inner, 0, 12, epsabs=1e-12, limit=200)[0]
        assert abs(est.mi_hat - ref) < 4 * est.mi_se


class TestProfile:
    def test_levels_match_single_estimates(self):
        prof = mi_difference_profile(bpsk_prior(), 4, 8, 500, seed=21)
        for m in (0, 3, 8):
            est = estimate(bpsk_prior(), 4, m, 500, seed=21)
            assert prof.mmse_hat[m] == pytest.approx(est.mmse_hat, rel=1e-12, abs=1e-15)
            assert prof.mi_hat[m] == pytest.approx(est.mi_hat, rel=1e-12, abs=1e-15)

    def test_rows(self):
        prof = mi_difference_profile(bpsk_prior(), 3, 5, 100, seed=1)
        rows = prof.rows()
        assert [r[0] for r in rows] == [0, 1, 2, 3, 4]
        assert rows[0][2] == 1.0
        assert rows[2][1] == pytest.approx(prof.mi_hat[3] - prof.mi_hat[2], abs=1e-12)

    def test_monotone_within_paired_errors(self):
        prof = mi_difference_profile(bpsk_prior(), 4, 16, 3000, seed=5)
        assert np.all(prof.i_second_hat <= 3 * prof.i_second_se)
        assert np.all(prof.mmse_diff_hat <= 3 * prof.mmse_diff_se)

    def test_bad_arguments(self):
        with pytest.raises(OutOfRange):
            mi_difference_profile(bpsk_prior(), 3, 0, 10, seed=1)
        with pytest.raises(OutOfRange):
            trial_statistics(bpsk_prior(), 3, [2], 0, seed=1)


class TestBoundsContainment:
    def test_sandwich_containment(self):
        n, m = 8, 16
        est = estimate(bpsk_prior(), n, m, 4000, seed=404)
        mi_b, mm_b = mi_sandwich(bpsk_prior(), n, m), mmse_sandwich(bpsk_prior(), n, m)
        assert mi_b.contains(est.mi_hat, 3 * est.mi_se)
        assert mm_b.contains(est.mmse_hat, 3 * est.mmse_se)

    def test_mmse_sandwich_n8_m24(self):
        est = estimate(bpsk_prior(), 8, 24, 4000, seed=405)
        assert mmse_sandwich(bpsk_prior(), 8, 24).contains(est.mmse_hat, 3 * est.mmse_se)

    @pytest.mark.parametrize("m", [32, 64])
    def test_gap_containment(self, m):
        p, n = bpsk_prior(), 4
        est = estimate(p, n, m, 4000, seed=406)
        mi_gap, mmse_gap = gap_bounds(p, n, m)
        assert abs(est.mi_hat / n - i_x(p, m / n)) <= mi_gap + 3 * est.mi_se / n
        assert abs(est.mmse_hat - mmse_x(p, m / n)) <= mmse_gap + 3 * est.mmse_se
