import json
import math

import numpy as np
import pytest
import scipy.stats

from convsim.density import (
    ConditionalKde,
    ConditionalResidualModel,
    FitParams,
    Kde1D,
    ModelKind,
    StatsModel,
    YeoJohnson,
    fit_stats_model,
    scott_bandwidths,
    silverman_bandwidth,
    yj_derivative,
    yj_fit_lambda,
    yj_forward,
    yj_inverse,
    yj_range,
)
from convsim.errors import ValidationError
from convsim.stats import TransitionType
from convsim.turns import TransitionMatrix

from conftest import make_conversation, synthetic_corpus

UNIFORM_AB = TransitionMatrix(("A", "B"), np.full((2, 2), 0.5))


class TestSilverman:
    def test_one_to_five(self):
        # Direct formula evaluation: sigma = sqrt(2.5), Q1 = 2, Q3 = 4 under
        # linear-interpolation quartiles.
        expected = 0.9 * min(math.sqrt(2.5), 2.0 / 1.34) * 5 ** (-0.2)
        h = silverman_bandwidth([1, 2, 3, 4, 5])
        assert h == pytest.approx(expected, rel=1e-12)
        assert h == pytest.approx(0.9736, abs=1e-4)

    def test_degenerate_data_hits_floor(self):
        assert silverman_bandwidth([2.0, 2.0, 2.0], floor=0.01) == 0.01

    def test_scales_linearly(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=40)
        h = silverman_bandwidth(x)
        for c in (0.5, 2.0, 10.0):
            assert silverman_bandwidth(c * x) == pytest.approx(c * h, rel=1e-9)

    def test_too_few_samples(self):
        with pytest.raises(ValidationError):
            silverman_bandwidth([1.0])


class TestScott:
    def test_direct_formula(self):
        # 100 samples with sample standard deviation exactly 0.5.
        c = 0.5 * math.sqrt(99) / 10.0
        residuals = np.array([c] * 50 + [-c] * 50)
        durations = np.linspace(2, 8, 100)
        h_r, h_d = scott_bandwidths(residuals, durations)
        assert h_r == pytest.approx(0.5 * 100 ** (-1 / 6), rel=1e-12)
        assert h_r == pytest.approx(0.2321, abs=1e-4)

    def test_floor_engages_for_constant_residuals(self):
        h_r, _ = scott_bandwidths([0.3] * 10, np.linspace(2, 8, 10), eps_r=0.01)
        assert h_r == 0.01

    def test_single_pair_rejected(self):
        with pytest.raises(ValidationError):
            scott_bandwidths([0.1], [2.0])


class TestYeoJohnson:
    @pytest.mark.parametrize("lam", [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
    def test_zero_maps_to_zero(self, lam):
        assert yj_forward(0.0, lam) == 0.0

    def test_identity_at_lambda_one(self):
        assert yj_forward(3.0, 1.0) == pytest.approx(3.0, abs=1e-12)

    def test_log_branch(self):
        assert yj_forward(math.e - 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("lam", [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
    @pytest.mark.parametrize("x", [-100.0, -1.0, -0.5, 0.0, 0.5, 1.0, 100.0])
    def test_round_trip(self, x, lam):
        assert yj_inverse(yj_forward(x, lam), lam) == pytest.approx(x, abs=1e-9)

    @pytest.mark.parametrize("lam", [-2.0, -0.5, 0.0, 0.7, 1.0, 2.0, 2.5])
    def test_strictly_increasing(self, lam):
        xs = np.linspace(-50.0, 50.0, 2001)
        ys = yj_forward(xs, lam)
        assert np.all(np.diff(ys) > 0)

    @pytest.mark.parametrize("lam", [-1.0, 0.5, 2.5])
    def test_derivative_matches_finite_differences(self, lam):
        xs = np.array([-3.0, -0.4, 0.0, 0.4, 3.0])
        eps = 1e-6
        numeric = (yj_forward(xs + eps, lam) - yj_forward(xs - eps, lam)) / (2 * eps)
        np.testing.assert_allclose(yj_derivative(xs, lam), numeric, rtol=1e-5)

    def test_inverse_domain_error(self):
        # lambda = 3: the x < 0 branch saturates at -1/(lambda-2) = -1.
        lo, hi = yj_range(3.0)
        assert lo == pytest.approx(-1.0)
        with pytest.raises(ValidationError):
            yj_inverse(-1.0, 3.0)
        with pytest.raises(ValidationError):
            yj_inverse(-1.5, 3.0)
        # lambda = -1: the x >= 0 branch saturates at -1/lambda = 1.
        assert yj_range(-1.0)[1] == pytest.approx(1.0)
        with pytest.raises(ValidationError):
            yj_inverse(1.0, -1.0)

    def test_fit_recovers_identity_for_gaussian_data(self):
        draws = np.random.default_rng(11).standard_normal(10_000)
        lam = yj_fit_lambda(draws)
        assert abs(lam - 1.0) < 0.2
        # Independent maximum-likelihood oracle.
        _, lam_oracle = scipy.stats.yeojohnson(draws)
        assert abs(lam - lam_oracle) < 0.02

    def test_fit_recovers_synthetic_lambda(self):
        rng = np.random.default_rng(5)
        target = 0.3
        samples = yj_inverse(rng.standard_normal(10_000), target)
        lam = yj_fit_lambda(samples)
        assert abs(lam - target) < 0.1
        _, lam_oracle = scipy.stats.yeojohnson(samples)
        assert abs(lam - lam_oracle) < 0.02

    def test_fit_rejects_degenerate_input(self):
        with pytest.raises(ValidationError):
            yj_fit_lambda([1.0, 1.0, 1.0])
        with pytest.raises(ValidationError):
            yj_fit_lambda([1.0, 2.0])


class TestKde1D:
    def test_validation(self):
        with pytest.raises(ValidationError):
            Kde1D([], 0.1)
        with pytest.raises(ValidationError):
            Kde1D([1.0], 0.0)

    def test_single_sample_cdf_symmetry(self):
        for h in (0.01, 0.5, 3.0):
            assert Kde1D([0.0], h).cdf(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_cdf_saturates(self):
        kde = Kde1D([0.0, 1.0, 2.0], 0.3)
        assert kde.cdf(2.0 + 40 * 0.3) == pytest.approx(1.0, abs=1e-12)
        assert kde.cdf(0.0 - 40 * 0.3) == pytest.approx(0.0, abs=1e-12)

    def test_cdf_monotone(self):
        rng = np.random.default_rng(2)
        kde = Kde1D(rng.normal(size=30), 0.25)
        xs = np.linspace(-5, 5, 1001)
        assert np.all(np.diff(kde.cdf(xs)) >= 0)

    def test_density_integrates_to_one(self):
        rng = np.random.default_rng(3)
        kde = Kde1D(rng.normal(size=40), 0.3)
        lo = kde.samples.min() - 10 * kde.bandwidth
        hi = kde.samples.max() + 10 * kde.bandwidth
        xs = np.linspace(lo, hi, 10_000)
        assert np.trapezoid(kde.density(xs), xs) == pytest.approx(1.0, abs=1e-3)

    def test_sample_mean_matches_mixture_mean(self):
        rng = np.random.default_rng(4)
        kde = Kde1D(rng.uniform(-1, 1, size=50), 0.2)
        draws = kde.sample(np.random.default_rng(10), size=100_000)
        tolerance = 4 * kde.bandwidth / math.sqrt(1e5) + 4 * np.std(kde.samples) / math.sqrt(1e5)
        assert abs(draws.mean() - kde.mean()) < tolerance

    def test_sampling_agrees_with_cdf(self):
        rng = np.random.default_rng(6)
        kde = Kde1D(rng.normal(size=25), 0.4)
        draws = kde.sample(np.random.default_rng(7), size=100_000)
        stat = scipy.stats.ks_1samp(draws, kde.cdf).statistic
        assert stat < 0.01

    def test_scalar_draw_matches_stream(self):
        kde = Kde1D([0.0, 1.0], 0.1)
        a = kde.sample(np.random.default_rng(0))
        b = kde.sample(np.random.default_rng(0), size=1)[0]
        assert a == b


class TestConditionalKde:
    def test_single_pair_is_gaussian_for_any_duration(self):
        ckde = ConditionalKde([0.5], [3.0], h_r=0.2, h_d=0.5)
        xs = np.linspace(-1, 2, 101)
        expected = scipy.stats.norm.pdf(xs, loc=0.5, scale=0.2)
        for d_star in (0.1, 3.0, 42.0):
            np.testing.assert_allclose(ckde.density(xs, d_star), expected, atol=1e-12)

    def test_wide_duration_bandwidth_reduces_to_unconditional(self):
        rng = np.random.default_rng(8)
        r = rng.normal(size=60)
        d = rng.uniform(2, 10, size=60)
        ckde = ConditionalKde(r, d, h_r=0.3, h_d=1e6)
        kde = Kde1D(r, 0.3)
        xs = np.linspace(r.min() - 2, r.max() + 2, 501)
        for d_star in (2.0, 5.0, 9.0):
            sup = np.max(np.abs(ckde.density(xs, d_star) - kde.density(xs)))
            assert sup < 1e-6

    def test_two_pair_oracle(self):
        h_r, h_d = 0.3, 0.5
        ckde = ConditionalKde([0.0, 1.0], [1.0, 10.0], h_r, h_d)
        d_star = 1.0
        w = np.exp(-0.5 * ((d_star - np.array([1.0, 10.0])) / h_d) ** 2)
        assert w[1] / w[0] < 1e-60
        xs = np.linspace(-1.5, 2.5, 201)
        direct = (
            w[0] * np.exp(-0.5 * ((xs - 0.0) / h_r) ** 2)
            + w[1] * np.exp(-0.5 * ((xs - 1.0) / h_r) ** 2)
        ) / (h_r * math.sqrt(2 * math.pi) * w.sum())
        np.testing.assert_allclose(ckde.density(xs, d_star), direct, rtol=1e-12)

    def test_density_integrates_to_one_for_random_durations(self):
        rng = np.random.default_rng(9)
        r = rng.normal(size=40)
        d = rng.uniform(2, 10, size=40)
        ckde = ConditionalKde.fit(r, d)
        xs = np.linspace(r.min() - 10 * ckde.h_r, r.max() + 10 * ckde.h_r, 10_000)
        for d_star in rng.uniform(2, 10, size=5):
            integral = np.trapezoid(ckde.density(xs, float(d_star)), xs)
            assert integral == pytest.approx(1.0, abs=1e-3)

    def test_underflow_falls_back_to_uniform_weights(self, caplog):
        ckde = ConditionalKde([0.0, 1.0], [1.0, 2.0], h_r=0.1, h_d=0.01)
        with caplog.at_level("WARNING"):
            w = ckde.weights(1e9)
        assert np.allclose(w, 0.5)
        assert any("underflow" in r.message for r in caplog.records)

    def test_sample_single_pair_mean(self):
        ckde = ConditionalKde([0.5], [3.0], h_r=0.2, h_d=0.5)
        draws = ckde.sample(3.0, np.random.default_rng(12), size=100_000)
        assert abs(draws.mean() - 0.5) < 4 * 0.2 / math.sqrt(1e5)

    def test_sample_ignores_zero_weight_component(self):
        ckde = ConditionalKde([0.0, 5.0], [1.0, 1000.0], h_r=0.05, h_d=0.5)
        draws = ckde.sample(1.0, np.random.default_rng(13), size=5_000)
        assert np.max(np.abs(draws)) < 1.0

    def test_sample_tracks_duration_dependent_mean(self):
        rng = np.random.default_rng(14)
        d = rng.uniform(1, 10, size=2_000)
        r = 0.1 * d + 0.05 * rng.standard_normal(2_000)
        ckde = ConditionalKde.fit(r, d)
        draws = 100_000
        means = {}
        for d_star in (2.0, 8.0):
            w = ckde.weights(d_star)
            oracle = float(np.sum(w * ckde.residuals))
            sample_mean = ckde.sample(d_star, np.random.default_rng(15), size=draws).mean()
            spread = math.sqrt(
                float(np.sum(w * (ckde.residuals - oracle) ** 2)) + ckde.h_r**2
            )
            assert abs(sample_mean - oracle) < 4 * spread / math.sqrt(draws)
            means[d_star] = oracle
        assert means[8.0] - means[2.0] == pytest.approx(0.6, abs=0.15)


def _atom_kde(value, bandwidth=1e-300):
    return Kde1D([value], bandwidth)


def _sasc_model(mean_same, mean_diff, residual_same, residual_diff, alpha=0.1):
    return StatsModel(
        mode=ModelKind.SASC,
        mean_same=Kde1D(mean_same, 0.05),
        mean_diff=Kde1D(mean_diff, 0.05),
        residual_same=Kde1D(residual_same, alpha),
        residual_diff=Kde1D(residual_diff, alpha),
        transition=UNIFORM_AB,
    )


class TestOverlapProbability:
    def test_symmetric_residuals_at_zero_mu(self):
        model = _sasc_model([0.3], [0.3], [-1, -1, 1, 1], [-1, 1], alpha=0.01)
        assert model.p_overlap(TransitionType.SAME, 0.0) == pytest.approx(0.5, abs=1e-12)
        assert model.p_overlap(TransitionType.DIFF, 0.0) == pytest.approx(0.5, abs=1e-12)

    def test_huge_mu_never_overlaps(self):
        model = _sasc_model([0.3], [0.3], [-1, 1], [-1, 1])
        assert model.p_overlap(TransitionType.SAME, 1e6) == pytest.approx(0.0, abs=1e-12)

    def test_conditioned_mode_needs_duration(self):
        residual = ConditionalResidualModel(
            transform=YeoJohnson(1.0),
            kde=ConditionalKde([-1.0, 1.0], [3.0, 3.0], 0.01, 0.5),
        )
        model = StatsModel(
            mode=ModelKind.CSASC,
            mean_same=_atom_kde(0.3),
            mean_diff=_atom_kde(0.3),
            residual_same=residual,
            residual_diff=residual,
            transition=UNIFORM_AB,
        )
        assert model.p_overlap(TransitionType.SAME, 0.0, d_star=3.0) == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            model.p_overlap(TransitionType.SAME, 0.0)


class TestConditionalResidualModel:
    def test_sampling_matches_conditional_cdf(self):
        rng = np.random.default_rng(16)
        d = rng.uniform(2, 10, size=500)
        raw = 0.05 * d + 0.2 * rng.standard_normal(500) - 0.3
        lam = yj_fit_lambda(raw)
        model = ConditionalResidualModel(
            transform=YeoJohnson(lam),
            kde=ConditionalKde.fit(yj_forward(raw, lam), d),
        )
        draw_rng = np.random.default_rng(17)
        draws = np.array([model.sample(5.0, draw_rng) for _ in range(20_000)])
        stat = scipy.stats.ks_1samp(draws, lambda x: [model.cdf(v, 5.0) for v in x]).statistic
        assert stat < 0.02

    def test_raw_density_integrates_to_one(self):
        rng = np.random.default_rng(18)
        d = rng.uniform(2, 10, size=300)
        raw = 0.3 * rng.standard_normal(300) + 0.1
        lam = yj_fit_lambda(raw)
        model = ConditionalResidualModel(
            transform=YeoJohnson(lam),
            kde=ConditionalKde.fit(yj_forward(raw, lam), d),
        )
        xs = np.linspace(raw.min() - 3, raw.max() + 3, 20_000)
        integral = np.trapezoid(model.density(xs, 5.0), xs)
        assert integral == pytest.approx(1.0, abs=1e-2)


def _constant_residual_corpus():
    # All timestamps are exact binary quarters so residuals are exactly zero.
    rows = []
    t = 0.0
    gaps = {
        ("A", "same"): 0.5, ("B", "same"): 0.25,
        ("A", "diff"): 0.5, ("B", "diff"): 0.75,
    }
    sequence = ["A", "A", "A", "A", "B", "B", "B", "B", "A", "B", "A", "B", "A"]
    prev = None
    for speaker in sequence:
        if prev is None:
            start = 0.0
        else:
            kind = "same" if speaker == prev else "diff"
            start = t + gaps[(speaker, kind)]
        rows.append((speaker, start, start + 3.0))
        t = start + 3.0
        prev = speaker
    return [make_conversation("c0", rows)]


class TestFitStatsModel:
    def test_sasc_components_and_alpha(self, sasc_model):
        assert sasc_model.mode is ModelKind.SASC
        assert isinstance(sasc_model.residual_same, Kde1D)
        assert sasc_model.residual_same.bandwidth == 0.1
        assert sasc_model.residual_diff.bandwidth == 0.1
        assert sasc_model.mean_same.samples.size >= 2
        assert sasc_model.mean_diff.samples.size >= 2
        assert set(sasc_model.transition.states) == {"A", "B"}

    def test_csasc_components(self, csasc_model):
        assert isinstance(csasc_model.residual_same, ConditionalResidualModel)
        assert csasc_model.residual_same.kde.h_r >= 0.01
        assert csasc_model.residual_same.kde.h_d >= 0.05

    def test_constant_residuals_hit_floors(self):
        model = fit_stats_model(
            _constant_residual_corpus(), ModelKind.CSASC, FitParams()
        )
        residual = model.residual_same
        assert residual.kde.h_r == pytest.approx(0.01)
        assert residual.transform.lam == 1.0
        draws = [residual.sample(3.0, np.random.default_rng(i)) for i in range(50)]
        assert max(abs(v) for v in draws) < 10 * 0.01

    def test_insufficient_speakers_error_names_transition(self):
        # Strict alternation: no same-speaker gaps anywhere.
        conv = make_conversation(
            "c", [("A", 0, 2), ("B", 2.5, 4), ("A", 4.5, 6), ("B", 6.5, 8),
                  ("A", 8.5, 10), ("B", 10.5, 12), ("A", 12.5, 14)]
        )
        with pytest.raises(ValidationError, match="same"):
            fit_stats_model([conv], ModelKind.SASC)

    def test_json_round_trip_is_bit_faithful(self, sasc_model, csasc_model):
        for model in (sasc_model, csasc_model):
            text = model.to_json()
            back = StatsModel.from_json(text)
            assert back.to_json() == text
            np.testing.assert_array_equal(back.mean_same.samples, model.mean_same.samples)
            assert back.mean_same.bandwidth == model.mean_same.bandwidth
            np.testing.assert_array_equal(back.transition.probs, model.transition.probs)
            if model.mode is ModelKind.CSASC:
                np.testing.assert_array_equal(
                    back.residual_diff.kde.residuals, model.residual_diff.kde.residuals
                )
                assert back.residual_diff.transform.lam == model.residual_diff.transform.lam

    def test_version_guard(self):
        with pytest.raises(ValidationError):
            StatsModel.from_json(json.dumps({"version": "2", "mode": "sasc"}))

    def test_meta_counts(self, sasc_model):
        counts = sasc_model.meta["counts"]
        assert counts["observations"] == counts["residuals_same"] + counts["residuals_diff"]
        assert 0.0 <= sasc_model.meta["overlap_ratio"] <= 1.0
