import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lattice_kreg.core.config import CONDITION_MAX_RADIUS
from lattice_kreg.core.exceptions import LagOutOfRangeError, NonMonotoneSequenceError, NumericDomainError
from lattice_kreg.models.config_models import FieldSpec, StencilTap
from lattice_kreg.services.dependence import (
    bounded_quantile,
    check_mixing_rate_condition,
    check_quantile_condition,
    default_rho,
    estimate_eta,
    estimate_eta_bruteforce,
    exponential_alpha,
    gaussian_quantile,
    load_alpha_table,
    m_dependent_alpha,
    pair_count,
    power_alpha,
    residuals,
    shell_count,
    uniform_quantile,
)
from lattice_kreg.services.field_sim import Field, simulate
from lattice_kreg.services.kernel import make_kernel
from lattice_kreg.services.lattice import make_lattice
from lattice_kreg.services.regression import estimate_grid


@pytest.mark.parametrize("n,expected", [(16, 2), (256, 4), (10_000, 10), (2, 1)])
def test_default_rho(n, expected):
    assert default_rho(n) == expected


class TestEstimateEta:
    def test_constant_field(self):
        lat = make_lattice(10, 1)
        est = estimate_eta(Field.from_array(lat, np.ones(10)), 1)
        assert est.raw_sum == 28.0
        assert est.pair_count == 28
        assert est.value == pytest.approx(2.8)
        assert not est.clamped

    def test_zero_field_is_clamped(self):
        lat = make_lattice(8, 2)
        est = estimate_eta(Field.from_array(lat, np.zeros((8, 8))), 2)
        assert est.value == 1.0 / 64
        assert est.clamped

    @pytest.mark.parametrize("n,d,rho", [(20, 1, 3), (9, 2, 2), (5, 3, 1)])
    def test_matches_bruteforce(self, n, d, rho, rng):
        f = Field.from_array(make_lattice(n, d), rng.standard_normal((n,) * d) + 0.3)
        fast = estimate_eta(f, rho)
        slow = estimate_eta_bruteforce(f, rho)
        assert fast.raw_sum == pytest.approx(slow.raw_sum, rel=1e-12)
        assert fast.pair_count == slow.pair_count

    def test_pair_count_closed_form(self):
        assert pair_count(10, 1, 1) == 28
        assert pair_count(4, 2, 3) == 16 ** 2

    def test_bilinear_in_the_field(self, rng):
        f = Field.from_array(make_lattice(32, 2), rng.standard_normal((32, 32)) * 4)
        g = Field.from_array(f.lattice, 2.5 * f.values)
        assert estimate_eta(g, 3).raw_sum == pytest.approx(6.25 * estimate_eta(f, 3).raw_sum, rel=1e-12)

    def test_workers_do_not_change_the_sum(self, rng):
        f = Field.from_array(make_lattice(40, 2), rng.standard_normal((40, 40)))
        assert estimate_eta(f, 4, workers=1).raw_sum == estimate_eta(f, 4, workers=4).raw_sum

    def test_rho_range(self):
        f = Field.from_array(make_lattice(4, 1), np.ones(4))
        with pytest.raises(LagOutOfRangeError):
            estimate_eta(f, 4)
        with pytest.raises(NumericDomainError):
            estimate_eta(f, 0)

    def test_iid_field_is_close_to_one(self):
        lat = make_lattice(256, 2)
        values = [estimate_eta(simulate(FieldSpec(kind="iid-gaussian", seed=s), lat), 4).value for s in range(20)]
        assert sum(0.9 <= v <= 1.1 for v in values) >= 16

    @pytest.mark.slow
    def test_moving_average_field(self):
        spec = FieldSpec(kind="ma-field", stencil=[StencilTap(offset=(0,), weight=1.0), StencilTap(offset=(1,), weight=0.5)])
        lat = make_lattice(4096, 1)
        rho = default_rho(4096)
        rel = np.array([
            abs(estimate_eta(simulate(spec.with_seed(s), lat), rho).value - 2.25) / 2.25 for s in range(100)
        ])
        assert np.median(rel) < 0.10
        assert np.mean(rel <= 0.25) >= 0.9


def test_residuals_of_a_constant_fit(epan2):
    lat = make_lattice(12, 2)
    y = np.full(144, 5.0)
    eps = residuals(y, estimate_grid(y, lat, epan2, 0.3))
    assert_allclose(eps.values, 0.0, atol=1e-12)


def test_shell_count():
    assert [shell_count(r, 2) for r in range(4)] == [1, 8, 16, 24]
    assert shell_count(2, 1) == 2


class TestQuantileCondition:
    def test_m_dependent_converges(self):
        report = check_quantile_condition(m_dependent_alpha(1), bounded_quantile(2.0), d=2)
        assert report.verdict == "converges"
        assert report.partial_sums[0] == pytest.approx(0.25 * 4.0)
        assert report.partial_sums[-1] == report.partial_sums[0]

    def test_exponential_alpha_with_gaussian_tails(self, caplog):
        with caplog.at_level("WARNING", logger="LatticeKReg.Dependence"):
            report = check_quantile_condition(exponential_alpha(1.0), gaussian_quantile(), d=2)
        assert report.verdict == "converges"
        assert report.monotone
        assert "clipped" in caplog.text
        assert report.radii[-1] == CONDITION_MAX_RADIUS
        assert all(math.isfinite(t) for t in report.shell_terms)
        assert np.all(np.diff(report.partial_sums) >= 0)
        assert report.decade_ratio < 0.95

    def test_gaussian_quantile_at_subnormal_levels(self):
        q = gaussian_quantile()
        assert math.isfinite(q(5e-324))
        assert q(5e-324) > q(1e-300) > q(1e-10) > 0
        assert q(0.0) == math.inf

    def test_nan_terms_are_rejected(self):
        with pytest.raises(NumericDomainError):
            check_quantile_condition(m_dependent_alpha(1), lambda u: math.nan, d=1, max_radius=5)

    def test_inverse_volume_alpha_is_not_summable(self):
        report = check_quantile_condition(power_alpha(2.0), bounded_quantile(1.0), d=2)
        assert report.verdict != "converges"
        assert report.decade_ratio == pytest.approx(1.0176, abs=0.01)

    def test_uniform_quantile_integral(self):
        report = check_quantile_condition(m_dependent_alpha(1), uniform_quantile(1.0), d=1, max_radius=5)
        # ∫_0^{1/4} (1 - u)² du
        assert report.partial_sums[0] == pytest.approx((1 - 0.75 ** 3) / 3)

    def test_gaussian_quantile_inverts_the_tail(self):
        q = gaussian_quantile(2.0)
        t = q(0.05)
        assert math.erfc(t / 2.0 / math.sqrt(2.0)) == pytest.approx(0.05)


class TestMixingRateCondition:
    def test_fast_polynomial_rate_converges(self):
        report = check_mixing_rate_condition(power_alpha(5.0), delta=2.0, d=2)
        assert report.verdict == "converges"
        assert report.decade_ratio < 0.5
        assert report.tail_bound > 0

    @pytest.mark.parametrize("q", [4.0, 3.5])
    def test_slow_polynomial_rate_does_not_converge(self, q):
        report = check_mixing_rate_condition(power_alpha(q), delta=2.0, d=2)
        assert report.verdict != "converges"

    def test_m_dependent_has_finitely_many_terms(self):
        report = check_mixing_rate_condition(m_dependent_alpha(2), delta=1.0, d=3)
        assert sum(t > 0 for t in report.shell_terms) == 1
        assert report.verdict == "converges"

    def test_exponential_rate_in_three_dimensions(self):
        report = check_mixing_rate_condition(exponential_alpha(1.0), delta=1.0, d=3)
        assert report.verdict == "converges"

    def test_small_radius_is_inconclusive(self):
        report = check_mixing_rate_condition(power_alpha(5.0), delta=2.0, d=2, max_radius=50)
        assert report.verdict == "inconclusive"

    def test_increasing_sequence_is_rejected(self):
        with pytest.raises(NonMonotoneSequenceError):
            check_mixing_rate_condition([0.2, 0.1, 0.15], delta=2.0, d=1, max_radius=2)

    def test_negative_alpha_is_rejected(self):
        with pytest.raises(NumericDomainError):
            check_mixing_rate_condition([0.2, -0.1], delta=2.0, d=1, max_radius=1)

    def test_delta_must_be_positive(self):
        with pytest.raises(NumericDomainError):
            check_mixing_rate_condition(power_alpha(5.0), delta=0.0, d=1)

    def test_table_input(self, tmp_path):
        path = tmp_path / "alpha.txt"
        path.write_text("# r alpha\n0 0.25\n1 0.1\n2 0.01\n3 0.0\n", encoding="utf-8")
        table = load_alpha_table(path)
        assert_allclose(table, [0.25, 0.1, 0.01, 0.0])
        report = check_mixing_rate_condition(table, delta=2.0, d=1, max_radius=200)
        assert report.verdict == "converges"
        assert len(report.shell_terms) == 200
