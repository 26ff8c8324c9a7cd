import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from lattice_kreg.core.exceptions import (
    ConfigError,
    DimensionMismatchError,
    FieldFormatError,
    LagOutOfRangeError,
    NumericDomainError,
)
from lattice_kreg.models.config_models import FieldSpec, StencilTap
from lattice_kreg.services.field_io import (
    field_from_bytes,
    field_to_bytes,
    read_field_binary,
    read_field_csv,
    write_field_binary,
    write_field_csv,
)
from lattice_kreg.services.field_sim import (
    Field,
    covariance,
    empirical_covariance,
    simulate,
    simulate_replicates,
    theoretical_eta,
)
from lattice_kreg.services.lattice import make_lattice
from lattice_kreg.services.rng import derive_seed, make_generator


def ma_spec(weights=(1.0, 0.5), seed=0, d=1):
    taps = [StencilTap(offset=(j,) + (0,) * (d - 1), weight=w) for j, w in enumerate(weights)]
    return FieldSpec(kind="ma-field", stencil=taps, seed=seed)


class TestStreams:
    def test_generators_are_reproducible(self):
        a = make_generator(11, 0).standard_normal(5)
        b = make_generator(11, 0).standard_normal(5)
        assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(make_generator(11, 0).random(4), make_generator(11, 1).random(4))

    def test_derived_seeds_are_distinct(self):
        seeds = {derive_seed(5, 2, r) for r in range(100)}
        assert len(seeds) == 100


class TestSimulate:
    @pytest.mark.parametrize("kind", ["iid-gaussian", "exp-gaussian-spectral", "ma-field", "md-field"])
    def test_same_seed_same_field(self, kind):
        spec = FieldSpec(kind=kind, seed=17, components=256)
        lat = make_lattice(16, 2) if kind != "ma-field" else make_lattice(64, 1)
        assert_array_equal(simulate(spec, lat).values, simulate(spec, lat).values)
        assert not np.array_equal(simulate(spec, lat).values, simulate(spec.with_seed(18), lat).values)

    def test_identity_stencil_reproduces_driving_noise(self):
        lat = make_lattice(8, 2)
        identity = FieldSpec(kind="ma-field", stencil=[StencilTap(offset=(0, 0), weight=1.0)], seed=3)
        iid = FieldSpec(kind="iid-gaussian", seed=3)
        assert_array_equal(simulate(identity, lat).values, simulate(iid, lat).values)

    def test_iid_scale(self):
        lat = make_lattice(32, 1)
        base = simulate(FieldSpec(kind="iid-gaussian", seed=9), lat).values
        scaled = simulate(FieldSpec(kind="iid-gaussian", sd=3.0, seed=9), lat).values
        assert_allclose(scaled, 3.0 * base)

    def test_replicates_do_not_depend_on_worker_count(self):
        lat = make_lattice(16, 2)
        spec = FieldSpec(kind="exp-gaussian-spectral", cst=2.0, components=128, seed=4)
        one = simulate_replicates(spec, lat, 5, workers=1)
        many = simulate_replicates(spec, lat, 5, workers=4)
        for a, b in zip(one, many):
            assert_array_equal(a.values, b.values)

    def test_unknown_kind_is_rejected(self):
        with pytest.raises(ValidationError):
            FieldSpec(kind="fractal")

    def test_stencil_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            simulate(ma_spec(d=1), make_lattice(8, 2))

    def test_spectral_needs_small_dimension(self):
        with pytest.raises(NumericDomainError):
            simulate(FieldSpec(kind="exp-gaussian-spectral", components=8), make_lattice(3, 4))


class TestOracles:
    def test_moving_average_covariance(self):
        spec = ma_spec()
        assert covariance(spec, (0,)) == pytest.approx(1.25)
        assert covariance(spec, (1,)) == pytest.approx(0.5)
        assert covariance(spec, (-1,)) == pytest.approx(0.5)
        assert covariance(spec, (2,)) == 0.0

    def test_moving_average_eta(self):
        assert theoretical_eta(ma_spec(), 4) == pytest.approx(2.25)

    def test_truncation_below_diameter(self):
        with pytest.raises(NumericDomainError):
            theoretical_eta(ma_spec(weights=(1.0, 0.5, 0.25)), 1)

    def test_iid_and_md_eta(self):
        assert theoretical_eta(FieldSpec(kind="iid-gaussian", sd=2.0), 3) == 4.0
        assert theoretical_eta(FieldSpec(kind="md-field", beta=2.0), 3) == 1.0

    def test_exponential_eta_matches_direct_sum(self):
        spec = FieldSpec(kind="exp-gaussian-spectral", cst=200.0, range_a=1.0)
        expected = 0.0
        for k1 in range(-50, 51):
            for k2 in range(-50, 51):
                expected += 200.0 * math.exp(-math.hypot(k1, k2))
        assert theoretical_eta(spec, 50, d=2) == pytest.approx(expected, rel=1e-12)
        assert covariance(spec, (1, 0)) == pytest.approx(200.0 * math.exp(-1.0))

    def test_exponential_eta_needs_dimension(self):
        with pytest.raises(DimensionMismatchError):
            theoretical_eta(FieldSpec(kind="exp-gaussian-spectral"), 5)


class TestEmpiricalCovariance:
    def test_constant_fields(self):
        lat = make_lattice(6, 2)
        ones = Field.from_array(lat, np.ones((6, 6)))
        assert empirical_covariance(ones, (1, -2)) == 1.0

    def test_lag_must_fit(self):
        f = simulate(FieldSpec(kind="iid-gaussian"), make_lattice(4, 1))
        with pytest.raises(LagOutOfRangeError):
            empirical_covariance(f, (4,))

    def test_moving_average_lag_one(self):
        f = simulate(ma_spec(seed=21), make_lattice(100_000, 1))
        assert empirical_covariance(f, (0,)) == pytest.approx(1.25, abs=0.04)
        assert empirical_covariance(f, (1,)) == pytest.approx(0.5, abs=0.03)

    def test_md_field_is_uncorrelated_with_unit_variance(self):
        f = simulate(FieldSpec(kind="md-field", beta=1.0, seed=8), make_lattice(100_000, 1))
        assert float(np.mean(f.values)) == pytest.approx(0.0, abs=0.02)
        assert empirical_covariance(f, (0,)) == pytest.approx(1.0, abs=0.05)
        assert empirical_covariance(f, (1,)) == pytest.approx(0.0, abs=0.03)

    def test_md_field_conditional_mean_along_first_axis(self):
        n = 256
        eps = simulate(FieldSpec(kind="md-field", beta=1.0, seed=31), make_lattice(n, 2)).values.reshape(n, n)
        prev, cur = eps[:-1].ravel(), eps[1:].ravel()
        edges = np.quantile(prev, np.linspace(0.0, 1.0, 11))
        bins = np.clip(np.searchsorted(edges, prev, side="right") - 1, 0, 9)
        for b in range(10):
            sample = cur[bins == b]
            assert abs(np.mean(sample)) < 5.0 * np.std(sample) / math.sqrt(sample.size)
        # 条件方差随 |ε_{i-e1}| 增大
        outer = cur[(bins == 0) | (bins == 9)]
        inner = cur[(bins == 4) | (bins == 5)]
        assert np.mean(outer ** 2) > 1.5 * np.mean(inner ** 2)

    def test_spectral_field_matches_exponential_covariance(self):
        lat = make_lattice(64, 2)
        spec = FieldSpec(kind="exp-gaussian-spectral", cst=200.0, range_a=1.0, seed=2)
        fields = simulate_replicates(spec, lat, 10)
        lag0 = np.mean([empirical_covariance(f, (0, 0)) for f in fields])
        lag1 = np.mean([empirical_covariance(f, (1, 0)) for f in fields])
        assert lag0 == pytest.approx(200.0, rel=0.08)
        assert lag1 == pytest.approx(200.0 * math.exp(-1.0), rel=0.1)


class TestFieldIO:
    def test_binary_round_trip(self, tmp_path):
        f = simulate(FieldSpec(kind="iid-gaussian", seed=1), make_lattice(5, 3))
        path = write_field_binary(tmp_path / "field.bin", f)
        back = read_field_binary(path)
        assert back.lattice == f.lattice
        assert_array_equal(back.values, f.values)
        assert path.stat().st_size == 16 + 8 * 125

    def test_bad_magic(self):
        payload = bytearray(field_to_bytes(simulate(FieldSpec(kind="iid-gaussian"), make_lattice(3, 1))))
        payload[:4] = b"XXXX"
        with pytest.raises(FieldFormatError):
            field_from_bytes(bytes(payload))

    def test_truncated_payload(self):
        payload = field_to_bytes(simulate(FieldSpec(kind="iid-gaussian"), make_lattice(3, 1)))
        with pytest.raises(FieldFormatError):
            field_from_bytes(payload[:-3])

    def test_csv_round_trip(self, tmp_path):
        f = simulate(FieldSpec(kind="iid-gaussian", seed=6), make_lattice(4, 2))
        back = read_field_csv(write_field_csv(tmp_path / "field.csv", f))
        assert_array_equal(back.values, f.values)
        header = (tmp_path / "field.csv").read_text().splitlines()[0]
        assert header == "i_1,i_2,value"

    def test_csv_size_limit(self, tmp_path):
        f = simulate(FieldSpec(kind="iid-gaussian"), make_lattice(128, 2))
        with pytest.raises(ConfigError):
            write_field_csv(tmp_path / "big.csv", f)
