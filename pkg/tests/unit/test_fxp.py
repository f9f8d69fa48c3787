import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fxp import (
    ACTIVATION_FORMAT,
    FormatError,
    FxValue,
    QFormat,
    accumulator_format,
    dequantize,
    dequantize_array,
    mac,
    mac_array,
    quantize,
    quantize_array,
    quantize_tensor,
    requantize,
    round_shift,
)


def _round_half_away_exact(q: Fraction) -> int:
    magnitude = math.floor(abs(q) + Fraction(1, 2))
    return magnitude if q >= 0 else -magnitude


def _oracle_mac(m1: FxValue, m2: FxValue, ps: FxValue) -> int:
    product = Fraction(m1.raw * m2.raw, 1 << (m1.fmt.frac_bits + m2.fmt.frac_bits))
    aligned = _round_half_away_exact(product * (1 << ps.fmt.frac_bits))
    return max(ps.fmt.raw_min, min(ps.fmt.raw_max, ps.raw + aligned))


formats = st.builds(
    lambda total, frac_ratio: QFormat(total, int(frac_ratio * (total - 1))),
    st.integers(min_value=2, max_value=16),
    st.floats(min_value=0.0, max_value=1.0),
)


class TestQFormat:
    """Format construction and ranges"""

    def test_signed_range(self):
        """Signed 10.7 spans [-4, 4 - 2^-7]"""
        fmt = QFormat(10, 7)
        assert fmt.raw_min == -512
        assert fmt.raw_max == 511
        assert fmt.value_min == -4.0
        assert fmt.value_max == 511 / 128

    def test_unsigned_range(self):
        """Unsigned formats start at zero"""
        fmt = QFormat(8, 0, signed=False)
        assert (fmt.raw_min, fmt.raw_max) == (0, 255)

    @pytest.mark.parametrize("total,frac", [(1, 0), (33, 0), (8, 8), (8, -1)])
    def test_invalid_formats_rejected(self, total, frac):
        """Out-of-bound widths raise FormatError"""
        with pytest.raises(FormatError):
            QFormat(total, frac)

    def test_dict_round_trip(self):
        """as_dict/from_dict preserve the format"""
        fmt = QFormat(12, 5, signed=False)
        assert QFormat.from_dict(fmt.as_dict()) == fmt

    def test_accumulator_format_keeps_fraction(self):
        """Accumulator holds the product's fraction bits"""
        acc = accumulator_format(QFormat(10, 7), QFormat(4, 2))
        assert acc.total_bits == 32
        assert acc.frac_bits == 9


class TestQuantize:
    """quantize / dequantize"""

    def test_half_in_sample_format(self):
        """0.5 in sQ10.7 is raw 64"""
        assert quantize(0.5, QFormat(10, 7)).raw == 64

    def test_zero(self):
        """Zero maps to raw zero in any format"""
        for fmt in (QFormat(2, 0), QFormat(10, 7), QFormat(32, 31)):
            assert quantize(0.0, fmt).raw == 0

    def test_saturates_high(self):
        """100 in sQ4.0 saturates to 7"""
        assert quantize(100.0, QFormat(4, 0)).raw == 7

    def test_saturates_low_and_infinite(self):
        """Large negatives and infinities clamp to the range ends"""
        fmt = QFormat(4, 0)
        assert quantize(-100.0, fmt).raw == -8
        assert quantize(float("inf"), fmt).raw == 7
        assert quantize(float("-inf"), fmt).raw == -8

    def test_round_half_away_from_zero(self):
        """Ties round away from zero in both directions"""
        fmt = QFormat(8, 0)
        assert quantize(2.5, fmt).raw == 3
        assert quantize(-2.5, fmt).raw == -3
        assert quantize(2.4999, fmt).raw == 2

    def test_dequantize_exact(self):
        """raw 64 at frac 7 is exactly 0.5"""
        assert dequantize(FxValue(64, QFormat(10, 7))) == 0.5
        assert dequantize(FxValue(0, QFormat(10, 7))) == 0.0

    def test_fxvalue_saturates_on_construction(self):
        """Raw values outside the format are clamped"""
        assert FxValue(10_000, QFormat(10, 7)).raw == 511
        assert FxValue(-10_000, QFormat(10, 7)).raw == -512

    def test_grid_round_trip_error(self):
        """Error bound holds on a dense grid across the range"""
        fmt = QFormat(10, 7)
        bound = 2.0 ** (-fmt.frac_bits - 1)
        for x in np.linspace(fmt.value_min, fmt.value_max, 20001):
            assert abs(dequantize(quantize(float(x), fmt)) - x) <= bound

    @settings(max_examples=300, deadline=None)
    @given(fmt=formats, x=st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    def test_saturation_and_error_bound(self, fmt, x):
        """Round trip lands in range and within half an LSB of the clamped input"""
        y = dequantize(quantize(x, fmt))
        assert fmt.value_min <= y <= fmt.value_max
        clamped = min(max(x, fmt.value_min), fmt.value_max)
        assert abs(y - clamped) <= 2.0 ** (-fmt.frac_bits - 1)

    @settings(max_examples=200, deadline=None)
    @given(fmt=formats, x=st.floats(min_value=-1e3, max_value=1e3, allow_nan=False))
    def test_array_matches_scalar(self, fmt, x):
        """Array quantization applies the scalar rule"""
        assert int(quantize_array(np.array([x]), fmt)[0]) == quantize(x, fmt).raw


class TestMac:
    """Multiply-accumulate"""

    def test_identity_partial_sum(self):
        """1.0 * 1.0 + 0 = 1.0"""
        fmt = QFormat(10, 7)
        acc = accumulator_format(fmt, fmt)
        one = quantize(1.0, fmt)
        assert mac(one, one, quantize(0.0, acc)).value == 1.0

    def test_zero_multiplier(self):
        """A zero multiplier returns the partial sum unchanged"""
        fmt = QFormat(10, 7)
        acc = QFormat(16, 6)
        for x in (-3.0, 0.25, 3.9):
            for p in (-100.0, 0.0, 17.5):
                ps = quantize(p, acc)
                assert mac(quantize(0.0, fmt), quantize(x, fmt), ps) == ps

    def test_matches_rational_oracle(self):
        """100 random triples agree with an exact rational computation"""
        rng = np.random.default_rng(7)
        for _ in range(100):
            f1 = QFormat(int(rng.integers(2, 17)), 0)
            f1 = QFormat(f1.total_bits, int(rng.integers(0, f1.total_bits)))
            f2 = QFormat(int(rng.integers(2, 17)), 0)
            f2 = QFormat(f2.total_bits, int(rng.integers(0, f2.total_bits)))
            fp = QFormat(int(rng.integers(8, 33)), 0)
            fp = QFormat(fp.total_bits, int(rng.integers(0, fp.total_bits)))
            m1 = FxValue(int(rng.integers(f1.raw_min, f1.raw_max + 1)), f1)
            m2 = FxValue(int(rng.integers(f2.raw_min, f2.raw_max + 1)), f2)
            ps = FxValue(int(rng.integers(fp.raw_min, fp.raw_max + 1)), fp)
            assert mac(m1, m2, ps).raw == _oracle_mac(m1, m2, ps)

    @settings(max_examples=200, deadline=None)
    @given(
        terms=st.lists(
            st.tuples(st.integers(-512, 511), st.integers(-8, 7)), min_size=1, max_size=20
        ),
        seed=st.integers(0, 2**16),
    )
    def test_order_independent_without_saturation(self, terms, seed):
        """Accumulation order does not matter when nothing saturates"""
        a_fmt, w_fmt = QFormat(10, 7), QFormat(4, 2)
        acc = accumulator_format(a_fmt, w_fmt)

        def run(order):
            ps = FxValue(0, acc)
            for i in order:
                ps = mac(FxValue(terms[i][0], a_fmt), FxValue(terms[i][1], w_fmt), ps)
            return ps.raw

        order = list(range(len(terms)))
        shuffled = list(np.random.default_rng(seed).permutation(order))
        assert run(order) == run(shuffled) == sum(a * w for a, w in terms)

    def test_mixed_signedness_rejected(self):
        """Operands must share signedness"""
        with pytest.raises(FormatError):
            mac(FxValue(1, QFormat(8, 0, signed=False)), FxValue(1, QFormat(8, 0)), FxValue(0, QFormat(16, 0)))


class TestShiftsAndTensors:
    """Rescaling helpers and per-tensor quantization"""

    def test_round_shift(self):
        """Right shifts round half away; negative shifts multiply"""
        assert round_shift(5, 1) == 3
        assert round_shift(-5, 1) == -3
        assert round_shift(4, 1) == 2
        assert round_shift(3, -2) == 12

    def test_requantize_saturates(self):
        """Requantize rescales then clamps"""
        assert requantize(1 << 20, 14, QFormat(10, 7)) == 511
        assert requantize(128 << 7, 14, QFormat(10, 7)) == 128

    def test_mac_array_saturates_accumulator(self):
        """Dot products clamp to the accumulator width"""
        a = np.full((1, 4), 1 << 20, dtype=np.int64)
        w = np.full((4, 1), 1 << 20, dtype=np.int64)
        assert mac_array(a, w)[0, 0] == (1 << 31) - 1
        assert mac_array(np.array([[1, 2]]), np.array([[3], [4]]))[0, 0] == 11

    def test_eight_bit_error_within_half_scale(self):
        """8-bit weights in [-1, 1) round-trip within scale/2"""
        x = np.linspace(-1.0, 1.0, 4001, endpoint=False)
        q = quantize_tensor(x, 8)
        assert np.max(np.abs(q.values() - x)) <= q.scale / 2
        assert q.raw.min() >= -128 and q.raw.max() <= 127

    def test_zero_tensor_has_unit_scale(self):
        """All-zero tensors keep scale 1"""
        q = quantize_tensor(np.zeros(5), 4)
        assert q.shift == 0
        assert q.scale == 1.0
        assert not q.raw.any()

    def test_shift_is_largest_that_fits(self):
        """Peak fills the positive range without exceeding it"""
        q = quantize_tensor(np.array([0.3, -0.1]), 4)
        assert q.raw.max() <= 7
        assert round(0.3 * 2 ** (q.shift + 1)) > 7

    def test_invalid_bits(self):
        """One-bit tensors are rejected"""
        with pytest.raises(FormatError):
            quantize_tensor(np.ones(3), 1)

    def test_dequantize_array(self):
        """Array dequantization is exact"""
        assert dequantize_array(np.array([64, -128]), 7).tolist() == [0.5, -1.0]
        assert ACTIVATION_FORMAT == QFormat(10, 7)
