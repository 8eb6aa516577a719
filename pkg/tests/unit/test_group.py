"""Tests for the prime-order group realizations."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.pake.group import DecodeError, GroupElement, GroupError, Scalar, ToyGroup

TOY_SUBGROUP = {1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18}

# Order-2 point (y = -1) and order-4 point (y = 0) of edwards25519
ED_ORDER_TWO = bytes.fromhex("ecffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff7f")
ED_ORDER_FOUR = bytes(32)


class TestScalar:
    """Test scalar construction and reduction."""

    def test_scalar_reduces_modulo_order(self, toy_group):
        """Test that scalar() reduces values into [0, order)."""
        assert toy_group.scalar(12).value == 1
        assert toy_group.scalar(-1).value == 10

    def test_scalar_rejects_unreduced_value(self):
        """Test that a direct Scalar outside the range is rejected."""
        with pytest.raises(ValueError, match="must lie in"):
            Scalar(11, 11)

    def test_scalar_repr_hides_value(self):
        """Test that secret scalar values never appear in repr."""
        assert "123456789" not in repr(Scalar(123456789, 2**255))

    def test_encode_scalar_is_fixed_length_big_endian(self, ed_group):
        """Test canonical scalar encoding."""
        encoded = ed_group.encode_scalar(ed_group.scalar(258))
        assert len(encoded) == 32
        assert encoded[-2:] == b"\x01\x02"


class TestToyGroup:
    """Test the order-11 subgroup of Z*_23."""

    def test_parameters(self, toy_group):
        """Test the public parameters of the toy group."""
        params = toy_group.params
        assert params.order_p == 11
        assert params.cofactor_h == 1
        assert ToyGroup.value_of(params.generator) == 2
        assert params.mask_m != params.mask_n
        assert ToyGroup.value_of(params.mask_m) in TOY_SUBGROUP
        assert ToyGroup.value_of(params.mask_n) in TOY_SUBGROUP

    def test_generator_powers_enumerate_subgroup(self, toy_group):
        """Test that 2^k mod 23 walks through all 11 quadratic residues."""
        generator = toy_group.params.generator
        values = {
            ToyGroup.value_of(toy_group.scalar_mul(toy_group.scalar(k), generator))
            for k in range(11)
        }
        assert values == TOY_SUBGROUP

    def test_scalar_mul_examples(self, toy_group):
        """Test worked examples of exponentiation mod 23."""
        g = toy_group.params.generator
        assert toy_group.scalar_mul(toy_group.scalar(3), g).data == b"\x08"
        assert toy_group.scalar_mul(toy_group.scalar(0), g) == toy_group.identity
        assert toy_group.scalar_mul(toy_group.scalar(11), g) == toy_group.identity

    def test_add_and_neg(self, toy_group):
        """Test multiplication and inversion mod 23."""
        a = ToyGroup.element(4)
        b = ToyGroup.element(8)
        assert ToyGroup.value_of(toy_group.add(a, b)) == 32 % 23
        assert toy_group.add(a, toy_group.neg(a)) == toy_group.identity
        assert toy_group.sub(a, a) == toy_group.identity

    @pytest.mark.parametrize("value", sorted(TOY_SUBGROUP))
    def test_decode_accepts_subgroup(self, toy_group, value):
        """Test that every quadratic residue decodes."""
        assert ToyGroup.value_of(toy_group.decode(bytes([value]))) == value

    @pytest.mark.parametrize("value", [0, 5, 7, 10, 11, 22, 23, 200])
    def test_decode_rejects_non_members(self, toy_group, value):
        """Test that non-residues and out-of-range bytes are rejected."""
        with pytest.raises(DecodeError):
            toy_group.decode(bytes([value]))

    @pytest.mark.parametrize("data", [b"", b"\x02\x02"])
    def test_decode_rejects_wrong_length(self, toy_group, data):
        """Test that encodings of the wrong length are rejected."""
        with pytest.raises(DecodeError, match="1 byte"):
            toy_group.decode(data)

    def test_is_in_subgroup(self, toy_group):
        """Test membership against the known residue set."""
        for v in range(1, 23):
            assert toy_group.is_in_subgroup(ToyGroup.element(v)) == (v in TOY_SUBGROUP)

    @given(a=st.integers(0, 10), b=st.integers(0, 10))
    def test_scalar_mul_is_homomorphic(self, toy_group, a, b):
        """Test (a + b)·P == a·P + b·P."""
        g = toy_group.params.generator
        lhs = toy_group.base_mul(toy_group.scalar(a + b))
        rhs = toy_group.add(
            toy_group.base_mul(toy_group.scalar(a)), toy_group.base_mul(toy_group.scalar(b))
        )
        assert lhs == rhs
        k = toy_group.scalar(a)
        assert toy_group.scalar_mul(k, g) == toy_group.base_mul(k)


class TestEd25519Group:
    """Test the edwards25519 prime-order subgroup."""

    def test_parameters_validate(self, ed_group):
        """Test that generator and masks are non-identity subgroup members."""
        ed_group.validate_params()
        params = ed_group.params
        assert params.cofactor_h == 8
        assert params.element_length == 32
        assert params.mask_m != params.mask_n
        assert params.generator not in (params.mask_m, params.mask_n)

    def test_masks_are_reproducible(self, ed_group):
        """Test that both parties derive the same M and N."""
        other = type(ed_group)()
        assert other.params.mask_m == ed_group.params.mask_m
        assert other.params.mask_n == ed_group.params.mask_n

    def test_scalar_mul_identity_cases(self, ed_group):
        """Test that 0·P and k·identity are the identity."""
        g = ed_group.params.generator
        assert ed_group.scalar_mul(ed_group.scalar(0), g) == ed_group.identity
        assert ed_group.scalar_mul(ed_group.scalar(5), ed_group.identity) == ed_group.identity

    def test_order_times_generator_is_identity(self, ed_group):
        """Test that (p - 1)·P + P is the identity."""
        g = ed_group.params.generator
        almost = ed_group.scalar_mul(ed_group.scalar(ed_group.params.order_p - 1), g)
        assert ed_group.add(almost, g) == ed_group.identity

    def test_neg(self, ed_group):
        """Test that e + (-e) is the identity."""
        e = ed_group.base_mul(ed_group.scalar(12345))
        assert ed_group.add(e, ed_group.neg(e)) == ed_group.identity

    def test_decode_accepts_identity_and_members(self, ed_group):
        """Test decoding of the identity and a generated element."""
        e = ed_group.base_mul(ed_group.scalar(99))
        assert ed_group.decode(ed_group.encode(e)) == e
        assert ed_group.decode(ed_group.IDENTITY_BYTES) == ed_group.identity

    @pytest.mark.parametrize("data", [ED_ORDER_TWO, ED_ORDER_FOUR])
    def test_decode_rejects_small_order_points(self, ed_group, data):
        """Test that low-order points are rejected."""
        with pytest.raises(DecodeError):
            ed_group.decode(data)

    def test_decode_rejects_point_with_torsion_component(self, ed_group):
        """Test that P + T2 (on the curve, outside the subgroup) is rejected."""
        g = ed_group.params.generator
        mixed = ed_group.add(g, GroupElement(ED_ORDER_TWO))
        with pytest.raises(DecodeError):
            ed_group.decode(mixed.data)

    def test_decode_rejects_wrong_length(self, ed_group):
        """Test that encodings of the wrong length are rejected."""
        with pytest.raises(DecodeError, match="32 bytes"):
            ed_group.decode(b"\x01" * 31)

    @given(a=st.integers(1, 2**64), b=st.integers(1, 2**64))
    def test_scalar_mul_is_homomorphic(self, ed_group, a, b):
        """Test (a + b)·P == a·P + b·P."""
        lhs = ed_group.base_mul(ed_group.scalar(a + b))
        rhs = ed_group.add(
            ed_group.base_mul(ed_group.scalar(a)), ed_group.base_mul(ed_group.scalar(b))
        )
        assert lhs == rhs


class TestRandomScalar:
    """Test ephemeral-secret sampling."""

    def test_draws_are_nonzero_and_reduced(self, ed_group):
        """Test 200 draws are in [1, p) and distinct."""
        draws = [ed_group.random_scalar() for _ in range(200)]
        assert all(0 < s.value < ed_group.params.order_p for s in draws)
        assert len({s.value for s in draws}) == 200

    def test_rejection_sampling_skips_out_of_range(self, toy_group):
        """Test that zero and values >= p are rejected before a valid draw."""
        outputs = iter([b"\x00", b"\x0f", b"\x0b", b"\x07"])
        scalar = toy_group.random_scalar(lambda n: next(outputs))
        assert scalar.value == 7

    def test_entropy_failure_raises(self, toy_group):
        """Test that an OS entropy failure is surfaced as GroupError."""

        def broken(n):
            raise OSError("no entropy")

        with pytest.raises(GroupError, match="Entropy source failed"):
            toy_group.random_scalar(broken)

    def test_short_entropy_raises(self, ed_group):
        """Test that a short read from the entropy source is rejected."""
        with pytest.raises(GroupError, match="returned 3 bytes"):
            ed_group.random_scalar(lambda n: b"abc")
