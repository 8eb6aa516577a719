"""Tests for the sPAKE2 exchange and key confirmation."""

import itertools
import random

import pytest
from nacl import pwhash

from src.errors import ProtocolError
from src.pake.config import PROTOCOL_AAD, PakeConfig
from src.pake.group import GroupElement, ToyGroup
from src.pake.spake2 import (
    CONFIRMATION_KEY_BYTES,
    SESSION_KEY_BYTES,
    TRANSCRIPT_HASH_BYTES,
    ConfirmationTag,
    InvalidInputError,
    PakeStateError,
    Role,
    build_transcript,
    confirm_tag,
    derive_keys,
    finish,
    hash_password,
    start,
    verify_peer_tag,
)

ED_ORDER_TWO = bytes.fromhex("ecffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff7f")


def exchange(group, w_sender, w_receiver, **kwargs):
    """Run both halves of an exchange in memory and return both key sets."""
    state_a, share_a = start(group, Role.SENDER, w_sender, **kwargs)
    state_b, share_b = start(group, Role.RECEIVER, w_receiver, **kwargs)
    return finish(state_a, share_b), finish(state_b, share_a)


def toy_dlog(value: int) -> int:
    """Exhaustive discrete log base 2 in the order-11 subgroup of Z*_23."""
    for k in range(ToyGroup.ORDER):
        if pow(ToyGroup.GENERATOR, k, ToyGroup.MODULUS) == value:
            return k
    raise AssertionError(f"{value} has no discrete log")


class TestHashPassword:
    """Test password stretching into a scalar."""

    def test_deterministic(self, ed_group, fast_pake):
        """Test that equal inputs give the same scalar."""
        a = hash_password(ed_group, "kobin-zagen-hadun-lomer", b"room", fast_pake)
        b = hash_password(ed_group, "kobin-zagen-hadun-lomer", b"room", fast_pake)
        assert a == b
        assert 0 <= a.value < ed_group.params.order_p

    def test_salt_and_passphrase_change_scalar(self, ed_group, fast_pake):
        """Test that the salt and the passphrase both influence w."""
        base = hash_password(ed_group, "kobin-zagen-hadun-lomer", b"room", fast_pake)
        assert hash_password(ed_group, "kobin-zagen-hadun-lomer", b"other", fast_pake) != base
        assert hash_password(ed_group, "kobin-zagen-hadun-lomes", b"room", fast_pake) != base

    def test_empty_passphrase_rejected(self, ed_group, fast_pake):
        """Test that an empty passphrase is an input error."""
        with pytest.raises(InvalidInputError, match="must not be empty"):
            hash_password(ed_group, "", b"room", fast_pake)

    def test_config_rejects_costs_below_minimum(self):
        """Test PakeConfig validation."""
        with pytest.raises(ValueError, match="opslimit"):
            PakeConfig(opslimit=pwhash.argon2id.OPSLIMIT_MIN - 1)
        with pytest.raises(ValueError, match="memlimit"):
            PakeConfig(memlimit=pwhash.argon2id.MEMLIMIT_MIN - 1)


class TestKeyAgreement:
    """Test that honest parties agree and dishonest ones do not."""

    def test_honest_runs_agree(self, ed_group):
        """Test 1000 honest exchanges with random passwords, identities and aad."""
        rng = random.Random(2024)
        for _ in range(1000):
            w = ed_group.random_scalar()
            id_sender = rng.randbytes(rng.randrange(0, 33))
            id_receiver = rng.randbytes(rng.randrange(0, 33))
            aad = rng.randbytes(rng.randrange(0, 33))
            state_a, share_a = start(
                ed_group, Role.SENDER, w, aad=aad, identities=(id_sender, id_receiver)
            )
            state_b, share_b = start(
                ed_group, Role.RECEIVER, w, aad=aad, identities=(id_receiver, id_sender)
            )
            keys_a, keys_b = finish(state_a, share_b), finish(state_b, share_a)
            assert keys_a == keys_b
            assert keys_a.transcript.startswith(build_transcript(id_sender, id_receiver))
            assert verify_peer_tag(keys_a, Role.SENDER, confirm_tag(keys_b, Role.RECEIVER))
            assert verify_peer_tag(keys_b, Role.RECEIVER, confirm_tag(keys_a, Role.SENDER))

    def test_mismatched_aad_or_identities_fail_confirmation(self, ed_group):
        """Test that keys agree only when both sides bind the same aad and identities."""
        w = ed_group.scalar(7)
        for kwargs_a, kwargs_b in [
            ({"aad": b"one"}, {"aad": b"two"}),
            ({"identities": (b"a", b"b")}, {"identities": (b"b", b"x")}),
        ]:
            state_a, share_a = start(ed_group, Role.SENDER, w, **kwargs_a)
            state_b, share_b = start(ed_group, Role.RECEIVER, w, **kwargs_b)
            keys_a, keys_b = finish(state_a, share_b), finish(state_b, share_a)
            assert not verify_peer_tag(keys_a, Role.SENDER, confirm_tag(keys_b, Role.RECEIVER))
            assert not verify_peer_tag(keys_b, Role.RECEIVER, confirm_tag(keys_a, Role.SENDER))

    def test_honest_run_from_passphrase(self, ed_group, fast_pake):
        """Test agreement when both sides stretch the same passphrase."""
        w_a = hash_password(ed_group, "baban-zopur-kobin-lomer", b"salt", fast_pake)
        w_b = hash_password(ed_group, "baban-zopur-kobin-lomer", b"salt", fast_pake)
        keys_a, keys_b = exchange(ed_group, w_a, w_b)
        assert keys_a.ke == keys_b.ke
        assert len(keys_a.ke) == SESSION_KEY_BYTES

    def test_fresh_ephemerals_give_fresh_keys(self, ed_group):
        """Test that two runs with the same password derive different keys."""
        w = ed_group.scalar(42)
        first, _ = exchange(ed_group, w, w)
        second, _ = exchange(ed_group, w, w)
        assert first.ke != second.ke

    def test_wrong_password_rejected_by_both_sides(self, ed_group):
        """Test 100 mismatched-password runs fail confirmation on both sides."""
        for _ in range(100):
            keys_a, keys_b = exchange(ed_group, ed_group.random_scalar(), ed_group.random_scalar())
            assert keys_a.ke != keys_b.ke
            assert not verify_peer_tag(keys_a, Role.SENDER, confirm_tag(keys_b, Role.RECEIVER))
            assert not verify_peer_tag(keys_b, Role.RECEIVER, confirm_tag(keys_a, Role.SENDER))

    def test_shares_hide_ephemeral_under_mask(self, ed_group):
        """Test that sender and receiver use different masks for the same secrets."""
        w = ed_group.scalar(7)
        x = ed_group.scalar(11)
        _, t_share = start(ed_group, Role.SENDER, w, ephemeral=x)
        _, s_share = start(ed_group, Role.RECEIVER, w, ephemeral=x)
        assert t_share != s_share
        unmasked = ed_group.sub(t_share, ed_group.scalar_mul(w, ed_group.params.mask_m))
        assert unmasked == ed_group.base_mul(x)


class TestToyOracle:
    """Check full exchanges in the order-11 group against brute-force discrete logs."""

    @pytest.mark.parametrize("w_value", [1, 4, 9])
    def test_all_ephemeral_pairs_match_oracle(self, toy_group, w_value):
        """Test all 10 x 10 (x, y) pairs against exponent arithmetic."""
        m = toy_dlog(ToyGroup.value_of(toy_group.params.mask_m))
        n = toy_dlog(ToyGroup.value_of(toy_group.params.mask_n))
        w = toy_group.scalar(w_value)
        p, q = ToyGroup.ORDER, ToyGroup.MODULUS

        for x, y in itertools.product(range(1, p), repeat=2):
            state_a, t_share = start(toy_group, Role.SENDER, w, ephemeral=toy_group.scalar(x))
            state_b, s_share = start(toy_group, Role.RECEIVER, w, ephemeral=toy_group.scalar(y))

            t_expected = pow(2, (w_value * m + x) % p, q)
            s_expected = pow(2, (w_value * n + y) % p, q)
            assert ToyGroup.value_of(t_share) == t_expected
            assert ToyGroup.value_of(s_share) == s_expected

            if t_expected == 1 or s_expected == 1:
                # An identity share is refused by whichever side receives it
                with pytest.raises(ProtocolError, match="identity"):
                    if s_expected == 1:
                        finish(state_a, s_share)
                    else:
                        finish(state_b, t_share)
                continue

            keys_a = finish(state_a, s_share)
            keys_b = finish(state_b, t_share)
            k_expected = pow(2, (x * y) % p, q)
            transcript = build_transcript(
                b"sender",
                b"receiver",
                bytes([s_expected]),
                bytes([t_expected]),
                bytes([k_expected]),
                bytes([w_value]),
            )
            assert keys_a.transcript == transcript
            assert keys_a == keys_b == derive_keys(transcript, PROTOCOL_AAD)


class TestFinish:
    """Test rejection paths in finish()."""

    def test_finish_twice_raises(self, ed_group):
        """Test that a consumed state cannot be finished again."""
        w = ed_group.scalar(3)
        state_a, _ = start(ed_group, Role.SENDER, w)
        _, share_b = start(ed_group, Role.RECEIVER, w)
        finish(state_a, share_b)
        with pytest.raises(PakeStateError, match="already finished"):
            finish(state_a, share_b)

    def test_identity_share_rejected(self, ed_group):
        """Test that a peer sending the identity element is rejected."""
        state, _ = start(ed_group, Role.SENDER, ed_group.scalar(3))
        with pytest.raises(ProtocolError, match="identity"):
            finish(state, ed_group.identity)
        assert not state.finished

    def test_small_order_share_rejected(self, ed_group):
        """Test that a low-order point is rejected as a protocol violation."""
        state, _ = start(ed_group, Role.RECEIVER, ed_group.scalar(3))
        with pytest.raises(ProtocolError):
            finish(state, GroupElement(ED_ORDER_TWO))

    def test_custom_identities_enter_transcript(self, ed_group):
        """Test that identity strings are bound into the transcript."""
        w = ed_group.scalar(5)
        state_a, share_a = start(ed_group, Role.SENDER, w, identities=(b"alice", b"bob"))
        state_b, share_b = start(ed_group, Role.RECEIVER, w, identities=(b"bob", b"alice"))
        keys_a, keys_b = finish(state_a, share_b), finish(state_b, share_a)
        assert keys_a == keys_b
        assert keys_a.transcript.startswith(build_transcript(b"alice", b"bob"))

    def test_state_repr_hides_secrets(self, ed_group):
        """Test that w and the ephemeral secret are excluded from repr."""
        w = ed_group.scalar(123456789)
        state, _ = start(ed_group, Role.SENDER, w)
        assert "ephemeral_secret" not in repr(state)
        assert ", w=" not in repr(state)


class TestKeySchedule:
    """Test key derivation and confirmation tags."""

    def test_key_lengths(self, session_keys):
        """Test the sizes of every derived secret."""
        assert len(session_keys.ke) == SESSION_KEY_BYTES
        assert len(session_keys.ka) == SESSION_KEY_BYTES
        assert len(session_keys.kc_a) == CONFIRMATION_KEY_BYTES
        assert len(session_keys.kc_b) == CONFIRMATION_KEY_BYTES
        assert len(session_keys.transcript_hash) == TRANSCRIPT_HASH_BYTES
        assert session_keys.kc_a != session_keys.kc_b

    def test_aad_changes_only_confirmation_keys(self):
        """Test that the AAD is mixed into KcA/KcB and not into Ke."""
        transcript = build_transcript(b"a", b"b")
        one = derive_keys(transcript, b"one")
        two = derive_keys(transcript, b"two")
        assert one.ke == two.ke
        assert one.kc_a != two.kc_a

    def test_transcript_length_prefix(self):
        """Test the 8-byte little-endian length prefix."""
        assert build_transcript(b"ab", b"") == b"\x02" + b"\x00" * 7 + b"ab" + b"\x00" * 8

    def test_repr_hides_keys(self, session_keys):
        """Test that key material is excluded from repr."""
        text = repr(session_keys)
        assert repr(session_keys.ke) not in text
        assert "kc_a" not in text

    def test_confirmation_round_trip(self, session_keys):
        """Test that each side accepts the other's tag."""
        assert verify_peer_tag(session_keys, Role.RECEIVER, confirm_tag(session_keys, Role.SENDER))
        assert verify_peer_tag(session_keys, Role.SENDER, confirm_tag(session_keys, Role.RECEIVER))

    def test_reflected_tag_rejected(self, session_keys):
        """Test that a side's own tag, echoed back, is refused."""
        own = confirm_tag(session_keys, Role.SENDER)
        assert not verify_peer_tag(session_keys, Role.SENDER, own)
        relabelled = ConfirmationTag(mac=own.mac, from_role=Role.RECEIVER)
        assert not verify_peer_tag(session_keys, Role.SENDER, relabelled)

    def test_truncated_tag_is_protocol_error(self, session_keys):
        """Test that a tag of the wrong length is a protocol violation."""
        tag = ConfirmationTag(mac=b"\x00" * 16, from_role=Role.RECEIVER)
        with pytest.raises(ProtocolError, match="32 bytes"):
            verify_peer_tag(session_keys, Role.SENDER, tag)
