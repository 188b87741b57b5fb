"""Simulated signature facility.

The authority is the trusted issuer and verifier of signature tags. A tag is
a keyed hash over the payload's canonical encoding, so verification is pure
and deterministic; unforgeability is a harness guarantee: only sign() mints
tags, and sign() refuses to act for a requester other than the signer.
Every issuance is recorded so traces can be audited for forged values.
"""

from __future__ import annotations

from functools import lru_cache
from hashlib import blake2b

from .codec import SignedValue, encode

_MASTER_SECRET = b"byztame-signing-v1"
_TAG_SIZE = 16


class ImpersonationError(Exception):
    """A process asked for a tag under another process's identity."""


@lru_cache(maxsize=256)
def _signer_key(signer: int) -> bytes:
    return blake2b(_MASTER_SECRET + signer.to_bytes(8, "big"), digest_size=32).digest()


def _tag(signer: int, payload) -> bytes:
    return blake2b(encode(payload), key=_signer_key(signer), digest_size=_TAG_SIZE).digest()


@lru_cache(maxsize=65536)
def verify(sv) -> bool:
    """True iff the tag matches (signer, payload). Pure; no issuance needed."""
    if type(sv) is not SignedValue or type(sv.signer) is not int:
        return False
    try:
        return sv.tag == _tag(sv.signer, sv.payload)
    except Exception:
        return False


class SignatureAuthority:
    """Per-run issuer with an issuance ledger for unforgeability audits."""

    def __init__(self):
        self._issued: dict[tuple[int, bytes], int] = {}

    def sign(self, signer: int, payload, requester: int | None = None,
             step: int = -1) -> SignedValue:
        if requester is not None and requester != signer:
            raise ImpersonationError(
                f"process {requester} requested a tag for signer {signer}")
        key = (signer, encode(payload))
        if key not in self._issued:
            self._issued[key] = step
        return SignedValue(signer, payload, _tag(signer, payload))

    def verify(self, sv) -> bool:
        return verify(sv)

    def issuance_step(self, sv: SignedValue) -> int | None:
        """Step at which the tag was first issued, or None if never issued."""
        return self._issued.get((sv.signer, encode(sv.payload)))
