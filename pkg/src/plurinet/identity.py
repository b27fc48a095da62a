"""Ed25519 identities: keypairs, principals, and detached signatures.

Every stream in the system is rooted in one of these identities. Principals
are identified by the SHA-256 of their raw public key so that identifier
shape survives future key-rotation records.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .canonical import sha256_hex

SEED_LEN = 32
PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64

PRINCIPAL_PREFIX = "ed25519:"


@dataclass(frozen=True, order=True)
class Principal:
    """A public-key identity that publishes streams, operates stores, or runs nodes."""

    public_key: bytes

    def __post_init__(self) -> None:
        if len(self.public_key) != PUBLIC_KEY_LEN:
            raise ValueError(f"public key must be {PUBLIC_KEY_LEN} bytes")

    @property
    def principal_id(self) -> str:
        return sha256_hex(self.public_key)

    @property
    def encoded(self) -> str:
        """External identifier form: ed25519:<sha256 of the public key>."""
        return PRINCIPAL_PREFIX + self.principal_id

    @property
    def public_hex(self) -> str:
        return self.public_key.hex()

    @classmethod
    def from_public_hex(cls, hex_key: str) -> "Principal":
        return cls(bytes.fromhex(hex_key))


@dataclass(frozen=True)
class Signature:
    """A 64-byte detached Ed25519 signature over canonical record bytes."""

    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != SIGNATURE_LEN:
            raise ValueError(f"signature must be {SIGNATURE_LEN} bytes")

    @property
    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, hex_sig: str) -> "Signature":
        return cls(bytes.fromhex(hex_sig))


@dataclass(frozen=True)
class Keypair:
    """An Ed25519 signing identity. The seed never appears in repr or logs."""

    seed: bytes = field(repr=False)
    public_key: bytes

    def __post_init__(self) -> None:
        if len(self.seed) != SEED_LEN:
            raise ValueError(f"seed must be {SEED_LEN} bytes")

    @property
    def principal(self) -> Principal:
        return Principal(self.public_key)

    @property
    def public_hex(self) -> str:
        return self.public_key.hex()


def generate_keypair(seed: bytes | None = None) -> Keypair:
    """Create a keypair, deterministically when a 32-byte seed is given."""
    if seed is None:
        seed = os.urandom(SEED_LEN)
    elif len(seed) != SEED_LEN:
        raise ValueError(f"seed must be exactly {SEED_LEN} bytes, got {len(seed)}")
    private = Ed25519PrivateKey.from_private_bytes(seed)
    public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return Keypair(seed=seed, public_key=public)


def sign(keypair: Keypair, message: bytes) -> Signature:
    private = Ed25519PrivateKey.from_private_bytes(keypair.seed)
    return Signature(private.sign(message))


def verify(principal: Principal, message: bytes, signature: Signature) -> bool:
    """True iff the signature is valid over exactly this message. Never raises."""
    try:
        public = Ed25519PublicKey.from_public_bytes(principal.public_key)
        public.verify(signature.data, message)
        return True
    except (InvalidSignature, ValueError):
        return False


def verify_hex(public_hex: str, message: bytes, signature_hex: str) -> bool:
    """Verification from wire-format hex fields; malformed input yields False."""
    try:
        principal = Principal.from_public_hex(public_hex)
        signature = Signature.from_hex(signature_hex)
    except ValueError:
        return False
    return verify(principal, message, signature)
