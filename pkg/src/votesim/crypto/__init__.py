"""Self-contained cryptographic primitives for the voting protocols."""

from .group import CryptoError, DEFAULT_GROUP, Group, TEST_GROUP, lagrange_at_zero
from .elgamal import (
    Ciphertext,
    DecryptionShare,
    InsufficientShares,
    KeyShare,
    PlaintextOutOfRange,
    PublicKey,
    combine,
    decrypt,
    dlog_recover,
    encrypt,
    encrypt_random,
    encrypt_zero,
    hom_add,
    hom_sum,
    keygen,
    partial_decrypt,
    threshold_keygen,
)
from .proofs import BallotProof, prove_ballot, prove_vector, verify_ballot
from .blindsig import (
    IssuerKey,
    IssuerPublicKey,
    Token,
    blind,
    generate_issuer_key,
    hash_serial,
    random_blinding,
    random_serial,
    sign_blinded,
    unblind,
    verify_token,
)

__all__ = [
    "BallotProof",
    "Ciphertext",
    "CryptoError",
    "DEFAULT_GROUP",
    "DecryptionShare",
    "Group",
    "InsufficientShares",
    "IssuerKey",
    "IssuerPublicKey",
    "KeyShare",
    "PlaintextOutOfRange",
    "PublicKey",
    "TEST_GROUP",
    "Token",
    "blind",
    "combine",
    "decrypt",
    "dlog_recover",
    "encrypt",
    "encrypt_random",
    "encrypt_zero",
    "generate_issuer_key",
    "hash_serial",
    "hom_add",
    "hom_sum",
    "keygen",
    "lagrange_at_zero",
    "partial_decrypt",
    "prove_ballot",
    "prove_vector",
    "random_blinding",
    "random_serial",
    "sign_blinded",
    "threshold_keygen",
    "unblind",
    "verify_token",
]
