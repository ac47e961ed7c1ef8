"""Prime-order subgroup arithmetic for the homomorphic tally scheme.

Two fixed Schnorr groups: DEFAULT_GROUP has a 256-bit subgroup order (a
safe prime, p = 2q + 1) and is used by the simulated protocols;
TEST_GROUP has q near 2^16 so exhaustive test sweeps stay fast. Neither
is a production parameter set.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .. import wire


class CryptoError(Exception):
    pass


@dataclass(frozen=True)
class Group:
    """Subgroup of order q inside Z_p^*, generated by g."""

    p: int
    q: int
    g: int

    def exp(self, base: int, e: int) -> int:
        return pow(base, e % self.q, self.p)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        return pow(a, -1, self.p)

    def is_element(self, a: int) -> bool:
        return 0 < a < self.p and pow(a, self.q, self.p) == 1

    def rand_scalar(self, rng: random.Random) -> int:
        return rng.randrange(1, self.q)

    def hash_scalar(self, domain: str, *parts: int) -> int:
        """Fiat-Shamir challenge: hash domain-separated integers to Z_q."""
        h = hashlib.sha256()
        h.update(domain.encode() + b"\x00")
        h.update(wire.ser_ints(self.p, self.q, self.g, *parts))
        return int.from_bytes(h.digest(), "big") % self.q


DEFAULT_GROUP = Group(
    p=0x1F9287EDC91F31C80705E05D4709DD07845891F64A00A2842915498BEAFE4FB47,
    q=0xFC943F6E48F98E40382F02EA384EE83C22C48FB25005142148AA4C5F57F27DA3,
    g=0x4,
)

TEST_GROUP = Group(p=131267, q=65633, g=4)


def lagrange_at_zero(index: int, indices: list[int], q: int) -> int:
    """Lagrange coefficient for interpolating a shared secret at x = 0."""
    num, den = 1, 1
    for j in indices:
        if j != index:
            num = num * (-j) % q
            den = den * (index - j) % q
    return num * pow(den, -1, q) % q
