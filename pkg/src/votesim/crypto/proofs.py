"""Ballot-validity proofs: each component encrypts 0 or 1, and the
components sum to exactly one.

Per component a two-branch disjunctive Chaum-Pedersen proof (Fiat-Shamir,
domain-separated); the component sum is tied down by one more
Chaum-Pedersen proof on the homomorphic sum of the ciphertexts. The
verifier recomputes every challenge and returns False on any
inconsistency; it never raises.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .. import wire
from .elgamal import Ciphertext, PublicKey, hom_sum
from .group import CryptoError

_OR_DOMAIN = "votesim/ballot-or/v1"
_SUM_DOMAIN = "votesim/ballot-sum/v1"


@dataclass(frozen=True)
class ComponentProof:
    """OR-proof transcript: commitments, split challenges, responses."""

    a0: int
    b0: int
    a1: int
    b1: int
    e0: int
    e1: int
    z0: int
    z1: int

    def to_obj(self) -> list[int]:
        return [self.a0, self.b0, self.a1, self.b1, self.e0, self.e1, self.z0, self.z1]

    @classmethod
    def from_obj(cls, obj) -> "ComponentProof":
        return cls(*(int(x) for x in obj))


@dataclass(frozen=True)
class SumProof:
    w1: int
    w2: int
    z: int

    def to_obj(self) -> list[int]:
        return [self.w1, self.w2, self.z]

    @classmethod
    def from_obj(cls, obj) -> "SumProof":
        return cls(*(int(x) for x in obj))


@dataclass(frozen=True)
class BallotProof:
    components: tuple[ComponentProof, ...]
    sum_proof: SumProof

    def serialize(self) -> bytes:
        nums: list[int] = []
        for c in self.components:
            nums.extend(c.to_obj())
        nums.extend(self.sum_proof.to_obj())
        return wire.ser_ints(*nums)

    def to_obj(self) -> dict:
        return {
            "comp": [c.to_obj() for c in self.components],
            "sum": self.sum_proof.to_obj(),
        }

    @classmethod
    def from_obj(cls, obj) -> "BallotProof":
        return cls(
            tuple(ComponentProof.from_obj(c) for c in obj["comp"]),
            SumProof.from_obj(obj["sum"]),
        )


def _statement(pk: PublicKey, cts: list[Ciphertext]) -> list[int]:
    nums = [pk.h]
    for ct in cts:
        nums.extend((ct.a, ct.b))
    return nums


def prove_ballot(pk: PublicKey, choice: int, d: int,
                 rng: random.Random) -> tuple[list[Ciphertext], BallotProof]:
    """Encrypt the unit vector for `choice` and prove it well-formed."""
    if not 0 <= choice < d:
        raise CryptoError(f"choice {choice} outside [0, {d})")
    ms = [1 if j == choice else 0 for j in range(d)]
    return prove_vector(pk, ms, rng)


def prove_vector(pk: PublicKey, ms: list[int],
                 rng: random.Random) -> tuple[list[Ciphertext], BallotProof]:
    """Prove an arbitrary 0/1-intended plaintext vector.

    Exists so that byzantine behaviors and soundness tests can produce
    syntactically well-formed but invalid ballots (two-hot vectors,
    components outside {0, 1}); such proofs do not verify.
    """
    group = pk.group
    g, h, p, q = group.g, pk.h, group.p, group.q
    rs = [group.rand_scalar(rng) for _ in ms]
    cts = []
    for m, r in zip(ms, rs):
        a = group.exp(g, r)
        b = group.exp(g, m) * group.exp(h, r) % p
        cts.append(Ciphertext(group, a, b))
    stmt = _statement(pk, cts)

    comps = []
    for j, (ct, m, r) in enumerate(zip(cts, ms, rs)):
        real = m if m in (0, 1) else 1
        sim = 1 - real
        e_sim = group.rand_scalar(rng)
        z_sim = group.rand_scalar(rng)
        # Simulated branch: pick challenge and response, derive commitments.
        bv = group.mul(ct.b, group.inv(group.exp(g, sim)))
        a_sim = group.mul(group.exp(g, z_sim), group.inv(group.exp(ct.a, e_sim)))
        b_sim = group.mul(group.exp(h, z_sim), group.inv(group.exp(bv, e_sim)))
        w = group.rand_scalar(rng)
        a_real = group.exp(g, w)
        b_real = group.exp(h, w)
        four = (a_real, b_real, a_sim, b_sim) if real == 0 else (a_sim, b_sim, a_real, b_real)
        e = group.hash_scalar(_OR_DOMAIN, *stmt, j, *four)
        e_real = (e - e_sim) % q
        z_real = (w + e_real * r) % q
        if real == 0:
            comps.append(ComponentProof(*four, e_real, e_sim, z_real, z_sim))
        else:
            comps.append(ComponentProof(*four, e_sim, e_real, z_sim, z_real))

    big_r = sum(rs) % q
    w = group.rand_scalar(rng)
    w1, w2 = group.exp(g, w), group.exp(h, w)
    e_s = group.hash_scalar(_SUM_DOMAIN, *stmt, w1, w2)
    z = (w + e_s * big_r) % q
    return cts, BallotProof(tuple(comps), SumProof(w1, w2, z))


def verify_ballot(pk: PublicKey, cts: list[Ciphertext], proof: BallotProof) -> bool:
    """Check the disjunctive proofs and the sum proof. Never raises."""
    try:
        group = pk.group
        g, h, p, q = group.g, pk.h, group.p, group.q
        if len(cts) != len(proof.components) or not cts:
            return False
        for ct in cts:
            if not (group.is_element(ct.a) and group.is_element(ct.b)):
                return False
        stmt = _statement(pk, cts)
        for j, (ct, c) in enumerate(zip(cts, proof.components)):
            e = group.hash_scalar(_OR_DOMAIN, *stmt, j, c.a0, c.b0, c.a1, c.b1)
            if (c.e0 + c.e1) % q != e:
                return False
            for v, (av, bv_c, ev, zv) in enumerate(
                ((c.a0, c.b0, c.e0, c.z0), (c.a1, c.b1, c.e1, c.z1))
            ):
                bv = group.mul(ct.b, group.inv(group.exp(g, v)))
                if group.exp(g, zv) != group.mul(av, group.exp(ct.a, ev)):
                    return False
                if group.exp(h, zv) != group.mul(bv_c, group.exp(bv, ev)):
                    return False
        total = hom_sum(cts)
        sp = proof.sum_proof
        e_s = group.hash_scalar(_SUM_DOMAIN, *stmt, sp.w1, sp.w2)
        bv = group.mul(total.b, group.inv(g))
        if group.exp(g, sp.z) != group.mul(sp.w1, group.exp(total.a, e_s)):
            return False
        if group.exp(h, sp.z) != group.mul(sp.w2, group.exp(bv, e_s)):
            return False
        return True
    except Exception:
        return False
