"""Reference protocols the distributed ones are measured against.

Helios-like: voters send encrypted, proof-carrying ballots to one hub
(star topology); fixed trustees threshold-decrypt the homomorphic sum;
the hub publishes ballots, proofs, decryption shares and tally, and every
voter independently re-verifies the whole bulletin. The hub is a single
point of failure on purpose.

Mesh: information-theoretic additive secret sharing over a full mesh.
Every voter splits its unit vector into n additive shares, one per peer;
everyone broadcasts its column sum and reconstructs the histogram. This
costs exactly 2n(n-1) messages and has no loss tolerance at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import simnet, wire
from .crypto import (
    Ciphertext,
    DecryptionShare,
    KeyShare,
    PublicKey,
    combine,
    encrypt_zero,
    hom_add,
    partial_decrypt,
    prove_ballot,
    threshold_keygen,
    verify_ballot,
)
from .crypto.group import DEFAULT_GROUP, Group
from .crypto.proofs import BallotProof
from .overlay import GOSSIP_MESH, Overlay, build_star
from .simnet import (
    FaultModel,
    Peer,
    PHASE_AGGREGATION,
    PHASE_CASTING,
    PHASE_EVALUATION,
    PHASE_REGISTRATION,
    PHASE_VERIFICATION,
    SendMutator,
    Trace,
    register_behavior,
)

BEHAVIOR_TAMPER_BULLETIN = "helios:tamper-bulletin"

ROLE_HUB = "hub"
ROLE_TRUSTEE = "trustee"
ARTIFACT_PUBKEY = "threshold-public-key"
ARTIFACT_TALLY = "threshold-tally"

MESH_MODULUS = (1 << 61) - 1  # prime; share scalars live in Z_q


@dataclass(frozen=True)
class HeliosParams:
    n: int
    trustees: int
    t: int
    d: int

    @property
    def hub(self) -> int:
        return self.n

    @property
    def trustee_ids(self) -> tuple[int, ...]:
        return tuple(range(self.n + 1, self.n + 1 + self.trustees))

    def validate(self) -> None:
        if self.n < 1:
            raise simnet.ConfigError("n must be >= 1")
        if not 1 <= self.t <= self.trustees:
            raise simnet.ConfigError("need 1 <= t <= trustees")
        if self.d < 2:
            raise simnet.ConfigError("d must be >= 2")


@dataclass
class HeliosOutcome:
    tallies: dict[int, tuple[int, ...] | None]
    completion: float
    accepted: int | None
    verification_failures: set[int]
    roles: simnet.RoleLog

    def to_obj(self) -> dict:
        return {
            "protocol": "helios",
            "completion": self.completion,
            "accepted": self.accepted,
            "tallies": {
                str(p): (list(t) if t is not None else None)
                for p, t in sorted(self.tallies.items())
            },
            "verification_failures": sorted(self.verification_failures),
            "roles": self.roles.to_obj(),
        }


class HeliosVoter(Peer):
    def __init__(self, pid: int, params: HeliosParams, choice: int, group: Group):
        super().__init__(pid)
        self.params = params
        self.choice = choice
        self.group = group
        self.pk: PublicKey | None = None
        self.tally: tuple[int, ...] | None = None
        self.verify_failed = False

    def on_message(self, ctx, sender, msg):
        kind = msg.get("t")
        if kind == "pubkey" and self.pk is None and sender == self.params.hub:
            self.pk = PublicKey(
                self.group, int(msg["h"]), t=self.params.t, n_holders=self.params.trustees
            )
            ctx.log_action(PHASE_CASTING, "cast", consumes=(ARTIFACT_PUBKEY,))
            cts, proof = prove_ballot(self.pk, self.choice, self.params.d, ctx.rng)
            ctx.send(
                self.params.hub,
                {"t": "ballot", "cts": [[c.a, c.b] for c in cts], "proof": proof.to_obj()},
                PHASE_CASTING,
            )
        elif kind == "bulletin" and sender == self.params.hub:
            self._verify_bulletin(ctx, msg)

    def _verify_bulletin(self, ctx, msg):
        """Recompute everything the hub published: proofs, the homomorphic
        sum, the threshold combination and the claimed tally."""
        ok = True
        try:
            ballots = []
            for voter, cts_obj, proof_obj in msg["ballots"]:
                cts = [Ciphertext(self.group, int(a), int(b)) for a, b in cts_obj]
                ballots.append((int(voter), cts, BallotProof.from_obj(proof_obj)))
            tally = tuple(int(x) for x in msg["tally"])
            accepted = int(msg["accepted"])
            for _, cts, proof in ballots:
                if len(cts) != self.params.d or not verify_ballot(self.pk, cts, proof):
                    ok = False
            if ok:
                agg = [encrypt_zero(self.pk) for _ in range(self.params.d)]
                for _, cts, _ in ballots:
                    agg = [hom_add(a, c) for a, c in zip(agg, cts)]
                shares = {
                    int(idx): [int(v) for v in vals] for idx, vals in msg["shares"]
                }
                for comp, ct in enumerate(agg):
                    dec = [
                        DecryptionShare(idx, vals[comp])
                        for idx, vals in sorted(shares.items())
                    ]
                    if combine(self.pk, dec, ct, self.params.n) != tally[comp]:
                        ok = False
                        break
                if sum(tally) != accepted or accepted != len(ballots):
                    ok = False
        except Exception:
            ok = False
        ctx.log_action(PHASE_VERIFICATION, "verify")
        if ok:
            self.tally = tally
        else:
            self.verify_failed = True
            ctx.log_action(PHASE_VERIFICATION, "verify-failed")
        ctx.finish()


class HeliosHub(Peer):
    def __init__(self, params: HeliosParams, pk: PublicKey, group: Group):
        super().__init__(params.hub)
        self.params = params
        self.pk = pk
        self.group = group
        self.ballots: dict[int, tuple[list[Ciphertext], BallotProof]] = {}
        self.aggregated = False
        self.agg: list[Ciphertext] | None = None
        self.accepted = 0
        self.valid: list = []
        self.dec_shares: dict[int, list[int]] = {}
        self.tally: tuple[int, ...] | None = None

    def on_start(self, ctx):
        ctx.log_action(PHASE_REGISTRATION, "publish-key")
        for voter in range(self.params.n):
            ctx.send(voter, {"t": "pubkey", "h": self.pk.h}, PHASE_REGISTRATION)

    def on_message(self, ctx, sender, msg):
        kind = msg.get("t")
        if kind == "ballot" and 0 <= sender < self.params.n and sender not in self.ballots:
            ctx.log_action(PHASE_CASTING, "collect")
            cts = [Ciphertext(self.group, int(a), int(b)) for a, b in msg["cts"]]
            self.ballots[sender] = (cts, BallotProof.from_obj(msg["proof"]))
            if len(self.ballots) == self.params.n:
                self._aggregate(ctx)
        elif kind == "decshare" and sender in self.params.trustee_ids:
            idx = int(msg["idx"])
            if idx not in self.dec_shares:
                self.dec_shares[idx] = [int(v) for v in msg["v"]]
                if len(self.dec_shares) >= self.params.t and self.tally is None:
                    self._evaluate(ctx)

    def on_idle(self, ctx):
        # Voters that crashed will never cast; proceed with what arrived.
        if not self.aggregated:
            self._aggregate(ctx)

    def _aggregate(self, ctx):
        if self.aggregated:
            return
        self.aggregated = True
        valid = []
        for voter in sorted(self.ballots):
            cts, proof = self.ballots[voter]
            if len(cts) == self.params.d and verify_ballot(self.pk, cts, proof):
                valid.append((voter, cts, proof))
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        agg = [encrypt_zero(self.pk) for _ in range(self.params.d)]
        for _, cts, _ in valid:
            agg = [hom_add(a, c) for a, c in zip(agg, cts)]
        self.agg = agg
        self.accepted = len(valid)
        self.valid = valid
        payload = {"t": "decrypt", "cts": [[c.a, c.b] for c in agg]}
        for trustee in self.params.trustee_ids:
            ctx.send(trustee, payload, PHASE_EVALUATION)

    def _evaluate(self, ctx):
        counts = []
        for comp, ct in enumerate(self.agg):
            dec = [
                DecryptionShare(idx, vals[comp])
                for idx, vals in sorted(self.dec_shares.items())[: self.params.t]
            ]
            counts.append(combine(self.pk, dec, ct, self.params.n))
        self.tally = tuple(counts)
        ctx.log_action(PHASE_EVALUATION, "evaluate")
        bulletin = {
            "t": "bulletin",
            "ballots": [
                [voter, [[c.a, c.b] for c in cts], proof.to_obj()]
                for voter, cts, proof in self.valid
            ],
            "shares": [
                [idx, vals] for idx, vals in sorted(self.dec_shares.items())[: self.params.t]
            ],
            "tally": list(self.tally),
            "accepted": self.accepted,
        }
        for voter in range(self.params.n):
            ctx.send(voter, bulletin, PHASE_EVALUATION)
        ctx.finish()


class HeliosTrustee(Peer):
    def __init__(self, pid: int, params: HeliosParams, share: KeyShare, group: Group):
        super().__init__(pid)
        self.params = params
        self.share = share
        self.group = group

    def on_message(self, ctx, sender, msg):
        if msg.get("t") == "decrypt" and sender == self.params.hub:
            ctx.log_action(PHASE_EVALUATION, "partial-decrypt")
            cts = [Ciphertext(self.group, int(a), int(b)) for a, b in msg["cts"]]
            values = [partial_decrypt(self.share, ct).value for ct in cts]
            ctx.send(
                self.params.hub,
                {"t": "decshare", "idx": self.share.index, "v": values},
                PHASE_EVALUATION,
            )
            ctx.finish()


def _tamper_bulletin(msg: dict) -> dict:
    if msg.get("t") == "bulletin" and msg["ballots"]:
        group = DEFAULT_GROUP
        ballots = [list(b) for b in msg["ballots"]]
        voter, cts_obj, proof = ballots[0]
        cts = [list(pair) for pair in cts_obj]
        cts[0][1] = group.mul(int(cts[0][1]), group.g)
        ballots[0] = [voter, cts, proof]
        return {**msg, "ballots": ballots}
    return msg


register_behavior(BEHAVIOR_TAMPER_BULLETIN, lambda inner: SendMutator(inner, _tamper_bulletin))


def run_helios_like(params: HeliosParams, choices: list[int], faults: FaultModel,
                    seed: int, group: Group = DEFAULT_GROUP,
                    max_ticks: int = 1_000_000) -> tuple[HeliosOutcome, Trace]:
    """Centralized homomorphic election with trustee threshold decryption.

    The hub and trustees are distinguished non-voter peers fixed by the
    scenario; a crashed hub takes the whole election down by design.
    """
    params.validate()
    if len(choices) != params.n:
        raise simnet.ConfigError(f"need {params.n} choices, got {len(choices)}")
    if any(not 0 <= c < params.d for c in choices):
        raise simnet.ConfigError("choice out of range")
    pk, shares = threshold_keygen(
        params.t, params.trustees, group, wire.derive_seed(seed, "trustee-keys")
    )
    total = params.n + 1 + params.trustees
    ov = build_star(total, params.hub)
    sim = simnet.Simulator(
        faults,
        seed,
        params={
            "protocol": "helios",
            "n": params.n,
            "trustees": params.trustees,
            "t": params.t,
            "d": params.d,
            "seed": seed,
            "choices": list(choices),
            "faults": faults.to_obj(),
            "overlay": ov.to_obj(),
        },
    )
    sim.roles.voters = frozenset(range(params.n))
    sim.roles.assign(ROLE_HUB, {params.hub}, "configured", ())
    sim.roles.assign(
        ROLE_TRUSTEE, set(params.trustee_ids), "configured",
        (ARTIFACT_PUBKEY, ARTIFACT_TALLY),
    )
    voters = [HeliosVoter(pid, params, choices[pid], group) for pid in range(params.n)]
    hub = HeliosHub(params, pk, group)
    trustees = [
        HeliosTrustee(tid, params, shares[i], group)
        for i, tid in enumerate(params.trustee_ids)
    ]
    for peer in voters + [hub] + trustees:
        sim.add_peer(peer)
    trace = sim.run_until_quiescent(max_ticks)
    tallies = {v.pid: v.tally for v in voters}
    live = [pid for pid in range(params.n) if pid not in faults.crashed]
    completion = sum(1 for pid in live if tallies[pid] is not None) / max(len(live), 1)
    outcome = HeliosOutcome(
        tallies=tallies,
        completion=completion,
        accepted=hub.accepted if hub.tally is not None else None,
        verification_failures={v.pid for v in voters if v.verify_failed},
        roles=sim.roles,
    )
    return outcome, trace


# -- full-mesh additive secret sharing ---------------------------------------


@dataclass
class MeshOutcome:
    tallies: dict[int, tuple[int, ...] | None]
    completion: float
    roles: simnet.RoleLog

    def to_obj(self) -> dict:
        return {
            "protocol": "mesh",
            "completion": self.completion,
            "tallies": {
                str(p): (list(t) if t is not None else None)
                for p, t in sorted(self.tallies.items())
            },
            "roles": self.roles.to_obj(),
        }


class MeshVoter(Peer):
    def __init__(self, pid: int, n: int, d: int, choice: int):
        super().__init__(pid)
        self.n = n
        self.d = d
        self.choice = choice
        self.own_share: tuple[int, ...] | None = None
        self.received: dict[int, tuple[int, ...]] = {}
        self.column: tuple[int, ...] | None = None
        self.colsums: dict[int, tuple[int, ...]] = {}
        self.tally: tuple[int, ...] | None = None

    def on_start(self, ctx):
        q = MESH_MODULUS
        ctx.log_action(PHASE_CASTING, "cast")
        unit = [1 if j == self.choice else 0 for j in range(self.d)]
        acc = [0] * self.d
        for peer in range(self.n):
            if peer == self.pid:
                continue
            share = tuple(ctx.rng.randrange(q) for _ in range(self.d))
            acc = [(a + s) % q for a, s in zip(acc, share)]
            ctx.send(peer, {"t": "share", "v": list(share)}, PHASE_CASTING)
        # The balancing share stays with the voter, so every share that
        # leaves the machine is an independent uniform vector.
        self.own_share = tuple((u - a) % q for u, a in zip(unit, acc))
        self.received[self.pid] = self.own_share
        self._maybe_column(ctx)

    def on_message(self, ctx, sender, msg):
        kind = msg.get("t")
        if kind == "share" and sender not in self.received:
            self.received[sender] = tuple(int(x) % MESH_MODULUS for x in msg["v"])
            self._maybe_column(ctx)
        elif kind == "colsum" and sender not in self.colsums:
            self.colsums[sender] = tuple(int(x) % MESH_MODULUS for x in msg["v"])
            self._maybe_total(ctx)

    def _maybe_column(self, ctx):
        if len(self.received) < self.n:
            return
        q = MESH_MODULUS
        col = [0] * self.d
        for sender in sorted(self.received):
            col = [(a + s) % q for a, s in zip(col, self.received[sender])]
        self.column = tuple(col)
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        for peer in range(self.n):
            if peer != self.pid:
                ctx.send(peer, {"t": "colsum", "v": list(col)}, PHASE_AGGREGATION)
        self.colsums[self.pid] = self.column
        self._maybe_total(ctx)

    def _maybe_total(self, ctx):
        if self.tally is not None or len(self.colsums) < self.n:
            return
        q = MESH_MODULUS
        total = [0] * self.d
        for sender in sorted(self.colsums):
            total = [(a + s) % q for a, s in zip(total, self.colsums[sender])]
        self.tally = tuple(total)
        ctx.log_action(PHASE_EVALUATION, "evaluate")
        ctx.finish()


def run_mesh_share(n: int, d: int, choices: list[int], seed: int,
                   faults: FaultModel | None = None,
                   max_ticks: int = 1_000_000) -> tuple[MeshOutcome, Trace]:
    """Additive-sharing baseline; exactly 2n(n-1) messages, no robustness."""
    if n < 2:
        raise simnet.ConfigError("mesh baseline needs n >= 2")
    if d < 2:
        raise simnet.ConfigError("d must be >= 2")
    if len(choices) != n:
        raise simnet.ConfigError(f"need {n} choices, got {len(choices)}")
    if any(not 0 <= c < d for c in choices):
        raise simnet.ConfigError("choice out of range")
    faults = faults or FaultModel()
    # The baseline talks peer-to-peer over the complete graph.
    links = tuple((a, b) for a in range(n) for b in range(a + 1, n))
    ov = Overlay(GOSSIP_MESH, n, (tuple(range(n)),), links, {"degree": n - 1})
    sim = simnet.Simulator(
        faults,
        seed,
        params={
            "protocol": "mesh",
            "n": n,
            "d": d,
            "seed": seed,
            "choices": list(choices),
            "faults": faults.to_obj(),
            "overlay": ov.to_obj(),
        },
    )
    sim.roles.voters = frozenset(range(n))
    voters = [MeshVoter(pid, n, d, choices[pid]) for pid in range(n)]
    for v in voters:
        sim.add_peer(v)
    trace = sim.run_until_quiescent(max_ticks)
    tallies = {v.pid: v.tally for v in voters}
    live = [pid for pid in range(n) if pid not in faults.crashed]
    completion = sum(1 for pid in live if tallies[pid] is not None) / max(len(live), 1)
    return MeshOutcome(tallies, completion, sim.roles), trace
