"""Scalable and secure aggregation over a binary tree of clusters.

Key setup: the root cluster jointly generates a threshold keypair and the
public key travels down the tree. Casting: every voter encrypts its
unit-vector ballot, attaches a validity proof and shares it with its own
cluster. Aggregation: cluster members verify proofs, homomorphically add
the valid ballots and push subtree aggregates upward, resolving diverging
copies by majority. Evaluation: the lowest t root members publish
decryption shares, every root member combines them, and the plaintext
tally travels back down. Verification: every voter checks that the tally
components sum to the number of accepted ballots.
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
    verify_ballot,
)
from .crypto.elgamal import poly_eval
from .crypto.group import DEFAULT_GROUP, Group
from .crypto.proofs import BallotProof
from .overlay import Overlay, build_tree_clusters
from .simnet import (
    FaultModel,
    Peer,
    PHASE_AGGREGATION,
    PHASE_CASTING,
    PHASE_EVALUATION,
    PHASE_REGISTRATION,
    PHASE_VERIFICATION,
    SendMutator,
    SilentPeer,
    Trace,
    register_behavior,
)

BEHAVIOR_LYING_AGGREGATE = "spp:lying-aggregate"
BEHAVIOR_INVALID_PROOF = "spp:invalid-proof"
BEHAVIOR_SILENT_ROOT = "spp:silent-root"

ROLE_KEY_HOLDER = "key-share-holder"
ARTIFACT_PUBKEY = "threshold-public-key"
ARTIFACT_TALLY = "threshold-tally"


@dataclass(frozen=True)
class SppParams:
    n: int
    cluster_size: int
    t: int
    d: int

    def validate(self) -> None:
        if self.cluster_size < 2:
            raise simnet.ConfigError("cluster_size must be >= 2")
        if self.n < self.cluster_size or self.n % self.cluster_size != 0:
            raise simnet.ConfigError("n must be a positive multiple of cluster_size")
        if not 1 <= self.t <= self.cluster_size:
            raise simnet.ConfigError("need 1 <= t <= cluster_size")
        if self.d < 2:
            raise simnet.ConfigError("d must be >= 2")


@dataclass(frozen=True)
class AggregateReport:
    """One member's claim about a subtree aggregate; compared byte-for-byte."""

    subtree: int
    cts: tuple[Ciphertext, ...]
    count: int
    reporter: int

    def serialize(self) -> bytes:
        body = b"".join(ct.serialize() for ct in self.cts)
        return body + wire.ser_ints(self.subtree, self.count)


def resolve_divergence(reports: list[AggregateReport]) -> tuple[tuple[Ciphertext, ...], int] | None:
    """Majority rule over byte-identical aggregate reports.

    Returns the winning (ciphertexts, count) or None when no strict
    majority exists (the subtree is then incomplete).
    """
    if not reports:
        raise ValueError("resolve_divergence needs at least one report")
    votes: dict[bytes, int] = {}
    values: dict[bytes, tuple[tuple[Ciphertext, ...], int]] = {}
    for r in reports:
        key = r.serialize()
        votes[key] = votes.get(key, 0) + 1
        values.setdefault(key, (r.cts, r.count))
    for key, count in votes.items():
        if count * 2 > len(reports):
            return values[key]
    return None


def root_decrypt(aggregate: list[Ciphertext], shares: list[KeyShare],
                 pk: PublicKey, bound: int) -> tuple[int, ...]:
    """Threshold-decrypt a component-wise aggregate into per-option counts."""
    counts = []
    for ct in aggregate:
        dec = [partial_decrypt(s, ct) for s in shares]
        counts.append(combine(pk, dec, ct, bound))
    return tuple(counts)


@dataclass
class SppOutcome:
    tallies: dict[int, tuple[int, ...] | None]
    completion: float
    accepted: int | None
    roles: simnet.RoleLog

    def to_obj(self) -> dict:
        return {
            "protocol": "spp",
            "completion": self.completion,
            "accepted": self.accepted,
            "tallies": {
                str(p): (list(t) if t is not None else None)
                for p, t in sorted(self.tallies.items())
            },
            "roles": self.roles.to_obj(),
        }


class SppVoter(Peer):
    def __init__(self, pid: int, params: SppParams, ov: Overlay, choice: int,
                 run_seed: int, group: Group = DEFAULT_GROUP):
        super().__init__(pid)
        self.params = params
        self.group = group
        self.choice = choice
        self.run_seed = run_seed
        self.cluster = ov.cluster_of(pid)
        self.members = ov.members(self.cluster)
        self.rank = self.members.index(pid)
        self.is_root = self.cluster == 0
        parent = ov.parent(self.cluster) if not self.is_root else None
        self.parent_members = ov.members(parent) if parent is not None else ()
        self.children = ov.children(self.cluster)
        self.child_members = {c: ov.members(c) for c in self.children}
        c = params.cluster_size
        self.majority = c // 2 + 1
        # DKG state (root only)
        self.poly: list[int] = []
        self.dkg_shares: dict[int, int] = {}
        self.dkg_commits: dict[int, int] = {}
        self.key_share: KeyShare | None = None
        # protocol state
        self.pk: PublicKey | None = None
        self.pk_votes: dict[int, set[int]] = {}
        self.cast_done = False
        self.ballots: dict[int, tuple[list[Ciphertext], BallotProof]] = {}
        self.cluster_agg: list[Ciphertext] | None = None
        self.cluster_accepted = 0
        self.reports: dict[int, dict[int, AggregateReport]] = {c: {} for c in self.children}
        self.resolved: dict[int, tuple[tuple[Ciphertext, ...], int]] = {}
        self.stalled_subtrees: set[int] = set()
        self.subtree_agg: list[Ciphertext] | None = None
        self.subtree_count: int | None = None
        self.pending_decshares: list[tuple[int, list[int], str]] = []
        self.dec_shares: dict[int, list[int]] = {}
        self.result_votes: dict[tuple, set[int]] = {}
        self.tally: tuple[int, ...] | None = None
        self.accepted: int | None = None
        self.verified = False
        self.done = False

    # -- key setup --------------------------------------------------------

    def on_start(self, ctx):
        if not self.is_root:
            return
        rng = ctx.rng
        self.poly = [self.group.rand_scalar(rng) for _ in range(self.params.t)]
        ctx.log_action(PHASE_REGISTRATION, "dkg-deal")
        commit = self.group.exp(self.group.g, self.poly[0])
        for member in self.members:
            share = poly_eval(self.poly, self.members.index(member) + 1, self.group.q)
            if member == self.pid:
                self._dkg_receive(ctx, self.pid, share, commit)
            else:
                ctx.send(member, {"t": "dkg-share", "v": share}, PHASE_REGISTRATION)
                ctx.send(member, {"t": "dkg-commit", "v": commit}, PHASE_REGISTRATION)

    def _dkg_receive(self, ctx, dealer: int, share: int | None, commit: int | None):
        if share is not None:
            self.dkg_shares.setdefault(dealer, share)
        if commit is not None:
            self.dkg_commits.setdefault(dealer, commit)
        c = self.params.cluster_size
        if self.key_share is None and len(self.dkg_shares) == c and len(self.dkg_commits) == c:
            value = sum(self.dkg_shares[m] for m in sorted(self.dkg_shares)) % self.group.q
            self.key_share = KeyShare(self.pid, self.rank + 1, value)
            h = 1
            for m in sorted(self.dkg_commits):
                h = self.group.mul(h, self.dkg_commits[m])
            self.pk = PublicKey(self.group, h, t=self.params.t, n_holders=c)
            ctx.log_action(PHASE_REGISTRATION, "dkg-complete")
            self._spread_pubkey(ctx)
            self._cast(ctx)

    def _spread_pubkey(self, ctx):
        for child in self.children:
            for member in self.child_members[child]:
                ctx.send(member, {"t": "pubkey", "h": self.pk.h}, PHASE_REGISTRATION)

    def _adopt_pubkey(self, ctx, sender: int, h: int):
        if self.pk is not None or sender not in self.parent_members:
            return
        voters = self.pk_votes.setdefault(h, set())
        voters.add(sender)
        if len(voters) >= self.majority:
            self.pk = PublicKey(
                self.group, h, t=self.params.t, n_holders=self.params.cluster_size
            )
            self._spread_pubkey(ctx)
            self._cast(ctx)

    # -- casting ----------------------------------------------------------

    def _cast(self, ctx):
        if self.cast_done:
            return
        self.cast_done = True
        ctx.log_action(PHASE_CASTING, "cast", consumes=(ARTIFACT_PUBKEY,))
        cts, proof = prove_ballot(self.pk, self.choice, self.params.d, ctx.rng)
        payload = {
            "t": "ballot",
            "cts": [[c.a, c.b] for c in cts],
            "proof": proof.to_obj(),
        }
        self.ballots[self.pid] = (cts, proof)
        for member in self.members:
            if member != self.pid:
                ctx.send(member, payload, PHASE_CASTING)
        self._maybe_aggregate(ctx)

    # -- aggregation --------------------------------------------------------

    def on_message(self, ctx, sender, msg):
        if self.done:
            return
        kind = msg.get("t")
        if kind == "dkg-share" and self.is_root and sender in self.members:
            self._dkg_receive(ctx, sender, int(msg["v"]), None)
        elif kind == "dkg-commit" and self.is_root and sender in self.members:
            self._dkg_receive(ctx, sender, None, int(msg["v"]))
        elif kind == "pubkey":
            self._adopt_pubkey(ctx, sender, int(msg["h"]))
        elif kind == "ballot":
            if sender in self.members and sender not in self.ballots:
                cts = [Ciphertext(self.group, int(a), int(b)) for a, b in msg["cts"]]
                self.ballots[sender] = (cts, BallotProof.from_obj(msg["proof"]))
                self._maybe_aggregate(ctx)
        elif kind == "report":
            subtree = int(msg["subtree"])
            if subtree in self.reports and sender in self.child_members.get(subtree, ()):
                if sender not in self.reports[subtree]:
                    cts = tuple(
                        Ciphertext(self.group, int(a), int(b)) for a, b in msg["cts"]
                    )
                    self.reports[subtree][sender] = AggregateReport(
                        subtree, cts, int(msg["count"]), sender
                    )
                    self._maybe_resolve(ctx, subtree)
        elif kind == "decshare":
            if self.is_root and sender in self.members:
                self._collect_decshare(ctx, int(msg["idx"]), msg["v"], str(msg["agg"]))
        elif kind == "result":
            self._adopt_result(ctx, sender, tuple(int(x) for x in msg["tally"]), int(msg["count"]))

    def _maybe_aggregate(self, ctx):
        if self.cluster_agg is not None or self.pk is None:
            return
        if len(self.ballots) < self.params.cluster_size:
            return
        valid = []
        for member in self.members:
            cts, proof = self.ballots[member]
            if len(cts) == self.params.d and verify_ballot(self.pk, cts, proof):
                valid.append(cts)
        agg = [encrypt_zero(self.pk) for _ in range(self.params.d)]
        for cts in valid:
            agg = [hom_add(a, c) for a, c in zip(agg, cts)]
        self.cluster_agg = agg
        self.cluster_accepted = len(valid)
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        self._maybe_send_up(ctx)

    def _maybe_resolve(self, ctx, subtree: int):
        if subtree in self.resolved or subtree in self.stalled_subtrees:
            return
        got = self.reports[subtree]
        if len(got) < self.params.cluster_size:
            return
        winner = resolve_divergence([got[s] for s in sorted(got)])
        if winner is None:
            self.stalled_subtrees.add(subtree)
            ctx.log_action(PHASE_AGGREGATION, "divergence-unresolved",
                           detail={"subtree": subtree})
            return
        self.resolved[subtree] = winner
        self._maybe_send_up(ctx)

    def _maybe_send_up(self, ctx):
        if self.subtree_agg is not None or self.cluster_agg is None:
            return
        if len(self.resolved) < len(self.children):
            return
        agg = list(self.cluster_agg)
        count = self.cluster_accepted
        for child in self.children:
            cts, child_count = self.resolved[child]
            agg = [hom_add(a, c) for a, c in zip(agg, cts)]
            count += child_count
        self.subtree_agg = agg
        self.subtree_count = count
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        if self.is_root:
            self._start_decryption(ctx)
            for idx, values, digest in self.pending_decshares:
                self._collect_decshare(ctx, idx, values, digest)
            self.pending_decshares.clear()
        else:
            payload = {
                "t": "report",
                "subtree": self.cluster,
                "cts": [[c.a, c.b] for c in agg],
                "count": count,
            }
            for member in self.parent_members:
                ctx.send(member, payload, PHASE_AGGREGATION)

    # -- evaluation -----------------------------------------------------------

    def _agg_digest(self) -> str:
        return wire.digest(b"".join(c.serialize() for c in self.subtree_agg))

    def _start_decryption(self, ctx):
        decrypters = sorted(self.members)[: self.params.t]
        if self.pid not in decrypters:
            return
        ctx.log_action(PHASE_EVALUATION, "partial-decrypt")
        values = [partial_decrypt(self.key_share, ct).value for ct in self.subtree_agg]
        payload = {
            "t": "decshare",
            "idx": self.key_share.index,
            "v": values,
            "agg": self._agg_digest(),
        }
        for member in self.members:
            if member == self.pid:
                self._collect_decshare(ctx, self.key_share.index, values, payload["agg"])
            else:
                ctx.send(member, payload, PHASE_EVALUATION)

    def _collect_decshare(self, ctx, idx: int, values: list[int], agg_digest: str):
        if self.tally is not None:
            return
        if self.subtree_agg is None:
            self.pending_decshares.append((idx, list(values), agg_digest))
            return
        if agg_digest != self._agg_digest():
            return  # share computed against a different aggregate
        if idx not in self.dec_shares:
            self.dec_shares[idx] = [int(v) for v in values]
        if len(self.dec_shares) < self.params.t:
            return
        counts = []
        try:
            for comp, ct in enumerate(self.subtree_agg):
                shares = [
                    DecryptionShare(i, vals[comp])
                    for i, vals in sorted(self.dec_shares.items())
                ]
                counts.append(combine(self.pk, shares, ct, self.params.n))
        except Exception:
            return  # inconsistent shares: stay incomplete
        self.tally = tuple(counts)
        self.accepted = self.subtree_count
        ctx.log_action(PHASE_EVALUATION, "evaluate")
        self._spread_result(ctx)
        self._verify(ctx)

    def _spread_result(self, ctx):
        payload = {"t": "result", "tally": list(self.tally), "count": self.accepted}
        for child in self.children:
            for member in self.child_members[child]:
                ctx.send(member, payload, PHASE_EVALUATION)

    def _adopt_result(self, ctx, sender: int, tally: tuple[int, ...], count: int):
        if self.tally is not None or sender not in self.parent_members:
            return
        key = (tally, count)
        voters = self.result_votes.setdefault(key, set())
        voters.add(sender)
        if len(voters) >= self.majority:
            self.tally = tally
            self.accepted = count
            ctx.log_action(PHASE_EVALUATION, "evaluate", consumes=(ARTIFACT_TALLY,))
            self._spread_result(ctx)
            self._verify(ctx)

    # -- verification -----------------------------------------------------

    def _verify(self, ctx):
        ctx.log_action(PHASE_VERIFICATION, "verify", consumes=(ARTIFACT_TALLY,))
        self.verified = sum(self.tally) == self.accepted
        if not self.verified:
            ctx.log_action(PHASE_VERIFICATION, "verify-failed")
            self.tally = None
        self.done = True
        ctx.finish()


def _mutate_report(msg: dict) -> dict:
    if msg.get("t") == "report":
        group = DEFAULT_GROUP
        cts = [list(pair) for pair in msg["cts"]]
        cts[0][1] = group.mul(int(cts[0][1]), group.g)
        return {**msg, "cts": cts}
    return msg


def _mutate_proof(msg: dict) -> dict:
    if msg.get("t") == "ballot":
        proof = {
            "comp": [list(c) for c in msg["proof"]["comp"]],
            "sum": list(msg["proof"]["sum"]),
        }
        proof["sum"][2] = int(proof["sum"][2]) + 1
        return {**msg, "proof": proof}
    return msg


register_behavior(BEHAVIOR_LYING_AGGREGATE, lambda inner: SendMutator(inner, _mutate_report))
register_behavior(BEHAVIOR_INVALID_PROOF, lambda inner: SendMutator(inner, _mutate_proof))
register_behavior(
    BEHAVIOR_SILENT_ROOT,
    lambda inner: SilentPeer(inner) if getattr(inner, "is_root", False) else inner,
)


def run_spp(params: SppParams, choices: list[int], faults: FaultModel, seed: int,
            group: Group = DEFAULT_GROUP,
            max_ticks: int = 1_000_000) -> tuple[SppOutcome, Trace]:
    """Run one SPP election; fewer than t live root members means the run
    ends incomplete rather than failing."""
    params.validate()
    if len(choices) != params.n:
        raise simnet.ConfigError(f"need {params.n} choices, got {len(choices)}")
    if any(not 0 <= c < params.d for c in choices):
        raise simnet.ConfigError("choice out of range")
    ov = build_tree_clusters(params.n, params.cluster_size, wire.derive_seed(seed, "overlay"))
    sim = simnet.Simulator(
        faults,
        seed,
        params={
            "protocol": "spp",
            "n": params.n,
            "cluster_size": params.cluster_size,
            "t": params.t,
            "d": params.d,
            "seed": seed,
            "choices": list(choices),
            "faults": faults.to_obj(),
            "overlay": ov.to_obj(),
        },
    )
    sim.roles.voters = frozenset(range(params.n))
    sim.roles.assign(
        ROLE_KEY_HOLDER, set(ov.members(0)), "runtime",
        (ARTIFACT_PUBKEY, ARTIFACT_TALLY),
    )
    voters = [SppVoter(pid, params, ov, choices[pid], seed, group) for pid in range(params.n)]
    for v in voters:
        sim.add_peer(v)
    trace = sim.run_until_quiescent(max_ticks)
    tallies = {v.pid: (v.tally if v.verified else None) for v in voters}
    accepted = next((v.accepted for v in voters if v.verified), None)
    live = [pid for pid in range(params.n) if pid not in faults.crashed]
    completion = sum(1 for pid in live if tallies[pid] is not None) / max(len(live), 1)
    return SppOutcome(tallies, completion, accepted, sim.roles), trace
