"""Decentralised polling over a ring of clusters.

Casting: every voter splits its ballot into 2k+1 share vectors and sends
one to each of its recipients in the succeeding cluster. Aggregation:
recipients sum their received shares, exchange local sums within the
cluster to obtain the preceding cluster's tally, then push their growing
map of cluster tallies around the ring, one round per hop. Evaluation:
once a peer holds every cluster tally it decodes the election result
locally. No cryptography is involved anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import simnet
from .ballot import (
    DpolParams,
    InconsistentAggregate,
    ShareSet,
    audit_share_set,
    decode_tally,
    encode_shares,
    unit_vector,
    vector_sum,
    AUDIT_INVALID,
)
from .overlay import RecipientMap, assign_recipients, build_ring_clusters
from .simnet import (
    FaultModel,
    Peer,
    PHASE_AGGREGATION,
    PHASE_CASTING,
    PHASE_EVALUATION,
    Trace,
    register_behavior,
    SendMutator,
    SilentPeer,
)
from . import wire

BEHAVIOR_INVALID_SHARES = "dpol:invalid-shares"
BEHAVIOR_LYING_SUM = "dpol:lying-sum"
BEHAVIOR_SILENT = "dpol:silent"


def cluster_tally(local_sums: list[tuple[int, ...] | None], d: int) -> tuple[int, ...] | None:
    """Component-wise sum of one cluster's local sums.

    Equals the sum of every share the preceding cluster sent. Returns None
    (incomplete) when any member's sum is missing.
    """
    if not local_sums or any(s is None for s in local_sums):
        return None
    return vector_sum(local_sums, d)


@dataclass
class DpolOutcome:
    tallies: dict[int, tuple[int, ...] | None]
    flagged: set[int]
    completion: float
    inconsistent: set[int]
    roles: simnet.RoleLog
    audited: bool

    def to_obj(self) -> dict:
        return {
            "protocol": "dpol",
            "completion": self.completion,
            "tallies": {
                str(p): (list(t) if t is not None else None)
                for p, t in sorted(self.tallies.items())
            },
            "flagged": sorted(self.flagged),
            "inconsistent": sorted(self.inconsistent),
            "audited": self.audited,
            "roles": self.roles.to_obj(),
        }


class DpolVoter(Peer):
    def __init__(self, pid: int, params: DpolParams, overlay, rmap: RecipientMap,
                 choice: int, run_seed: int):
        super().__init__(pid)
        self.params = params
        self.choice = choice
        self.run_seed = run_seed
        self.cluster = overlay.cluster_of(pid)
        self.cluster_members = overlay.members(self.cluster)
        self.pred_cluster = overlay.predecessor(self.cluster)
        self.recipients = rmap.recipients[pid]
        self.expected_senders = frozenset(rmap.senders[pid])
        self.rounds_total = int(math.isqrt(params.n)) - 1
        self.shares_by_sender: dict[int, tuple[int, ...]] = {}
        self.local_sum: tuple[int, ...] | None = None
        self.sums_by_member: dict[int, tuple[int, ...]] = {}
        self.known: dict[int, tuple[int, ...]] = {}
        self.poisoned: set[int] = set()
        self.round_maps: dict[int, dict[int, dict]] = {}
        self.rounds_done: set[int] = set()
        self.tally: tuple[int, ...] | None = None
        self.decode_failed = False
        self.done = False

    # -- casting --------------------------------------------------------

    def on_start(self, ctx):
        ctx.log_action(PHASE_CASTING, "cast")
        share_set: ShareSet = encode_shares(
            self.choice, self.params, self.run_seed, owner=self.pid
        )
        for share, recipient in zip(share_set.shares, self.recipients):
            ctx.send(recipient, {"t": "share", "v": list(share)}, PHASE_CASTING)

    # -- aggregation ------------------------------------------------------

    def on_message(self, ctx, sender, msg):
        if self.done:
            return
        kind = msg.get("t")
        if kind == "share":
            if sender in self.expected_senders and sender not in self.shares_by_sender:
                self.shares_by_sender[sender] = tuple(msg["v"])
                if len(self.shares_by_sender) == self.params.shares_per_voter:
                    self._compute_local_sum(ctx)
        elif kind == "sum":
            if sender in self.cluster_members and sender not in self.sums_by_member:
                self.sums_by_member[sender] = tuple(msg["v"])
                self._maybe_cluster_tally(ctx)
        elif kind == "map":
            r = int(msg["r"])
            if sender in self.expected_senders and 0 <= r < self.rounds_total:
                per_round = self.round_maps.setdefault(r, {})
                if sender not in per_round:
                    per_round[sender] = {int(ci): tuple(v) for ci, v in msg["m"].items()}
                    self._maybe_process_rounds(ctx)

    def _compute_local_sum(self, ctx):
        self.local_sum = vector_sum(
            [self.shares_by_sender[s] for s in sorted(self.shares_by_sender)],
            self.params.d,
        )
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        self.sums_by_member[self.pid] = self.local_sum
        for member in self.cluster_members:
            if member != self.pid:
                ctx.send(member, {"t": "sum", "v": list(self.local_sum)}, PHASE_AGGREGATION)
        self._maybe_cluster_tally(ctx)

    def _maybe_cluster_tally(self, ctx):
        if self.local_sum is None or len(self.sums_by_member) < len(self.cluster_members):
            return
        if self.pred_cluster in self.known:
            return
        tally = cluster_tally(
            [self.sums_by_member[m] for m in sorted(self.sums_by_member)],
            self.params.d,
        )
        self.known[self.pred_cluster] = tally
        ctx.log_action(PHASE_AGGREGATION, "aggregate")
        self._send_map(ctx, 0)
        self._maybe_process_rounds(ctx)

    def _send_map(self, ctx, r: int):
        payload = {
            "t": "map",
            "r": r,
            "m": {str(ci): list(v) for ci, v in sorted(self.known.items())},
        }
        for recipient in self.recipients:
            ctx.send(recipient, payload, PHASE_AGGREGATION)

    def _maybe_process_rounds(self, ctx):
        if self.pred_cluster not in self.known:
            return
        # Rounds are processed in order so the forwarded map grows
        # monotonically hop by hop.
        while True:
            r = len(self.rounds_done)
            if r >= self.rounds_total:
                break
            per_round = self.round_maps.get(r, {})
            if len(per_round) < self.params.shares_per_voter:
                return
            self._merge_round(ctx, per_round)
            self.rounds_done.add(r)
            if r + 1 < self.rounds_total:
                self._send_map(ctx, r + 1)
        self._finalize(ctx)

    def _merge_round(self, ctx, per_round: dict[int, dict]):
        majority = self.params.k + 1
        indices = sorted({ci for m in per_round.values() for ci in m})
        for ci in indices:
            votes: dict[tuple[int, ...], int] = {}
            for m in per_round.values():
                if ci in m:
                    votes[m[ci]] = votes.get(m[ci], 0) + 1
            if len(votes) > 1:
                # Conflicting copies of the same cluster tally: on record
                # even when the majority rule still settles the value.
                ctx.log_action(
                    PHASE_AGGREGATION, "map-conflict", detail={"cluster": ci}
                )
            winner = None
            for value, count in votes.items():
                if count >= majority:
                    winner = value
            if winner is None:
                if sum(votes.values()) < majority:
                    continue  # minority fabrication; honest copies never split so thin
                # Enough copies but no strict majority: this cluster index
                # can never be trusted; the peer ends incomplete.
                self.poisoned.add(ci)
                ctx.log_action(
                    PHASE_AGGREGATION, "tally-divergence", detail={"cluster": ci}
                )
                continue
            if ci in self.known:
                if self.known[ci] != winner:
                    ctx.log_action(
                        PHASE_AGGREGATION, "tally-discrepancy", detail={"cluster": ci}
                    )
            else:
                self.known[ci] = winner

    # -- evaluation -------------------------------------------------------

    def _finalize(self, ctx):
        if self.done:
            return
        self.done = True
        clusters = int(math.isqrt(self.params.n))
        ctx.log_action(PHASE_EVALUATION, "evaluate")
        if len(self.known) == clusters and not self.poisoned:
            total = vector_sum(
                [self.known[ci] for ci in sorted(self.known)], self.params.d
            )
            try:
                self.tally = decode_tally(total, self.params)
            except InconsistentAggregate:
                self.decode_failed = True
                ctx.log_action(PHASE_EVALUATION, "tally-inconsistent")
        else:
            self.decode_failed = True
            ctx.log_action(PHASE_EVALUATION, "tally-inconsistent")
        ctx.finish()


def _mutate_invalid_shares(msg: dict) -> dict:
    if msg.get("t") == "share":
        d = len(msg["v"])
        return {"t": "share", "v": list(unit_vector(0, d))}
    return msg


def _mutate_lying_sum(msg: dict) -> dict:
    """Lying aggregator: inflates option 0 in its local sum and in every
    cluster tally it forwards around the ring."""
    if msg.get("t") == "sum":
        v = list(msg["v"])
        v[0] += 1
        return {"t": "sum", "v": v}
    if msg.get("t") == "map":
        lied = {}
        for ci, v in msg["m"].items():
            v = list(v)
            v[0] += 1
            lied[ci] = v
        return {**msg, "m": lied}
    return msg


register_behavior(BEHAVIOR_INVALID_SHARES, lambda inner: SendMutator(inner, _mutate_invalid_shares))
register_behavior(BEHAVIOR_LYING_SUM, lambda inner: SendMutator(inner, _mutate_lying_sum))
register_behavior(BEHAVIOR_SILENT, SilentPeer)


def run_dpol(params: DpolParams, choices: list[int], faults: FaultModel, seed: int,
             audit: bool = False, max_ticks: int = 1_000_000) -> tuple[DpolOutcome, Trace]:
    """Run one complete DPol election on the simulator.

    Incomplete runs (losses, crashes, byzantine stalls) report
    completion < 1 instead of failing. With audit=True, each sender's
    delivered share multiset is pooled after the run and checked against
    the honest pattern; flagged peers are returned in the outcome.
    """
    params.validate_ring()
    if len(choices) != params.n:
        raise simnet.ConfigError(f"need {params.n} choices, got {len(choices)}")
    if any(not 0 <= c < params.d for c in choices):
        raise simnet.ConfigError("choice out of range")
    ov = build_ring_clusters(params.n, wire.derive_seed(seed, "overlay"))
    rmap = assign_recipients(ov, params.k, wire.derive_seed(seed, "recipients"))
    sim = simnet.Simulator(
        faults,
        seed,
        params={
            "protocol": "dpol",
            "n": params.n,
            "k": params.k,
            "d": params.d,
            "seed": seed,
            "audit": audit,
            "choices": list(choices),
            "faults": faults.to_obj(),
            "overlay": ov.to_obj(),
        },
    )
    sim.roles.voters = frozenset(range(params.n))
    voters = [
        DpolVoter(pid, params, ov, rmap, choices[pid], seed) for pid in range(params.n)
    ]
    for v in voters:
        sim.add_peer(v)
    trace = sim.run_until_quiescent(max_ticks)

    tallies: dict[int, tuple[int, ...] | None] = {v.pid: v.tally for v in voters}
    inconsistent = {v.pid for v in voters if v.decode_failed}
    flagged: set[int] = set()
    if audit:
        flagged = _pooled_audit(params, rmap, voters)
    live = [pid for pid in range(params.n) if pid not in faults.crashed]
    completion = sum(1 for pid in live if tallies[pid] is not None) / max(len(live), 1)
    outcome = DpolOutcome(
        tallies=tallies,
        flagged=flagged,
        completion=completion,
        inconsistent=inconsistent,
        roles=sim.roles,
        audited=audit,
    )
    return outcome, trace


def _pooled_audit(params: DpolParams, rmap: RecipientMap,
                  voters: list[DpolVoter]) -> set[int]:
    """Forensic audit: pool every sender's delivered shares and check them.

    Pooling reveals the sender's ballot, so this runs only when the
    scenario explicitly asks for it. Senders with missing copies are
    inconclusive, never flagged.
    """
    by_pid = {v.pid: v for v in voters}
    flagged = set()
    for sender in sorted(rmap.recipients):
        pooled = []
        for recipient in rmap.recipients[sender]:
            share = by_pid[recipient].shares_by_sender.get(sender)
            if share is not None:
                pooled.append(share)
        if audit_share_set(pooled, params) == AUDIT_INVALID:
            flagged.add(sender)
    return flagged
