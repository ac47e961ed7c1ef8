"""Bulletin-board voting on a toy blockchain.

Registration hands every voter a blind-signature eligibility token. Cast
transactions spend the token on a choice and flood over the gossip mesh.
Any peer may gather pending transactions into a block: a simplified
proof-of-work (D leading zero bits) is ground out eagerly and the attempt
count doubles as the mining delay, so block races come out of the seeded
simulation rather than a schedule. Validators accept the longest chain
(ties to the lowest tip hash), reject double spends, and every peer
tallies and re-verifies its own copy of the chain once nothing is left to
mine.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from . import simnet, wire
from .crypto.blindsig import (
    IssuerKey,
    IssuerPublicKey,
    Token,
    blind,
    generate_issuer_key,
    random_blinding,
    random_serial,
    sign_blinded,
    unblind,
    verify_token,
)
from .overlay import build_gossip_mesh
from .simnet import (
    FaultModel,
    Peer,
    PHASE_AGGREGATION,
    PHASE_CASTING,
    PHASE_EVALUATION,
    PHASE_REGISTRATION,
    PHASE_VERIFICATION,
    SendSuppressor,
    SilentPeer,
    Trace,
    register_behavior,
)

BEHAVIOR_DOUBLE_SPEND = "chain:double-spend"
BEHAVIOR_WITHHOLD = "chain:withhold-block"
BEHAVIOR_SILENT = "chain:silent"

GENESIS_PARENT = "0" * 64


class ChainError(Exception):
    pass


class IssuanceRefused(Exception):
    pass


@dataclass(frozen=True)
class ChainParams:
    n: int
    d: int
    degree: int = 4
    difficulty: int = 8
    block_capacity: int = 64
    cutoff_height: int | None = None
    issuer_bits: int = 768

    def validate(self) -> None:
        if self.n < 2:
            raise simnet.ConfigError("n must be >= 2")
        if self.d < 2:
            raise simnet.ConfigError("d must be >= 2")
        if not 2 <= self.degree < self.n:
            raise simnet.ConfigError("need 2 <= degree < n")
        if not 1 <= self.difficulty <= 24:
            raise simnet.ConfigError("difficulty must be in [1, 24]")
        if self.block_capacity < 1:
            raise simnet.ConfigError("block_capacity must be >= 1")
        if not 512 <= self.issuer_bits <= 4096:
            raise simnet.ConfigError("issuer_bits must be in [512, 4096]")


@dataclass(frozen=True)
class Transaction:
    token: Token
    choice: int
    nonce: str  # 32-byte hex

    def serialize(self) -> bytes:
        return (
            self.token.serialize()
            + wire.ser_ints(self.choice)
            + bytes.fromhex(self.nonce)
        )

    @property
    def txid(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()

    def to_obj(self) -> dict:
        return {"token": self.token.to_obj(), "choice": self.choice, "nonce": self.nonce}

    @classmethod
    def from_obj(cls, obj) -> "Transaction":
        return cls(Token.from_obj(obj["token"]), int(obj["choice"]), str(obj["nonce"]))


@dataclass(frozen=True)
class Block:
    parent: str
    height: int
    txs: tuple[Transaction, ...]
    proposer: int
    work_nonce: int

    def tx_root(self) -> bytes:
        return hashlib.sha256(b"".join(t.serialize() for t in self.txs)).digest()

    def header_bytes(self) -> bytes:
        return (
            bytes.fromhex(self.parent)
            + wire.ser_ints(self.height, self.proposer, self.work_nonce)
            + self.tx_root()
        )

    def block_hash(self) -> str:
        return hashlib.sha256(self.header_bytes()).hexdigest()

    def meets_difficulty(self, bits: int) -> bool:
        return int(self.block_hash(), 16) >> (256 - bits) == 0

    def to_obj(self) -> dict:
        return {
            "parent": self.parent,
            "height": self.height,
            "txs": [t.to_obj() for t in self.txs],
            "proposer": self.proposer,
            "nonce": self.work_nonce,
        }

    @classmethod
    def from_obj(cls, obj) -> "Block":
        return cls(
            str(obj["parent"]),
            int(obj["height"]),
            tuple(Transaction.from_obj(t) for t in obj["txs"]),
            int(obj["proposer"]),
            int(obj["nonce"]),
        )


GENESIS = Block(GENESIS_PARENT, 0, (), 0, 0)
GENESIS_HASH = GENESIS.block_hash()


def mine_block(parent: str, height: int, txs: tuple[Transaction, ...], proposer: int,
               difficulty: int) -> tuple[Block, int]:
    """Grind the work nonce; returns the sealed block and the attempt count."""
    nonce = 0
    while True:
        block = Block(parent, height, txs, proposer, nonce)
        if block.meets_difficulty(difficulty):
            return block, nonce + 1
        nonce += 1


class ChainView:
    """One peer's copy of the block tree plus the longest-chain choice."""

    def __init__(self, issuer_pk: IssuerPublicKey, difficulty: int):
        self.issuer_pk = issuer_pk
        self.difficulty = difficulty
        self.blocks: dict[str, Block] = {GENESIS_HASH: GENESIS}
        self.spent: dict[str, frozenset[str]] = {GENESIS_HASH: frozenset()}
        self.best = GENESIS_HASH
        self.orphans: dict[str, list[Block]] = {}
        self.mempool: dict[str, Transaction] = {}

    @property
    def best_height(self) -> int:
        return self.blocks[self.best].height

    def add_transaction(self, tx: Transaction) -> bool:
        """Admit a transaction to the mempool if its token verifies."""
        if tx.txid in self.mempool or not verify_token(tx.token, self.issuer_pk):
            return False
        self.mempool[tx.txid] = tx
        return True

    def add_block(self, block: Block) -> str:
        """Returns one of "known", "orphan", "invalid", "added"."""
        h = block.block_hash()
        if h in self.blocks:
            return "known"
        if block.parent not in self.blocks:
            self.orphans.setdefault(block.parent, []).append(block)
            return "orphan"
        if not self._valid_against_parent(block):
            return "invalid"
        self.blocks[h] = block
        self.spent[h] = self.spent[block.parent] | {t.token.serial for t in block.txs}
        self._maybe_rebest(h)
        for child in self.orphans.pop(h, []):
            self.add_block(child)
        return "added"

    def _tip_rank(self, h: str) -> int:
        # Lower hash wins ties, so rank by the negated integer value.
        return -int(h, 16)

    def _maybe_rebest(self, h: str) -> None:
        cand = (self.blocks[h].height, self._tip_rank(h))
        cur = (self.best_height, self._tip_rank(self.best))
        if cand > cur:
            self.best = h

    def _valid_against_parent(self, block: Block) -> bool:
        parent = self.blocks[block.parent]
        if block.height != parent.height + 1:
            return False
        if not block.meets_difficulty(self.difficulty):
            return False
        seen = set()
        spent = self.spent[block.parent]
        for tx in block.txs:
            if not verify_token(tx.token, self.issuer_pk):
                return False
            if tx.token.serial in spent or tx.token.serial in seen:
                return False
            seen.add(tx.token.serial)
        return True

    def best_chain(self) -> list[Block]:
        chain = []
        h = self.best
        while True:
            block = self.blocks[h]
            chain.append(block)
            if h == GENESIS_HASH:
                break
            h = block.parent
        chain.reverse()
        return chain

    def pending(self, capacity: int | None = None) -> list[Transaction]:
        """Mempool transactions still spendable against the best chain."""
        spent = set(self.spent[self.best])
        out = []
        for tx in self.mempool.values():
            if tx.token.serial not in spent:
                out.append(tx)
                spent.add(tx.token.serial)
                if capacity is not None and len(out) >= capacity:
                    break
        return out

    def verify_chain(self) -> None:
        """Re-validate the whole best chain; raises ChainError on any defect."""
        spent: set[str] = set()
        prev = None
        for block in self.best_chain():
            if block.block_hash() == GENESIS_HASH:
                prev = block
                continue
            if prev is None or block.parent != prev.block_hash():
                raise ChainError("broken parent link")
            if block.height != prev.height + 1:
                raise ChainError("bad height")
            if not block.meets_difficulty(self.difficulty):
                raise ChainError("insufficient proof of work")
            for tx in block.txs:
                if not verify_token(tx.token, self.issuer_pk):
                    raise ChainError("invalid token in chain")
                if tx.token.serial in spent:
                    raise ChainError("double spend in chain")
                spent.add(tx.token.serial)
            prev = block


def tally_chain(view: ChainView, d: int, cutoff_height: int | None = None) -> tuple[int, ...]:
    """Count first spends per option along the best chain up to the cutoff."""
    view.verify_chain()
    counts = [0] * d
    seen: set[str] = set()
    for block in view.best_chain():
        if cutoff_height is not None and block.height > cutoff_height:
            break
        for tx in block.txs:
            if tx.token.serial not in seen and 0 <= tx.choice < d:
                seen.add(tx.token.serial)
                counts[tx.choice] += 1
    return tuple(counts)


# -- token issuance (registration) ---------------------------------------


@dataclass
class IssuanceTranscript:
    """Everything the issuer sees: blinded requests and blinded signatures."""

    blinded: list[int] = field(default_factory=list)
    blinded_sigs: list[int] = field(default_factory=list)

    def values(self) -> set[int]:
        return set(self.blinded) | set(self.blinded_sigs)


class TokenIssuer:
    """One-token-per-identity issuer; never sees serials or final signatures."""

    def __init__(self, key: IssuerKey, seed: int):
        self.key = key
        self.seed = seed
        self.transcript = IssuanceTranscript()
        self._served: set[int] = set()

    def issue(self, identity: int) -> Token:
        if identity in self._served:
            raise IssuanceRefused(f"identity {identity} already holds a token")
        self._served.add(identity)
        rng = random.Random(wire.derive_seed(self.seed, "token", identity))
        serial = random_serial(rng)
        r = random_blinding(rng, self.key.public)
        blinded = blind(serial, self.key.public, r)
        blinded_sig = sign_blinded(blinded, self.key)
        self.transcript.blinded.append(blinded)
        self.transcript.blinded_sigs.append(blinded_sig)
        return unblind(blinded_sig, r, self.key.public, serial)


def issue_tokens(voters: list[int], key: IssuerKey,
                 seed: int) -> tuple[dict[int, Token], IssuanceTranscript]:
    issuer = TokenIssuer(key, seed)
    tokens = {pid: issuer.issue(pid) for pid in voters}
    return tokens, issuer.transcript


# -- the peer ----------------------------------------------------------------


@dataclass
class ChainOutcome:
    tallies: dict[int, tuple[int, ...] | None]
    completion: float
    proposers: set[int]
    double_spend_serials: set[str]
    transcript: IssuanceTranscript
    tokens: dict[int, Token]
    roles: simnet.RoleLog

    def to_obj(self) -> dict:
        return {
            "protocol": "chainvote",
            "completion": self.completion,
            "tallies": {
                str(p): (list(t) if t is not None else None)
                for p, t in sorted(self.tallies.items())
            },
            "proposers": sorted(self.proposers),
            "roles": self.roles.to_obj(),
        }


class ChainVoter(Peer):
    def __init__(self, pid: int, params: ChainParams, neighbors: tuple[int, ...],
                 issuer_pk: IssuerPublicKey, token: Token | None, choice: int):
        super().__init__(pid)
        self.params = params
        self.neighbors = neighbors
        self.token = token
        self.choice = choice
        self.view = ChainView(issuer_pk, params.difficulty)
        self.seen_blocks: set[str] = {GENESIS_HASH}
        self.mining: tuple[Block, str] | None = None  # (candidate, parent at start)
        self.tally: tuple[int, ...] | None = None
        self.proposed = False
        self.double_spend = False
        self.done = False

    # -- casting -----------------------------------------------------------

    def on_start(self, ctx):
        ctx.log_action(PHASE_REGISTRATION, "register")
        if self.token is None:
            return
        ctx.log_action(PHASE_CASTING, "cast")
        txs = [Transaction(self.token, self.choice, self._nonce(ctx))]
        if self.double_spend:
            txs.append(
                Transaction(self.token, (self.choice + 1) % self.params.d, self._nonce(ctx))
            )
        for tx in txs:
            self.view.add_transaction(tx)
            self._flood(ctx, {"t": "tx", "tx": tx.to_obj()}, PHASE_CASTING)

    def _nonce(self, ctx) -> str:
        return ctx.rng.getrandbits(256).to_bytes(32, "big").hex()

    def _flood(self, ctx, payload: dict, phase: str, skip: int | None = None):
        for nb in self.neighbors:
            if nb != skip:
                ctx.send(nb, payload, phase)

    # -- gossip ----------------------------------------------------------

    def on_message(self, ctx, sender, msg):
        if self.done:
            return
        kind = msg.get("t")
        if kind == "tx":
            tx = Transaction.from_obj(msg["tx"])
            if tx.txid not in self.view.mempool:
                if self.view.add_transaction(tx):
                    self._flood(ctx, msg, PHASE_CASTING, skip=sender)
        elif kind == "block":
            block = Block.from_obj(msg["block"])
            h = block.block_hash()
            if h in self.seen_blocks:
                return
            self.seen_blocks.add(h)
            status = self.view.add_block(block)
            if status in ("added", "orphan"):
                self._flood(ctx, msg, PHASE_AGGREGATION, skip=sender)
            if status == "added":
                ctx.log_action(PHASE_AGGREGATION, "aggregate")
                if self.mining is not None and self.mining[1] != self.view.best:
                    self.mining = None  # chain moved on; candidate is stale

    # -- mining and finalization -------------------------------------------

    def on_idle(self, ctx):
        if self.done:
            return
        pending = self.view.pending(self.params.block_capacity)
        if pending and self.mining is None:
            parent = self.view.best
            candidate, attempts = mine_block(
                parent, self.view.best_height + 1, tuple(pending), self.pid,
                self.params.difficulty,
            )
            self.mining = (candidate, parent)
            ctx.set_timer(attempts, "mined", candidate.block_hash())
        elif not pending and self.mining is None:
            self._finalize(ctx)

    def on_timer(self, ctx, tag, data):
        if tag != "mined" or self.done or self.mining is None:
            return
        candidate, parent = self.mining
        if data != candidate.block_hash():
            return  # timer belongs to an abandoned candidate
        self.mining = None
        if parent != self.view.best:
            return  # lost the race while grinding
        self.seen_blocks.add(candidate.block_hash())
        if self.view.add_block(candidate) == "added":
            self.proposed = True
            ctx.log_action(PHASE_AGGREGATION, "propose-block")
            ctx.log_action(PHASE_AGGREGATION, "aggregate")
            self._flood(ctx, {"t": "block", "block": candidate.to_obj()}, PHASE_AGGREGATION)

    def _finalize(self, ctx):
        self.done = True
        try:
            self.tally = tally_chain(self.view, self.params.d, self.params.cutoff_height)
            ctx.log_action(PHASE_EVALUATION, "evaluate")
            self.view.verify_chain()
            ctx.log_action(PHASE_VERIFICATION, "verify")
        except ChainError:
            self.tally = None
            ctx.log_action(PHASE_VERIFICATION, "verify-failed")
        ctx.finish()


register_behavior(BEHAVIOR_SILENT, SilentPeer)
register_behavior(
    BEHAVIOR_WITHHOLD,
    lambda inner: SendSuppressor(inner, lambda msg: msg.get("t") == "block"),
)


def _enable_double_spend(inner: Peer) -> Peer:
    target = inner
    while not hasattr(target, "double_spend") and hasattr(target, "inner"):
        target = target.inner
    target.double_spend = True
    return inner


register_behavior(BEHAVIOR_DOUBLE_SPEND, _enable_double_spend)


def run_chainvote(params: ChainParams, choices: list[int], faults: FaultModel,
                  seed: int, max_ticks: int = 5_000_000) -> tuple[ChainOutcome, Trace]:
    """Run a full bulletin-board election.

    Tokens are issued to every voter identity up front (the registration
    phase); crashed peers hold tokens but never cast. Peers tally as soon
    as the network is quiet and nothing remains to mine.
    """
    params.validate()
    if len(choices) != params.n:
        raise simnet.ConfigError(f"need {params.n} choices, got {len(choices)}")
    if any(not 0 <= c < params.d for c in choices):
        raise simnet.ConfigError("choice out of range")
    key = generate_issuer_key(wire.derive_seed(seed, "issuer"), params.issuer_bits)
    tokens, transcript = issue_tokens(list(range(params.n)), key, seed)
    ov = build_gossip_mesh(params.n, params.degree, wire.derive_seed(seed, "overlay"))
    sim = simnet.Simulator(
        faults,
        seed,
        params={
            "protocol": "chainvote",
            "n": params.n,
            "d": params.d,
            "degree": params.degree,
            "difficulty": params.difficulty,
            "block_capacity": params.block_capacity,
            "cutoff_height": params.cutoff_height,
            "issuer_bits": params.issuer_bits,
            "seed": seed,
            "choices": list(choices),
            "faults": faults.to_obj(),
            "overlay": ov.to_obj(),
        },
    )
    sim.roles.voters = frozenset(range(params.n))
    voters = [
        ChainVoter(pid, params, ov.neighbors(pid), key.public, tokens[pid], choices[pid])
        for pid in range(params.n)
    ]
    for v in voters:
        sim.add_peer(v)
    trace = sim.run_until_quiescent(max_ticks)
    tallies = {v.pid: v.tally for v in voters}
    live = [pid for pid in range(params.n) if pid not in faults.crashed]
    completion = sum(1 for pid in live if tallies[pid] is not None) / max(len(live), 1)
    double_serials = _double_spend_serials(voters)
    outcome = ChainOutcome(
        tallies=tallies,
        completion=completion,
        proposers={v.pid for v in voters if v.proposed},
        double_spend_serials=double_serials,
        transcript=transcript,
        tokens=tokens,
        roles=sim.roles,
    )
    return outcome, trace


def _double_spend_serials(voters: list[ChainVoter]) -> set[str]:
    """Serials that appear in more than one distinct mempool transaction."""
    by_serial: dict[str, set[str]] = {}
    for v in voters:
        for tx in v.view.mempool.values():
            by_serial.setdefault(tx.token.serial, set()).add(tx.txid)
    return {serial for serial, txids in by_serial.items() if len(txids) > 1}
