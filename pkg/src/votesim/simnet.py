"""Deterministic discrete-event message simulator with fault injection.

Every protocol in this package runs on top of the :class:`Simulator`:
peers are state machines driven by message deliveries, timers and idle
callbacks. Time is an integer tick counter; per-message delays are drawn
uniformly from ``[1, max_delay]`` out of a run-seeded generator, so a
fixed (scenario, seed) pair always produces a byte-identical trace.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from . import wire

PHASE_REGISTRATION = "registration"
PHASE_CASTING = "casting"
PHASE_AGGREGATION = "aggregation"
PHASE_EVALUATION = "evaluation"
PHASE_VERIFICATION = "verification"

PHASES = (
    PHASE_REGISTRATION,
    PHASE_CASTING,
    PHASE_AGGREGATION,
    PHASE_EVALUATION,
    PHASE_VERIFICATION,
)

KIND_SEND = "send"
KIND_DELIVER = "deliver"
KIND_DROP = "drop"
KIND_LOCAL = "local-action"


class ScenarioError(Exception):
    """A scenario asked the simulator to do something contradictory."""


class ConfigError(Exception):
    """Bad simulator configuration (unknown behavior, invalid fault model)."""


@dataclass(frozen=True)
class SimEvent:
    """One line of the trace.

    ``dst`` is None for local actions; ``digest`` is the lowercase hex
    SHA-256 of the payload bytes and ``size`` their length.
    """

    time: int
    kind: str
    src: int
    dst: int | None
    phase: str
    digest: str
    size: int

    def to_obj(self) -> dict:
        obj: dict[str, Any] = {"time": self.time, "kind": self.kind, "from": self.src}
        if self.dst is not None:
            obj["to"] = self.dst
        obj["phase"] = self.phase
        obj["digest"] = self.digest
        obj["size"] = self.size
        return obj


@dataclass(frozen=True)
class FaultModel:
    """Which peers misbehave and how the network loses messages.

    ``lose_messages`` drops specific send sequence numbers (0-based over
    all sends of the run); it exists so tests can place a single targeted
    loss deterministically.
    """

    crashed: frozenset[int] = frozenset()
    drop_probability: float = 0.0
    byzantine: dict[int, str] = field(default_factory=dict)
    max_delay: int = 1
    lose_messages: frozenset[int] = frozenset()

    def validate(self) -> None:
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ConfigError("drop_probability must be within [0, 1]")
        if self.max_delay < 1:
            raise ConfigError("max_delay must be >= 1")
        for pid in self.crashed & set(self.byzantine):
            if not self.byzantine[pid].startswith("crash-after-step"):
                raise ConfigError(
                    f"peer {pid} cannot be both crashed and byzantine "
                    f"({self.byzantine[pid]!r})"
                )

    def to_obj(self) -> dict:
        return {
            "crashed": sorted(self.crashed),
            "drop_probability": self.drop_probability,
            "byzantine": {str(k): v for k, v in sorted(self.byzantine.items())},
            "max_delay": self.max_delay,
            "lose_messages": sorted(self.lose_messages),
        }


@dataclass
class Trace:
    """Ordered event record of one run plus the scenario echo."""

    events: list[SimEvent]
    seed: int
    params: dict

    def to_jsonl(self) -> str:
        return "".join(wire.dumps(e.to_obj()).decode() + "\n" for e in self.events)

    def sends(self, phases: tuple[str, ...] | None = None) -> list[SimEvent]:
        return [
            e
            for e in self.events
            if e.kind == KIND_SEND and (phases is None or e.phase in phases)
        ]

    def message_count(self) -> int:
        return sum(1 for e in self.events if e.kind == KIND_SEND)

    def byte_count(self) -> int:
        return sum(e.size for e in self.events if e.kind == KIND_SEND)


@dataclass(frozen=True)
class PerformedAction:
    phase: str
    action: str
    consumes: tuple[str, ...] = ()


@dataclass(frozen=True)
class AssignedRole:
    """An authority role held by a fixed subset of peers for a whole run.

    ``origin`` is "configured" when the scenario pins the holders and
    "runtime" when the protocol assigns them during the run (e.g. by
    overlay placement). ``artifacts`` names data items that only this
    role can produce and that other peers must take on trust.
    """

    name: str
    holders: frozenset[int]
    origin: str  # "configured" | "runtime"
    artifacts: tuple[str, ...] = ()


@dataclass
class RoleLog:
    """Per-peer record of protocol roles, used by the trace classifier."""

    voters: frozenset[int] = frozenset()
    performed: dict[int, list[PerformedAction]] = field(default_factory=dict)
    assigned: list[AssignedRole] = field(default_factory=list)

    def record(self, pid: int, action: PerformedAction) -> None:
        self.performed.setdefault(pid, []).append(action)

    def assign(self, name: str, holders: set[int], origin: str,
               artifacts: tuple[str, ...] = ()) -> None:
        if origin not in ("configured", "runtime"):
            raise ConfigError(f"unknown role origin {origin!r}")
        self.assigned.append(AssignedRole(name, frozenset(holders), origin, artifacts))

    def action_types(self, pid: int) -> frozenset[tuple[str, str]]:
        return frozenset((a.phase, a.action) for a in self.performed.get(pid, ()))

    def performers(self, phase: str, action: str) -> frozenset[int]:
        return frozenset(
            pid
            for pid, acts in self.performed.items()
            if any(a.phase == phase and a.action == action for a in acts)
        )

    def to_obj(self) -> dict:
        return {
            "voters": sorted(self.voters),
            "performed": {
                str(pid): [[a.phase, a.action, list(a.consumes)] for a in acts]
                for pid, acts in sorted(self.performed.items())
            },
            "assigned": [
                {
                    "name": r.name,
                    "holders": sorted(r.holders),
                    "origin": r.origin,
                    "artifacts": list(r.artifacts),
                }
                for r in self.assigned
            ],
        }


class Peer:
    """Base protocol state machine. Subclasses override the hooks they use."""

    def __init__(self, pid: int):
        self.pid = pid

    def on_start(self, ctx: "PeerContext") -> None:
        pass

    def on_message(self, ctx: "PeerContext", sender: int, msg: dict) -> None:
        pass

    def on_timer(self, ctx: "PeerContext", tag: str, data: Any) -> None:
        pass

    def on_idle(self, ctx: "PeerContext") -> None:
        pass


class PeerContext:
    """Capability handle a peer uses to act on the simulation."""

    def __init__(self, sim: "Simulator", pid: int):
        self._sim = sim
        self.pid = pid

    @property
    def now(self) -> int:
        return self._sim.now

    @property
    def rng(self) -> random.Random:
        return self._sim.peer_rng(self.pid)

    def send(self, dst: int, msg: dict, phase: str) -> int:
        return self._sim.send(self.pid, dst, wire.dumps(msg), phase)

    def log_action(self, phase: str, action: str,
                   consumes: tuple[str, ...] = (), detail: dict | None = None) -> None:
        self._sim.local_action(self.pid, phase, action, consumes, detail)

    def set_timer(self, delay: int, tag: str, data: Any = None) -> None:
        self._sim.set_timer(self.pid, delay, tag, data)

    def finish(self) -> None:
        self._sim.mark_finished(self.pid)


# Registry of named byzantine behaviors. A factory receives the wrapped
# peer instance and returns the state machine to run in its place (it may
# return the same instance after reconfiguring it). Protocol modules
# register their behaviors at import time.
_BEHAVIORS: dict[str, Callable[[Peer], Peer]] = {}


def register_behavior(name: str, factory: Callable[[Peer], Peer]) -> None:
    _BEHAVIORS[name] = factory


class SilentPeer(Peer):
    """Wrapper that swallows every activation: the peer emits nothing."""

    def __init__(self, inner: Peer):
        super().__init__(inner.pid)
        self.inner = inner


class CrashAfterSteps(Peer):
    """Runs the inner machine for N activations, then goes silent."""

    def __init__(self, inner: Peer, steps: int):
        super().__init__(inner.pid)
        self.inner = inner
        self.steps = steps
        self.done = 0

    def _spent(self) -> bool:
        if self.done >= self.steps:
            return True
        self.done += 1
        return False

    def on_start(self, ctx):
        if not self._spent():
            self.inner.on_start(ctx)

    def on_message(self, ctx, sender, msg):
        if not self._spent():
            self.inner.on_message(ctx, sender, msg)

    def on_timer(self, ctx, tag, data):
        if not self._spent():
            self.inner.on_timer(ctx, tag, data)

    def on_idle(self, ctx):
        if not self._spent():
            self.inner.on_idle(ctx)


class MutatingContext(PeerContext):
    """Context wrapper that rewrites outgoing payloads before sending."""

    def __init__(self, sim, pid, mutate: Callable[[dict], dict]):
        super().__init__(sim, pid)
        self._mutate = mutate

    def send(self, dst, msg, phase):
        return super().send(dst, self._mutate(msg), phase)


class SendMutator(Peer):
    """Wrapper applying a payload mutation to every send of the inner peer."""

    def __init__(self, inner: Peer, mutate: Callable[[dict], dict]):
        super().__init__(inner.pid)
        self.inner = inner
        self.mutate = mutate

    def _ctx(self, ctx: PeerContext) -> PeerContext:
        return MutatingContext(ctx._sim, ctx.pid, self.mutate)

    def on_start(self, ctx):
        self.inner.on_start(self._ctx(ctx))

    def on_message(self, ctx, sender, msg):
        self.inner.on_message(self._ctx(ctx), sender, msg)

    def on_timer(self, ctx, tag, data):
        self.inner.on_timer(self._ctx(ctx), tag, data)

    def on_idle(self, ctx):
        self.inner.on_idle(self._ctx(ctx))


class SuppressingContext(PeerContext):
    """Context wrapper that silently swallows sends matching a predicate."""

    def __init__(self, sim, pid, suppress: Callable[[dict], bool]):
        super().__init__(sim, pid)
        self._suppress = suppress

    def send(self, dst, msg, phase):
        if self._suppress(msg):
            return -1
        return super().send(dst, msg, phase)


class SendSuppressor(Peer):
    """Wrapper that withholds the inner peer's sends matching a predicate."""

    def __init__(self, inner: Peer, suppress: Callable[[dict], bool]):
        super().__init__(inner.pid)
        self.inner = inner
        self.suppress = suppress

    def _ctx(self, ctx: PeerContext) -> PeerContext:
        return SuppressingContext(ctx._sim, ctx.pid, self.suppress)

    def on_start(self, ctx):
        self.inner.on_start(self._ctx(ctx))

    def on_message(self, ctx, sender, msg):
        self.inner.on_message(self._ctx(ctx), sender, msg)

    def on_timer(self, ctx, tag, data):
        self.inner.on_timer(self._ctx(ctx), tag, data)

    def on_idle(self, ctx):
        self.inner.on_idle(self._ctx(ctx))


def resolve_behavior(name: str) -> Callable[[Peer], Peer]:
    if name.startswith("crash-after-step"):
        parts = name.split()
        try:
            steps = int(parts[1]) if len(parts) > 1 else 0
        except ValueError as exc:
            raise ConfigError(f"bad crash-after-step count in {name!r}") from exc
        return lambda inner: CrashAfterSteps(inner, steps)
    if name not in _BEHAVIORS:
        raise ConfigError(f"unknown byzantine behavior {name!r}")
    return _BEHAVIORS[name]


class Simulator:
    """Single-threaded deterministic event loop for one protocol run."""

    def __init__(self, faults: FaultModel, seed: int, params: dict | None = None):
        faults.validate()
        self.faults = faults
        self.seed = seed
        self.params = dict(params or {})
        self.now = 0
        self.events: list[SimEvent] = []
        self.roles = RoleLog()
        self._peers: dict[int, Peer] = {}
        self._ctxs: dict[int, PeerContext] = {}
        self._queue: list[tuple[int, int, tuple]] = []
        self._seq = 0
        self._send_seq = 0
        self._net_rng = random.Random(wire.derive_seed(seed, "net"))
        self._peer_rngs: dict[int, random.Random] = {}
        self._finished: set[int] = set()
        self._running = False
        self.quiescent = False

    # -- setup ---------------------------------------------------------

    def add_peer(self, peer: Peer) -> None:
        pid = peer.pid
        if pid in self._peers:
            raise ConfigError(f"duplicate peer id {pid}")
        behavior = self.faults.byzantine.get(pid)
        if behavior is not None:
            peer = resolve_behavior(behavior)(peer)
        self._peers[pid] = peer
        self._ctxs[pid] = PeerContext(self, pid)

    def apply_byzantine(self, pid: int, behavior: str) -> None:
        """Wrap an already-registered peer with a named behavior."""
        if pid not in self._peers:
            raise ConfigError(f"unknown peer {pid}")
        self._peers[pid] = resolve_behavior(behavior)(self._peers[pid])

    def peer_rng(self, pid: int) -> random.Random:
        if pid not in self._peer_rngs:
            self._peer_rngs[pid] = random.Random(wire.derive_seed(self.seed, "peer", pid))
        return self._peer_rngs[pid]

    def is_crashed(self, pid: int) -> bool:
        return pid in self.faults.crashed

    # -- actions peers take --------------------------------------------

    def send(self, src: int, dst: int, payload: bytes, phase: str) -> int:
        if not self._running:
            raise ScenarioError("send outside of a running simulation")
        if self.is_crashed(src):
            raise ScenarioError(f"peer {src} is crashed and cannot send")
        if phase not in PHASES:
            raise ConfigError(f"unknown phase {phase!r}")
        msg_id = self._send_seq
        self._send_seq += 1
        self._record(KIND_SEND, src, dst, phase, payload)
        delay = (
            1
            if self.faults.max_delay == 1
            else self._net_rng.randint(1, self.faults.max_delay)
        )
        dropped = self.is_crashed(dst) or msg_id in self.faults.lose_messages
        if not dropped:
            p = self.faults.drop_probability
            if p >= 1.0:
                dropped = True
            elif p > 0.0:
                dropped = self._net_rng.random() < p
        kind = "drop" if dropped else "deliver"
        self._push(self.now + delay, (kind, src, dst, phase, payload))
        return msg_id

    def local_action(self, pid: int, phase: str, action: str,
                     consumes: tuple[str, ...] = (), detail: dict | None = None) -> None:
        payload = wire.dumps({"action": action, **(detail or {})})
        self._record(KIND_LOCAL, pid, None, phase, payload)
        self.roles.record(pid, PerformedAction(phase, action, tuple(consumes)))

    def set_timer(self, pid: int, delay: int, tag: str, data: Any = None) -> None:
        if delay < 1:
            raise ScenarioError("timer delay must be >= 1")
        self._push(self.now + delay, ("timer", pid, tag, data))

    def mark_finished(self, pid: int) -> None:
        self._finished.add(pid)

    @property
    def terminated(self) -> frozenset[int]:
        return frozenset(self._finished)

    # -- event loop ------------------------------------------------------

    def run_until_quiescent(self, max_ticks: int = 1_000_000) -> Trace:
        """Drain the event queue, giving idle rounds between bursts.

        Returns the trace; ``self.quiescent`` tells whether the run drained
        naturally or hit ``max_ticks`` (reported as incomplete, not an
        error). ``self.terminated`` holds the peers that finished their
        protocol.
        """
        self._running = True
        for pid in sorted(self._peers):
            if not self.is_crashed(pid):
                self._peers[pid].on_start(self._ctxs[pid])
        while True:
            while self._queue:
                t, _, entry = heapq.heappop(self._queue)
                if t > max_ticks:
                    self._running = False
                    self.quiescent = False
                    return self._trace()
                self.now = t
                self._dispatch(entry)
            # Queue drained: offer every live peer one idle activation. If
            # nobody schedules anything new, the run is quiescent.
            before = self._seq
            for pid in sorted(self._peers):
                if not self.is_crashed(pid) and pid not in self._finished:
                    self._peers[pid].on_idle(self._ctxs[pid])
            if self._seq == before:
                break
        self._running = False
        self.quiescent = True
        return self._trace()

    # -- internals -------------------------------------------------------

    def _push(self, time: int, entry: tuple) -> None:
        heapq.heappush(self._queue, (time, self._seq, entry))
        self._seq += 1

    def _dispatch(self, entry: tuple) -> None:
        kind = entry[0]
        if kind == "deliver":
            _, src, dst, phase, payload = entry
            self._record(KIND_DELIVER, src, dst, phase, payload)
            peer = self._peers.get(dst)
            if peer is not None and not isinstance(peer, SilentPeer):
                peer.on_message(self._ctxs[dst], src, wire.loads(payload))
        elif kind == "drop":
            _, src, dst, phase, payload = entry
            self._record(KIND_DROP, src, dst, phase, payload)
        elif kind == "timer":
            _, pid, tag, data = entry
            peer = self._peers.get(pid)
            if peer is not None and not isinstance(peer, SilentPeer):
                peer.on_timer(self._ctxs[pid], tag, data)
        else:  # pragma: no cover - queue entries are made in this module
            raise AssertionError(f"unknown queue entry {kind!r}")

    def _record(self, kind: str, src: int, dst: int | None, phase: str,
                payload: bytes) -> None:
        self.events.append(
            SimEvent(self.now, kind, src, dst, phase, wire.digest(payload), len(payload))
        )

    def _trace(self) -> Trace:
        return Trace(events=list(self.events), seed=self.seed, params=dict(self.params))
