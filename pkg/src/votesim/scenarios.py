"""Scenario files: a single JSON document describing one experiment.

The schema is versioned; validation reports field paths so a bad file
fails before any simulation starts. Choices may be listed explicitly (for
reproducing worked examples) or drawn from a seeded categorical
distribution (for sweeps).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from . import wire
from .ballot import DpolParams
from .baselines import HeliosParams, run_helios_like, run_mesh_share
from .chainvote import ChainParams, run_chainvote
from .dpol import run_dpol
from .simnet import FaultModel, Trace
from .spp import SppParams, run_spp

SCHEMA = "votesim-scenario/1"
PROTOCOLS = ("dpol", "spp", "chainvote", "helios", "mesh")


class ScenarioError(Exception):
    """Invalid scenario document; the message names the offending field."""


@dataclass
class Scenario:
    protocol: str
    n: int
    d: int
    seed: int
    choices: list[int] | None = None
    choice_weights: list[float] | None = None
    k: int = 1
    cluster_size: int = 4
    t: int = 2
    trustees: int = 3
    degree: int = 4
    difficulty: int = 8
    block_capacity: int = 64
    cutoff_height: int | None = None
    issuer_bits: int = 768
    audit: bool = False
    max_ticks: int = 1_000_000
    faults: FaultModel = field(default_factory=FaultModel)

    def to_obj(self) -> dict:
        return {
            "schema": SCHEMA,
            "protocol": self.protocol,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "choices": list(self.choices) if self.choices is not None else None,
            "choice_weights": self.choice_weights,
            "k": self.k,
            "cluster_size": self.cluster_size,
            "t": self.t,
            "trustees": self.trustees,
            "degree": self.degree,
            "difficulty": self.difficulty,
            "block_capacity": self.block_capacity,
            "cutoff_height": self.cutoff_height,
            "issuer_bits": self.issuer_bits,
            "audit": self.audit,
            "max_ticks": self.max_ticks,
            "faults": self.faults.to_obj(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True) + "\n"


def _need(obj: dict, key: str, types, path: str = ""):
    where = f"{path}{key}"
    if key not in obj or obj[key] is None:
        raise ScenarioError(f"{where}: required field missing")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool) and types is int:
        raise ScenarioError(f"{where}: wrong type, expected {types}")
    return value


def _opt(obj: dict, key: str, types, default, path: str = ""):
    if key not in obj or obj[key] is None:
        return default
    value = obj[key]
    if not isinstance(value, types):
        raise ScenarioError(f"{path}{key}: wrong type, expected {types}")
    return value


def parse_faults(obj: dict) -> FaultModel:
    crashed = _opt(obj, "crashed", list, [], "faults.")
    drop = _opt(obj, "drop_probability", (int, float), 0.0, "faults.")
    byz = _opt(obj, "byzantine", dict, {}, "faults.")
    max_delay = _opt(obj, "max_delay", int, 3, "faults.")
    lose = _opt(obj, "lose_messages", list, [], "faults.")
    if not 0.0 <= float(drop) <= 1.0:
        raise ScenarioError("faults.drop_probability: must be within [0, 1]")
    if max_delay < 1:
        raise ScenarioError("faults.max_delay: must be >= 1")
    try:
        byz_map = {int(k): str(v) for k, v in byz.items()}
    except (TypeError, ValueError) as exc:
        raise ScenarioError("faults.byzantine: keys must be peer ids") from exc
    return FaultModel(
        crashed=frozenset(int(x) for x in crashed),
        drop_probability=float(drop),
        byzantine=byz_map,
        max_delay=int(max_delay),
        lose_messages=frozenset(int(x) for x in lose),
    )


def parse(obj: dict) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("scenario: document must be a JSON object")
    schema = _need(obj, "schema", str)
    if schema != SCHEMA:
        raise ScenarioError(f"schema: expected {SCHEMA!r}, got {schema!r}")
    protocol = _need(obj, "protocol", str)
    if protocol not in PROTOCOLS:
        raise ScenarioError(f"protocol: unknown protocol {protocol!r}")
    n = _need(obj, "n", int)
    d = _opt(obj, "d", int, 2)
    seed = _opt(obj, "seed", int, 0)
    sc = Scenario(
        protocol=protocol,
        n=n,
        d=d,
        seed=seed,
        choices=_opt(obj, "choices", list, None),
        choice_weights=_opt(obj, "choice_weights", list, None),
        k=_opt(obj, "k", int, 1),
        cluster_size=_opt(obj, "cluster_size", int, 4),
        t=_opt(obj, "t", int, 2),
        trustees=_opt(obj, "trustees", int, 3),
        degree=_opt(obj, "degree", int, 4),
        difficulty=_opt(obj, "difficulty", int, 8),
        block_capacity=_opt(obj, "block_capacity", int, 64),
        cutoff_height=_opt(obj, "cutoff_height", int, None),
        issuer_bits=_opt(obj, "issuer_bits", int, 768),
        audit=_opt(obj, "audit", bool, False),
        max_ticks=_opt(obj, "max_ticks", int, 1_000_000),
        faults=parse_faults(_opt(obj, "faults", dict, {})),
    )
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    if sc.n < 1:
        raise ScenarioError("n: must be positive")
    if sc.d < 2:
        raise ScenarioError("d: must be >= 2")
    if sc.choices is not None:
        if len(sc.choices) != sc.n:
            raise ScenarioError(f"choices: expected {sc.n} entries, got {len(sc.choices)}")
        if any(not isinstance(c, int) or not 0 <= c < sc.d for c in sc.choices):
            raise ScenarioError("choices: every entry must be an option index in [0, d)")
    if sc.choice_weights is not None:
        if len(sc.choice_weights) != sc.d:
            raise ScenarioError("choice_weights: need one weight per option")
        if any(w < 0 for w in sc.choice_weights) or sum(sc.choice_weights) <= 0:
            raise ScenarioError("choice_weights: weights must be non-negative, sum > 0")
    if sc.protocol == "dpol":
        root = math.isqrt(sc.n)
        if sc.n < 4 or root * root != sc.n:
            raise ScenarioError("n: DPol requires n to be a perfect square >= 4")
        if sc.k < 1:
            raise ScenarioError("k: must be >= 1")
        if sc.k % (sc.d - 1) != 0:
            raise ScenarioError("k: must be divisible by d-1")
        if 2 * sc.k + 1 > root:
            raise ScenarioError("k: 2k+1 must not exceed the cluster size sqrt(n)")
    elif sc.protocol == "spp":
        if sc.cluster_size < 2:
            raise ScenarioError("cluster_size: must be >= 2")
        if sc.n % sc.cluster_size != 0:
            raise ScenarioError("n: must be divisible by cluster_size")
        if not 1 <= sc.t <= sc.cluster_size:
            raise ScenarioError("t: need 1 <= t <= cluster_size")
    elif sc.protocol == "helios":
        if sc.trustees < 1:
            raise ScenarioError("trustees: must be >= 1")
        if not 1 <= sc.t <= sc.trustees:
            raise ScenarioError("t: need 1 <= t <= trustees")
    elif sc.protocol == "chainvote":
        if not 2 <= sc.degree < sc.n:
            raise ScenarioError("degree: need 2 <= degree < n")
        if not 1 <= sc.difficulty <= 24:
            raise ScenarioError("difficulty: must be in [1, 24]")
        if sc.block_capacity < 1:
            raise ScenarioError("block_capacity: must be >= 1")
    elif sc.protocol == "mesh":
        if sc.n < 2:
            raise ScenarioError("n: mesh baseline needs n >= 2")


def from_file(path: str | Path) -> Scenario:
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    return parse(obj)


def resolve_choices(sc: Scenario) -> list[int]:
    if sc.choices is not None:
        return list(sc.choices)
    rng = random.Random(wire.derive_seed(sc.seed, "choices", sc.protocol, sc.n, sc.d))
    if sc.choice_weights is not None:
        return rng.choices(range(sc.d), weights=sc.choice_weights, k=sc.n)
    return [rng.randrange(sc.d) for _ in range(sc.n)]


def run(sc: Scenario) -> tuple[object, Trace]:
    """Dispatch a validated scenario to its protocol runner."""
    choices = resolve_choices(sc)
    if sc.protocol == "dpol":
        params = DpolParams(sc.n, sc.k, sc.d)
        return run_dpol(params, choices, sc.faults, sc.seed, audit=sc.audit,
                        max_ticks=sc.max_ticks)
    if sc.protocol == "spp":
        params = SppParams(sc.n, sc.cluster_size, sc.t, sc.d)
        return run_spp(params, choices, sc.faults, sc.seed, max_ticks=sc.max_ticks)
    if sc.protocol == "helios":
        params = HeliosParams(sc.n, sc.trustees, sc.t, sc.d)
        return run_helios_like(params, choices, sc.faults, sc.seed, max_ticks=sc.max_ticks)
    if sc.protocol == "chainvote":
        params = ChainParams(
            sc.n, sc.d, sc.degree, sc.difficulty, sc.block_capacity, sc.cutoff_height,
            sc.issuer_bits,
        )
        return run_chainvote(params, choices, sc.faults, sc.seed, max_ticks=sc.max_ticks)
    if sc.protocol == "mesh":
        return run_mesh_share(sc.n, sc.d, choices, sc.seed, sc.faults,
                              max_ticks=sc.max_ticks)
    raise ScenarioError(f"protocol: unknown protocol {sc.protocol!r}")


def canonical_scenario(protocol: str, seed: int) -> Scenario:
    """The honest, fault-free configuration each protocol is classified on."""
    if protocol == "dpol":
        sc = Scenario("dpol", n=9, d=2, seed=seed, k=1)
    elif protocol == "spp":
        sc = Scenario("spp", n=28, d=2, seed=seed, cluster_size=4, t=3)
    elif protocol == "helios":
        sc = Scenario("helios", n=25, d=2, seed=seed, trustees=3, t=2)
    elif protocol == "chainvote":
        sc = Scenario("chainvote", n=16, d=2, seed=seed, degree=4, difficulty=8,
                      block_capacity=32)
    elif protocol == "mesh":
        sc = Scenario("mesh", n=16, d=2, seed=seed)
    else:
        raise ScenarioError(f"protocol: unknown protocol {protocol!r}")
    validate(sc)
    return sc
