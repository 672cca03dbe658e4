"""Deterministic scripted multi-node harness.

Stakeholder nodes share a lossless instant-broadcast network: submissions
route to the single miner, blocks seal when the threshold trips, and every
node appends the same sealed block to its own ledger copy. A single seeded
random stream drives every draw (identities, encryption, validator picks,
challenges) in a fixed order, so one seed plus one script yields one
byte-exact report.

Authoring capability is structural: only testing-center, hospital, and
law-enforcement node classes have a method that signs status records, and
only law-enforcement and local-authority classes can declare zones. Read
nodes simply have no such methods.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import enum
from dataclasses import dataclass, field
from random import Random
from typing import Mapping, Sequence

from . import crypto
from .blocks import (
    Block,
    BlockPolicy,
    Mempool,
    finalize,
    make_genesis,
    mine_block,
    select_validators,
    validate_block,
)
from .crypto import KeyPair
from .digipass import run_pass_exchange
from .errors import (
    CovidChainError,
    DuplicateTransaction,
    FinalizeRefused,
    RejectedTransaction,
    ScriptError,
    ValidationRefused,
)
from .geoalert import DEFAULT_NEAR_MARGIN_M, AlertLevel, GeoPoint, classify
from .ledger import NodeLedger, ledger_digest
from .roles import Role, RoleRegistry
from .transactions import (
    CovidStatus,
    EpidRecord,
    IndividualTx,
    Transaction,
    ZoneType,
    make_individual_tx,
    make_location_tx,
)

SIM_EPOCH = dt.datetime(2020, 1, 1, tzinfo=dt.timezone.utc)

_GENDERS = ("F", "M", "X")
_BLOOD_GROUPS = ("A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-")
_STATES = ("Assam", "Meghalaya", "Kerala", "Punjab", "Goa")


class Action(enum.Enum):
    SUBMIT_TEST = "SUBMIT_TEST"
    SUBMIT_ZONE = "SUBMIT_ZONE"
    VERIFY_PASS = "VERIFY_PASS"
    QUERY_STATUS = "QUERY_STATUS"
    GEO_QUERY = "GEO_QUERY"
    TAMPER = "TAMPER"


@dataclass(frozen=True)
class ScenarioEvent:
    at: int
    action: Action
    params: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RosterEntry:
    name: str
    role: Role
    seed: int


@dataclass(frozen=True)
class SimConfig:
    seed: int
    roster: tuple[RosterEntry, ...]
    block_policy: BlockPolicy = field(default_factory=BlockPolicy.by_count)
    near_margin: float = DEFAULT_NEAR_MARGIN_M

    def validate(self) -> None:
        names = [e.name for e in self.roster]
        if len(set(names)) != len(names):
            raise ValueError("roster names must be unique")
        miners = [e for e in self.roster if e.role is Role.MINER]
        validators = [e for e in self.roster if e.role is Role.VALIDATOR]
        if len(miners) != 1:
            raise ValueError(f"roster needs exactly one miner, has {len(miners)}")
        if len(validators) < 2:
            raise ValueError(f"roster needs at least two validators, has {len(validators)}")
        if not any(e.role is Role.CENTRAL_AUTHORITY for e in self.roster):
            raise ValueError("roster needs a central authority")
        for e in self.roster:
            if not 0 <= e.seed < 2 ** 64:
                raise ValueError(f"identity seed for {e.name} outside 64-bit range")


def default_roster() -> tuple[RosterEntry, ...]:
    """The standard eight-node desk deployment."""
    return (
        RosterEntry("miner", Role.MINER, 1),
        RosterEntry("validator-1", Role.VALIDATOR, 2),
        RosterEntry("validator-2", Role.VALIDATOR, 3),
        RosterEntry("testing-center", Role.TESTING_CENTER, 4),
        RosterEntry("hospital", Role.HOSPITAL, 5),
        RosterEntry("law-enforcement", Role.LAW_ENFORCEMENT, 6),
        RosterEntry("central-authority", Role.CENTRAL_AUTHORITY, 7),
        RosterEntry("government", Role.GOVERNMENT, 8),
    )


def identity_keypair(seed: int) -> KeyPair:
    return crypto.generate_keypair(crypto.hash_bytes(b"identity:" + seed.to_bytes(8, "big")))


def sim_clock(tick: int) -> dt.datetime:
    return SIM_EPOCH + dt.timedelta(seconds=tick)


# -- nodes -------------------------------------------------------------------

class Node:
    """Holds an identity and a ledger copy; the base class authors nothing."""

    def __init__(self, name: str, role: Role, keypair: KeyPair, genesis: Block):
        self.name = name
        self.role = role
        self.keypair = keypair
        self.ledger = NodeLedger(genesis)

    def digest(self) -> bytes:
        return ledger_digest(self.ledger)


class ReadNode(Node):
    """Government, business, individual, and central-authority nodes."""


class _TestAuthoring:
    def sign_test_result(self, subject_pub, status, date, time, epid, ca_pub, rng=None) -> IndividualTx:
        return make_individual_tx(subject_pub, status, date, time, epid, ca_pub, self.keypair, rng)


class _ZoneAuthoring:
    def declare_zone(self, lat, lon, radius, date, time, zone_type) -> Transaction:
        return make_location_tx(lat, lon, radius, date, time, zone_type, self.keypair)


class TestingCenterNode(_TestAuthoring, Node):
    pass


class HospitalNode(_TestAuthoring, Node):
    pass


class LawEnforcementNode(_TestAuthoring, _ZoneAuthoring, Node):
    pass


class LocalAuthorityNode(_ZoneAuthoring, Node):
    pass


class ValidatorNode(Node):
    def co_sign(self, proposed) -> bytes:
        return validate_block(proposed, self.keypair)


class MinerNode(Node):
    def __init__(self, name, role, keypair, genesis):
        super().__init__(name, role, keypair, genesis)
        self.mempool = Mempool()

    def submit(self, tx: Transaction, registry: RoleRegistry) -> None:
        """Admit one transaction: signer must hold an authoring role for
        this record kind, and the record itself must verify."""
        if isinstance(tx, IndividualTx):
            allowed = registry.can_author_individual(tx.signer_key)
        else:
            allowed = registry.can_author_zone(tx.signer_key)
        if not allowed:
            raise RejectedTransaction("signer is not registered for this record kind")
        self.mempool.ingest(tx)

    def try_seal(
        self,
        policy: BlockPolicy,
        validators: Sequence[ValidatorNode],
        rng: Random,
        now: dt.datetime,
    ) -> Block | None:
        txs = self.mempool.cut(policy)
        if txs is None:
            return None
        proposed = mine_block(
            txs,
            prev_hash=self.ledger.tip_hash(),
            height=self.ledger.height + 1,
            timestamp=now,
            miner=self.keypair,
        )
        v1, v2 = select_validators(validators, rng)
        sig1 = v1.co_sign(proposed)
        sig2 = v2.co_sign(proposed)
        return finalize(proposed, v1.keypair.public, sig1, v2.keypair.public, sig2)


_NODE_CLASSES: dict[Role, type[Node]] = {
    Role.TESTING_CENTER: TestingCenterNode,
    Role.HOSPITAL: HospitalNode,
    Role.LAW_ENFORCEMENT: LawEnforcementNode,
    Role.LOCAL_AUTHORITY: LocalAuthorityNode,
    Role.MINER: MinerNode,
    Role.VALIDATOR: ValidatorNode,
}


# -- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class SimReport:
    node_digests: tuple[tuple[str, str], ...]
    outcomes: tuple[str, ...]
    divergence: bool

    def to_text(self) -> str:
        lines = list(self.outcomes)
        lines.extend(f"node={name} digest={digest}" for name, digest in self.node_digests)
        lines.append(f"divergence={'true' if self.divergence else 'false'}")
        return "\n".join(lines) + "\n"


# -- scenario scripts --------------------------------------------------------

def parse_script(text: str) -> list[ScenarioEvent]:
    """Parse "tick|ACTION|k=v|..." lines; '#' comments and blanks skipped."""
    events: list[ScenarioEvent] = []
    last_tick = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        index = len(events)
        parts = line.split("|")
        if len(parts) < 2:
            raise ScriptError("expected tick|ACTION|k=v...", index)
        try:
            tick = int(parts[0])
        except ValueError:
            raise ScriptError(f"bad tick {parts[0]!r}", index) from None
        try:
            action = Action(parts[1])
        except ValueError:
            raise ScriptError(f"unknown action {parts[1]!r}", index) from None
        params: dict[str, str] = {}
        for kv in parts[2:]:
            key, sep, value = kv.partition("=")
            if not sep or not key:
                raise ScriptError(f"bad parameter {kv!r}", index)
            params[key] = value
        if last_tick is not None and tick < last_tick:
            raise ScriptError(f"tick {tick} decreases from {last_tick}", index)
        last_tick = tick
        events.append(ScenarioEvent(at=tick, action=action, params=params))
    return events


# -- the simulation ----------------------------------------------------------

class Simulation:
    def __init__(self, config: SimConfig):
        config.validate()
        self.config = config
        self.rng = Random(config.seed)
        keypairs = {e.name: identity_keypair(e.seed) for e in config.roster}

        self.registry = RoleRegistry()
        for entry in config.roster:
            self.registry.register(keypairs[entry.name].public, entry.role)

        miner_entry = next(e for e in config.roster if e.role is Role.MINER)
        v_entries = [e for e in config.roster if e.role is Role.VALIDATOR]
        genesis = make_genesis(
            keypairs[miner_entry.name],
            keypairs[v_entries[0].name],
            keypairs[v_entries[1].name],
            sim_clock(0),
        )

        self.nodes: dict[str, Node] = {}
        for entry in config.roster:
            cls = _NODE_CLASSES.get(entry.role, ReadNode)
            self.nodes[entry.name] = cls(entry.name, entry.role, keypairs[entry.name], genesis)
        self.miner: MinerNode = self.nodes[miner_entry.name]
        self.validators: list[ValidatorNode] = [self.nodes[e.name] for e in v_entries]

        # Off-roster subjects enrolled on first reference; the phone number
        # used at enrollment is consumed as entropy and not kept.
        self.subjects: dict[str, KeyPair] = {}

    # -- identities ------------------------------------------------------

    def subject_keypair(self, name: str, phone: str | None = None) -> KeyPair:
        node = self.nodes.get(name)
        if node is not None:
            return node.keypair
        if name not in self.subjects:
            number = phone if phone is not None else f"+00{self.rng.randrange(10**10):010d}"
            self.subjects[name] = crypto.enroll_identity(number, self.rng)
        return self.subjects[name]

    # -- event loop --------------------------------------------------------

    def run(self, script: Sequence[ScenarioEvent]) -> SimReport:
        outcomes = []
        last_tick = None
        for index, event in enumerate(script):
            if last_tick is not None and event.at < last_tick:
                raise ScriptError(f"tick {event.at} decreases from {last_tick}", index)
            last_tick = event.at
            detail = self._dispatch(index, event)
            outcomes.append(
                f"event={index} tick={event.at} action={event.action.value} {detail}"
            )
        digests = tuple((name, node.digest().hex()) for name, node in self.nodes.items())
        divergence = len({d for _, d in digests}) > 1
        return SimReport(node_digests=digests, outcomes=tuple(outcomes), divergence=divergence)

    def _dispatch(self, index: int, event: ScenarioEvent) -> str:
        handler = {
            Action.SUBMIT_TEST: self._submit_test,
            Action.SUBMIT_ZONE: self._submit_zone,
            Action.VERIFY_PASS: self._verify_pass,
            Action.QUERY_STATUS: self._query_status,
            Action.GEO_QUERY: self._geo_query,
            Action.TAMPER: self._tamper,
        }[event.action]
        return handler(index, event)

    def _node(self, index: int, event: ScenarioEvent, key: str) -> Node:
        name = self._param(index, event, key)
        node = self.nodes.get(name)
        if node is None:
            raise ScriptError(f"unknown node {name!r}", index)
        return node

    @staticmethod
    def _param(index: int, event: ScenarioEvent, key: str) -> str:
        value = event.params.get(key)
        if value is None:
            raise ScriptError(f"missing parameter {key!r}", index)
        return value

    def _event_date_time(self, event: ScenarioEvent) -> tuple[dt.date, dt.time]:
        when = sim_clock(event.at)
        date = dt.date.fromisoformat(event.params["date"]) if "date" in event.params else when.date()
        time = dt.time.fromisoformat(event.params["time"]) if "time" in event.params else when.time()
        return date, time.replace(microsecond=0)

    def _default_epid(self) -> EpidRecord:
        # Drawn unconditionally so the stream stays aligned whether or not
        # the script overrides fields.
        return EpidRecord(
            age=self.rng.randrange(1, 100),
            gender=self.rng.choice(_GENDERS),
            blood_group=self.rng.choice(_BLOOD_GROUPS),
            state_province=self.rng.choice(_STATES),
        )

    def _epid_from(self, event: ScenarioEvent) -> EpidRecord:
        base = self._default_epid()
        p = event.params
        conds = tuple(c for c in p.get("cond", "").split(",") if c) or base.conditions
        return EpidRecord(
            age=int(p["age"]) if "age" in p else base.age,
            gender=p.get("gender", base.gender),
            blood_group=p.get("blood", base.blood_group),
            state_province=p.get("state", base.state_province),
            conditions=conds,
        )

    def _broadcast_if_sealed(self, tick: int) -> str:
        try:
            block = self.miner.try_seal(
                self.config.block_policy, self.validators, self.rng, sim_clock(tick)
            )
        except (ValidationRefused, FinalizeRefused) as exc:
            # No retry protocol: surface the refusal and drop the block.
            return f" seal_refused={exc}"
        if block is None:
            return ""
        for node in self.nodes.values():
            node.ledger.append_block(block)
        return f" sealed={block.header.height}"

    # -- handlers -------------------------------------------------------

    def _submit_test(self, index: int, event: ScenarioEvent) -> str:
        signer = self._node(index, event, "signer")
        if not isinstance(signer, _TestAuthoring):
            raise ScriptError(f"node {signer.name!r} cannot author status records", index)
        subject_pub = self.subject_keypair(
            self._param(index, event, "subject"), event.params.get("phone")
        ).public
        status = CovidStatus.from_token(self._param(index, event, "status"))
        date, time = self._event_date_time(event)
        epid = self._epid_from(event)
        ca_pub = self.registry.central_authority_key()
        tx = signer.sign_test_result(subject_pub, status, date, time, epid, ca_pub, self.rng)
        try:
            self.miner.submit(tx, self.registry)
        except (RejectedTransaction, DuplicateTransaction) as exc:
            return f"rejected reason={exc}"
        return f"ok tid={tx.tid.hex()[:16]}" + self._broadcast_if_sealed(event.at)

    def _submit_zone(self, index: int, event: ScenarioEvent) -> str:
        signer = self._node(index, event, "signer")
        if not isinstance(signer, _ZoneAuthoring):
            raise ScriptError(f"node {signer.name!r} cannot declare zones", index)
        try:
            lat = float(self._param(index, event, "lat"))
            lon = float(self._param(index, event, "lon"))
            radius = int(self._param(index, event, "radius"))
        except ValueError:
            raise ScriptError("bad lat/lon/radius", index) from None
        zone_type = ZoneType.from_token(self._param(index, event, "type"))
        date, time = self._event_date_time(event)
        try:
            tx = signer.declare_zone(lat, lon, radius, date, time, zone_type)
        except CovidChainError as exc:
            return f"rejected reason={exc}"
        try:
            self.miner.submit(tx, self.registry)
        except (RejectedTransaction, DuplicateTransaction) as exc:
            return f"rejected reason={exc}"
        return (
            f"ok tid={tx.tid.hex()[:16]} zone={tx.zone_id.hex()[:8]}"
            + self._broadcast_if_sealed(event.at)
        )

    def _verify_pass(self, index: int, event: ScenarioEvent) -> str:
        verifier = self._node(index, event, "verifier")
        subject = self.subject_keypair(
            self._param(index, event, "subject"), event.params.get("phone")
        )
        decision, _frames = run_pass_exchange(
            verifier.ledger, subject, rng=self.rng, now=sim_clock(event.at)
        )
        return f"verdict={decision.verdict.value} reason={decision.reason}"

    def _query_status(self, index: int, event: ScenarioEvent) -> str:
        node = self._node(index, event, "node")
        subject_pub = self.subject_keypair(self._param(index, event, "subject")).public
        result = node.ledger.query_status(subject_pub)
        if not result.found:
            return "no-record"
        return f"status={result.status.token} as_of={result.as_of:%Y-%m-%dT%H:%M:%S}"

    def _geo_query(self, index: int, event: ScenarioEvent) -> str:
        node = self._node(index, event, "node")
        try:
            position = GeoPoint(
                float(self._param(index, event, "lat")),
                float(self._param(index, event, "lon")),
            )
            margin = float(event.params.get("margin", self.config.near_margin))
        except (ValueError, CovidChainError):
            raise ScriptError("bad geo-query position", index) from None
        alerts = classify(position, node.ledger.active_zones(), margin)
        warnings = [a for a in alerts if a.level is not AlertLevel.CLEAR]
        if not warnings:
            return "alerts=none"
        body = ",".join(
            f"{a.zone_id.hex()[:8]}:{a.zone_type.token}:{a.level.value}:{a.distance_m:.1f}"
            for a in warnings
        )
        return f"alerts={body}"

    def _tamper(self, index: int, event: ScenarioEvent) -> str:
        node = self._node(index, event, "node")
        try:
            height = int(self._param(index, event, "height"))
            tx_index = int(event.params.get("tx", "0"))
        except ValueError:
            raise ScriptError("bad tamper height/tx", index) from None
        chain = node.ledger.chain
        if not 0 <= height < len(chain) or not chain[height].txs:
            raise ScriptError(f"no transaction at height {height}", index)
        block = chain[height]
        if not 0 <= tx_index < len(block.txs):
            raise ScriptError(f"no transaction {tx_index} at height {height}", index)
        target = block.txs[tx_index]
        corrupted = dataclasses.replace(
            target, ds=bytes([target.ds[0] ^ 0x01]) + target.ds[1:]
        )
        txs = block.txs[:tx_index] + (corrupted,) + block.txs[tx_index + 1:]
        # Simulates storage corruption, so this bypasses the append path.
        node.ledger._chain[height] = dataclasses.replace(block, txs=txs)
        return f"tampered node={node.name} height={height} tx={tx_index}"


def run_scenario(config: SimConfig, script: Sequence[ScenarioEvent]) -> SimReport:
    """Build the network from ``config`` and execute ``script``."""
    return Simulation(config).run(script)


def node_digest(node: Node) -> bytes:
    """Digest of the node's canonical ledger serialization."""
    return node.digest()


__all__ = [
    "Action",
    "MinerNode",
    "Node",
    "ReadNode",
    "RosterEntry",
    "ScenarioEvent",
    "SimConfig",
    "SimReport",
    "Simulation",
    "ValidatorNode",
    "default_roster",
    "identity_keypair",
    "node_digest",
    "parse_script",
    "run_scenario",
    "sim_clock",
]
