"""Anonymity-preserving health-status ledger: signed transactions, a
miner/dual-validator block pipeline, challenge-response digital passes,
and zone proximity alerts, plus a deterministic multi-node simulator."""

from .blocks import (
    Block,
    BlockHeader,
    BlockPolicy,
    Mempool,
    ProposedBlock,
    finalize,
    make_genesis,
    mine_block,
    select_validators,
    validate_block,
)
from .crypto import (
    CipherText,
    KeyPair,
    decrypt,
    encrypt,
    enroll_identity,
    generate_keypair,
    hash_bytes,
    sign,
    verify,
)
from .digipass import (
    AccessDecision,
    Challenge,
    PassResponse,
    Verdict,
    check_response,
    decide_access,
    issue_challenge,
    respond,
    run_pass_exchange,
)
from .geoalert import AlertLevel, GeoPoint, ZoneAlert, classify, haversine
from .ledger import (
    ChainValidation,
    NodeLedger,
    StatusQueryResult,
    ledger_digest,
    load,
    save,
    serialize_ledger,
    validate_chain,
)
from .merkle import merkle_root
from .roles import Role, RoleRegistry
from .simnet import (
    RosterEntry,
    ScenarioEvent,
    SimConfig,
    SimReport,
    Simulation,
    default_roster,
    parse_script,
    run_scenario,
)
from .transactions import (
    CovidStatus,
    EpidRecord,
    IndividualTx,
    LocationTx,
    ZoneType,
    make_individual_tx,
    make_location_tx,
    parse_tx_line,
    tx_hash,
    verify_tx,
    zone_id_for,
)

__version__ = "0.1.0"
