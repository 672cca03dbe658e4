"""Operator command surface.

Every command is a thin composition of library calls over three files in the
working directory (overridable): the ledger, the pending-transaction pool,
and the signer role registry. Write commands take an exclusive lock on the
ledger path and fail fast if another writer holds it.

Exit codes: 0 success, 1 validation/verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as dt
import fcntl
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from random import Random

from . import crypto
from .blocks import BlockPolicy, Mempool, finalize, make_genesis, mine_block, validate_block
from .crypto import KeyPair
from .digipass import Verdict, run_pass_exchange
from .errors import CovidChainError, LedgerLockError, ValidationError
from .geoalert import GeoPoint, alert_lines, classify
from .ledger import NodeLedger, load, save, validate_chain
from .roles import RoleRegistry
from .transactions import (
    CovidStatus,
    EpidRecord,
    Transaction,
    ZoneType,
    make_individual_tx,
    make_location_tx,
    parse_tx_line,
)
from .simnet import SimConfig, default_roster, parse_script, run_scenario

DEFAULT_LEDGER = "covidchain.ledger"
DEFAULT_POOL = "covidchain.pool"
DEFAULT_REGISTRY = "covidchain.registry"


@dataclass(frozen=True)
class CliConfig:
    ledger_path: Path
    pool_path: Path
    registry_path: Path
    machine: bool


# -- shared plumbing ---------------------------------------------------------

def _config(args) -> CliConfig:
    return CliConfig(
        ledger_path=Path(args.ledger),
        pool_path=Path(args.pool),
        registry_path=Path(args.registry),
        machine=args.machine,
    )


@contextlib.contextmanager
def ledger_lock(ledger_path: Path):
    """Exclusive advisory lock guarding all writers of one ledger path."""
    lock_path = str(ledger_path) + ".lock"
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError:
        os.close(fd)
        raise LedgerLockError(f"{ledger_path} is locked by another process") from None
    try:
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def load_keyfile(path) -> KeyPair:
    """Key files are two lowercase-hex lines: public, then private."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        public, private = bytes.fromhex(lines[0]), bytes.fromhex(lines[1])
    except (OSError, ValueError, IndexError) as exc:
        raise ValidationError(f"unreadable key file {path}: {exc}") from exc
    if crypto.generate_keypair(private).public != public:
        raise ValidationError(f"key file {path} is inconsistent")
    return KeyPair(public=public, private=private)


def keyfile_text(pair: KeyPair) -> str:
    return f"{pair.public.hex()}\n{pair.private.hex()}\n"


def _load_registry(cfg: CliConfig) -> RoleRegistry:
    if not cfg.registry_path.exists():
        raise ValidationError(f"role registry {cfg.registry_path} not found")
    return RoleRegistry.load(cfg.registry_path)


def _load_ledger(cfg: CliConfig) -> NodeLedger:
    if not cfg.ledger_path.exists():
        raise ValidationError(f"ledger {cfg.ledger_path} not found (run 'mine' to initialize)")
    return load(cfg.ledger_path)


def _load_pool(cfg: CliConfig) -> list[Transaction]:
    if not cfg.pool_path.exists():
        return []
    txs = []
    with open(cfg.pool_path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                txs.append(parse_tx_line(line, line_no))
    return txs


def _append_pool(cfg: CliConfig, tx: Transaction) -> None:
    with open(cfg.pool_path, "a", encoding="utf-8") as fh:
        fh.write(tx.to_line() + "\n")


def _write_pool(cfg: CliConfig, txs) -> None:
    with open(cfg.pool_path, "w", encoding="utf-8") as fh:
        for tx in txs:
            fh.write(tx.to_line() + "\n")


def _now_date_time(args) -> tuple[dt.date, dt.time]:
    now = dt.datetime.now(dt.timezone.utc)
    date = dt.date.fromisoformat(args.date) if args.date else now.date()
    time = dt.time.fromisoformat(args.time) if args.time else now.time().replace(microsecond=0)
    return date, time


# -- commands ----------------------------------------------------------------

def cmd_keygen(args) -> int:
    try:
        seed = bytes.fromhex(args.seed)
    except ValueError:
        raise ValidationError("seed must be hex") from None
    pair = crypto.generate_keypair(seed)
    if args.out:
        Path(args.out).write_text(keyfile_text(pair), encoding="utf-8")
        print(f"public={pair.public.hex()}")
    else:
        print(keyfile_text(pair), end="")
    return 0


def cmd_submit_test(args) -> int:
    cfg = _config(args)
    registry = _load_registry(cfg)
    signer = load_keyfile(args.signer)
    if not registry.can_author_individual(signer.public):
        print("error: signer is not registered to issue status records", file=sys.stderr)
        return 1
    subject_pub = bytes.fromhex(args.subject_pub)
    status = CovidStatus.from_token(args.status)
    epid = EpidRecord.from_canonical(args.epid.encode("utf-8"))
    date, time = _now_date_time(args)
    ca_pub = registry.central_authority_key()
    tx = make_individual_tx(subject_pub, status, date, time, epid, ca_pub, signer)
    with ledger_lock(cfg.ledger_path):
        _append_pool(cfg, tx)
    print(tx.to_line() if cfg.machine else f"ok tid={tx.tid.hex()}")
    return 0


def cmd_submit_zone(args) -> int:
    cfg = _config(args)
    registry = _load_registry(cfg)
    signer = load_keyfile(args.signer)
    if not registry.can_author_zone(signer.public):
        print("error: signer is not registered to declare zones", file=sys.stderr)
        return 1
    date, time = _now_date_time(args)
    tx = make_location_tx(
        args.lat, args.lon, args.radius, date, time, ZoneType.from_token(args.type), signer
    )
    with ledger_lock(cfg.ledger_path):
        _append_pool(cfg, tx)
    print(tx.to_line() if cfg.machine else f"ok tid={tx.tid.hex()} zone={tx.zone_id.hex()[:8]}")
    return 0


def cmd_mine(args) -> int:
    cfg = _config(args)
    miner = load_keyfile(args.miner)
    if len(args.validator) != 2:
        print("error: exactly two --validator key files required", file=sys.stderr)
        return 2
    v1, v2 = (load_keyfile(p) for p in args.validator)
    policy = BlockPolicy.parse(args.threshold)
    now = dt.datetime.now(dt.timezone.utc)
    with ledger_lock(cfg.ledger_path):
        if cfg.ledger_path.exists():
            chain = load(cfg.ledger_path)
            created = False
        else:
            chain = NodeLedger(make_genesis(miner, v1, v2, now))
            created = True
        pool = Mempool()
        for tx in _load_pool(cfg):
            pool.ingest(tx)
        txs = pool.cut(policy)
        sealed = None
        if txs is not None:
            proposed = mine_block(txs, chain.tip_hash(), chain.height + 1, now, miner)
            sealed = finalize(
                proposed,
                v1.public, validate_block(proposed, v1),
                v2.public, validate_block(proposed, v2),
            )
            chain.append_block(sealed)
            _write_pool(cfg, pool.queue)
        save(chain, cfg.ledger_path)
    if created:
        print("genesis height=0")
    if sealed is None:
        print(f"no block (pending={len(pool)})")
    elif cfg.machine:
        print(sealed.to_text(), end="")
    else:
        print(f"sealed height={sealed.header.height} txs={len(sealed.txs)}")
    return 0


def cmd_verify_pass(args) -> int:
    cfg = _config(args)
    chain = _load_ledger(cfg)
    subject = load_keyfile(args.subject)
    load_keyfile(args.verifier)  # the verifier's identity; presence checked only
    decision, frames = run_pass_exchange(chain, subject, rng=Random())
    if cfg.machine:
        for frame in frames:
            print(frame)
    else:
        print(decision.verdict.value)
        print(f"reason={decision.reason}")
    return 0 if decision.verdict is Verdict.ALLOW else 1


def cmd_query_status(args) -> int:
    cfg = _config(args)
    chain = _load_ledger(cfg)
    subject_pub = bytes.fromhex(args.pub)
    result = chain.query_status(subject_pub)
    if not result.found:
        print("no-record")
        return 0
    subject = crypto.hash_bytes(subject_pub)
    print(
        f"subject={subject.hex()} status={result.status.token} "
        f"as_of={result.as_of:%Y-%m-%dT%H:%M:%S}"
    )
    return 0


def cmd_alert(args) -> int:
    cfg = _config(args)
    chain = _load_ledger(cfg)
    alerts = classify(GeoPoint(args.lat, args.lon), chain.active_zones(), args.margin)
    for line in alert_lines(alerts):
        print(line)
    return 0


def cmd_chain_validate(args) -> int:
    cfg = _config(args)
    chain = _load_ledger(cfg)
    result = validate_chain(chain)
    if result:
        print(f"OK height={chain.height}")
        return 0
    print(f"FAIL height={result.first_bad_height} reason={result.reason}")
    return 1


def cmd_scenario_run(args) -> int:
    script_text = Path(args.script).read_text(encoding="utf-8")
    events = parse_script(script_text)
    config = SimConfig(
        seed=args.seed,
        roster=default_roster(),
        block_policy=BlockPolicy.parse(args.threshold),
    )
    report = run_scenario(config, events)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"report written to {args.out}")
    else:
        print(text, end="")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covidchain",
        description="Anonymous health-status ledger: keys, transactions, blocks, passes, alerts.",
    )
    parser.add_argument("--ledger", default=DEFAULT_LEDGER, help="ledger file path")
    parser.add_argument("--pool", default=DEFAULT_POOL, help="pending-transaction pool path")
    parser.add_argument("--registry", default=DEFAULT_REGISTRY, help="role registry path")
    parser.add_argument(
        "--machine", action="store_true",
        help="emit exact wire/file line formats instead of friendly output",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="derive a keypair from a 32-byte hex seed")
    p.add_argument("--seed", required=True)
    p.add_argument("--out", help="write a key file instead of printing it")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("submit-test", help="queue a signed status record")
    p.add_argument("--subject-pub", required=True, help="subject public key, hex")
    p.add_argument("--status", required=True, help="+ive, -ive, IQ, or OQ")
    p.add_argument("--epid", required=True,
                   help="age=N;gender=T;blood=T;state=T;cond=a,b")
    p.add_argument("--signer", required=True, help="issuing center key file")
    p.add_argument("--date")
    p.add_argument("--time")
    p.set_defaults(func=cmd_submit_test)

    p = sub.add_parser("submit-zone", help="queue a signed zone declaration")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--type", required=True, help="RED, ORANGE, or GREEN")
    p.add_argument("--signer", required=True, help="authority key file")
    p.add_argument("--date")
    p.add_argument("--time")
    p.set_defaults(func=cmd_submit_zone)

    p = sub.add_parser("mine", help="cut, validate, and append a block from the pool")
    p.add_argument("--miner", required=True, help="miner key file")
    p.add_argument("--validator", action="append", default=[],
                   help="validator key file (give exactly twice)")
    p.add_argument("--threshold", default="count:4", help="count:N or bytes:N")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("verify-pass", help="run the challenge-response exchange")
    p.add_argument("--subject", required=True, help="subject key file")
    p.add_argument("--verifier", required=True, help="verifier key file")
    p.set_defaults(func=cmd_verify_pass)

    p = sub.add_parser("query-status", help="effective status for a public key")
    p.add_argument("--pub", required=True, help="subject public key, hex")
    p.set_defaults(func=cmd_query_status)

    p = sub.add_parser("alert", help="zone proximity alerts for a position")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--margin", type=float, default=100.0)
    p.set_defaults(func=cmd_alert)

    p = sub.add_parser("scenario", help="deterministic multi-node simulation")
    scen_sub = p.add_subparsers(dest="scenario_command", required=True)
    pr = scen_sub.add_parser("run", help="execute a scenario script")
    pr.add_argument("script", help="scenario script file")
    pr.add_argument("--seed", type=int, required=True)
    pr.add_argument("--threshold", default="count:4")
    pr.add_argument("--out", help="write the report to a file")
    pr.set_defaults(func=cmd_scenario_run)

    p = sub.add_parser("chain", help="chain maintenance")
    chain_sub = p.add_subparsers(dest="chain_command", required=True)
    pv = chain_sub.add_parser("validate", help="audit every link and signature")
    pv.set_defaults(func=cmd_chain_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except CovidChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
