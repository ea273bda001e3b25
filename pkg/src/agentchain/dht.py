"""Sharded record storage and gossip across one app network.

Records an agent chooses to share are pushed to the peers closest to the
record key (XOR distance over hashed public keys). Every receiving peer
re-validates against its own blueprint copy before storing anything, and
issues a signed receipt when it does. Gossip rounds then keep redundancy up
as peers drop on and off, spread news claims (transfer announcements and
misbehavior reports), and never move privacy-restricted payloads beyond
their assigned neighborhood.

Reputation lives here too: validators score authors on every delivery, and
misbehavior reports are deduplicated by event so one offense costs the
offender exactly one penalty at every honest peer.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .canonical import Writer
from .chain import (
    DnaDocument,
    Record,
    SourceChain,
    decode_record,
    encode_dna,
    encode_record,
    init_chain,
    record_key,
)
from .crypto import KeyPair, generate_keypair, hash_bytes, sign, verify
from .metrics import Metrics
from .reputation import (
    ExperienceMatrix,
    ObservationKind,
    is_blacklisted,
    update_experience,
)
from .validation import Marketplace, authenticate_channel, validation_work

DEFAULT_FANOUT = 2
DEFAULT_RATE_LIMIT = 100
DEFAULT_BACKUP_FACTOR = 2.0

# DNA param key listing entry-type prefixes that must never replicate
# beyond the static neighborhood (privacy cap)
RESTRICTED_PREFIX_PARAM = "dht.restricted_prefixes"


class DhtError(Exception):
    pass


class CrossNetworkError(DhtError):
    """Record or agent belongs to a different network id."""


# ---------------------------------------------------------------------------
# news claims

CLAIM_TRANSFER = "transfer"
CLAIM_MISBEHAVIOR = "misbehavior"
CLAIM_REVOKE = "revoke"


@dataclass(frozen=True)
class NewsClaim:
    """A small fact agents pass around.

    transfer claims announce (tx_id, sender, sender_prev_tx) so later
    spends of the same prior state are auditable. misbehavior claims name
    an offender and the offending subject; their id excludes the reporter,
    so the same event reported by many observers applies once per peer.
    """

    kind: str
    subject: bytes  # tx_id for transfers, event digest for misbehavior
    agent: bytes  # tx sender / offender
    extra: bytes = b""  # sender_prev_tx for transfers
    detail: str = ""

    def claim_id(self) -> bytes:
        w = Writer()
        w.u8(ord("N"))
        w.string(self.kind)
        w.digest(self.subject)
        w.lp_bytes(self.agent)
        w.lp_bytes(self.extra)
        w.string(self.detail)
        return hash_bytes(w.getvalue())


def transfer_claim(tx_id: bytes, sender: bytes, sender_prev_tx: bytes) -> NewsClaim:
    return NewsClaim(CLAIM_TRANSFER, tx_id, sender, sender_prev_tx)


def misbehavior_claim(offender: bytes, violation: ObservationKind, subject: bytes) -> NewsClaim:
    return NewsClaim(CLAIM_MISBEHAVIOR, subject, offender, detail=violation.value)


def revoke_claim(revoke_record_key: bytes, author: bytes, token: bytes) -> NewsClaim:
    """Hint that a revocation record exists. Unverified on its own: holders
    must resolve the named record and check it before denying anything."""
    return NewsClaim(CLAIM_REVOKE, revoke_record_key, author, extra=token)


_VIOLATION_BY_NAME = {k.value: k for k in ObservationKind}


@dataclass(frozen=True)
class Receipt:
    """A holder's signed acknowledgement that it stored a record."""

    holder: bytes
    key: bytes
    signature: bytes


def receipt_signing_bytes(key: bytes) -> bytes:
    return b"rcpt:" + key


@dataclass(frozen=True)
class GossipMessage:
    """Signed wire envelope. payload layout depends on kind."""

    kind: str
    sender: bytes
    payload: bytes
    signature: bytes


def envelope_signing_bytes(kind: str, payload: bytes) -> bytes:
    return kind.encode("utf-8") + b"\x00" + payload


def make_envelope(keys: KeyPair, kind: str, payload: bytes) -> GossipMessage:
    return GossipMessage(
        kind=kind,
        sender=keys.public_key,
        payload=payload,
        signature=sign(keys, envelope_signing_bytes(kind, payload)),
    )


def envelope_valid(msg: GossipMessage) -> bool:
    return verify(msg.sender, envelope_signing_bytes(msg.kind, msg.payload), msg.signature)


# ---------------------------------------------------------------------------
# agents

@dataclass
class StoredRecord:
    record: Record
    key: bytes


@dataclass
class Agent:
    """One network participant: identity, chain, shard, scores, news."""

    index: int
    keys: KeyPair
    chain: SourceChain
    online: bool = True
    pinned_presence: bool = False  # scripted on/off overrides churn
    experience: ExperienceMatrix = field(default_factory=ExperienceMatrix)
    shard: dict[bytes, StoredRecord] = field(default_factory=dict)
    news: dict[bytes, NewsClaim] = field(default_factory=dict)
    published: set[bytes] = field(default_factory=set)
    chain_keys: dict[bytes, int] = field(default_factory=dict)
    receipts: dict[bytes, list[Receipt]] = field(default_factory=dict)
    inbox: list = field(default_factory=list)  # app-level deliveries (access results)
    rate_window: dict[bytes, int] = field(default_factory=dict)
    adversary: str | None = None
    node_id: int = 0

    def __post_init__(self) -> None:
        self.node_id = int.from_bytes(hash_bytes(self.keys.public_key), "big")
        self.reindex_chain()

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

    @property
    def dna_hash(self) -> bytes:
        return self.chain.dna_hash

    def reindex_chain(self) -> None:
        self.chain_keys = {record_key(r): r.header.seq for r in self.chain.records}

    def note_appended(self, record: Record) -> None:
        self.chain_keys[record_key(record)] = record.header.seq

    def append(self, entry_type: str, payload: bytes | dict, clock: int) -> Record:
        from .chain import append_entry

        record = append_entry(self.chain, entry_type, payload, clock)
        self.note_appended(record)
        return record

    def holds(self, key: bytes) -> bool:
        return key in self.shard or key in self.chain_keys

    def lookup(self, key: bytes) -> Record | None:
        stored = self.shard.get(key)
        if stored is not None:
            return stored.record
        seq = self.chain_keys.get(key)
        if seq is not None:
            return self.chain.records[seq]
        return None


def make_agent(
    index: int,
    seed: bytes,
    dna: DnaDocument,
    clock: int = 0,
    blacklist_threshold: float | None = None,
    membrane_proof: bytes | None = None,
) -> Agent:
    keys = generate_keypair(seed)
    chain = init_chain(keys, dna, clock, membrane_proof)
    agent = Agent(index=index, keys=keys, chain=chain)
    if blacklist_threshold is not None:
        agent.experience.blacklist_threshold = blacklist_threshold
    return agent


def agent_seed(run_seed: int, index: int) -> bytes:
    """Stable per-agent key seed derived from the run seed."""
    w = Writer()
    w.u64(run_seed & (2**64 - 1))
    w.u32(index)
    return hash_bytes(w.getvalue())


# ---------------------------------------------------------------------------
# the network

def xor_distance(node_id: int, key: bytes) -> int:
    return node_id ^ int.from_bytes(key, "big")


class Network:
    """All peers sharing one blueprint, plus the shared metrics sink."""

    def __init__(
        self,
        dna: DnaDocument,
        marketplace: Marketplace,
        metrics: Metrics | None = None,
        fanout: int = DEFAULT_FANOUT,
        rate_limit: int = DEFAULT_RATE_LIMIT,
        backup_factor: float = DEFAULT_BACKUP_FACTOR,
        witness_count: int = 8,
        audit_samples: int = 8,
        register: bool = True,
    ) -> None:
        self.dna = dna
        self.network_id = hash_bytes(encode_dna(dna))
        if register:
            marketplace.register(dna)
        self.marketplace = marketplace
        self.metrics = metrics if metrics is not None else Metrics()
        self.fanout = fanout
        self.rate_limit = rate_limit
        self.backup_factor = backup_factor
        self.witness_count = witness_count
        self.audit_samples = audit_samples
        self.agents: list[Agent] = []
        self.redundancy = dna.dht_redundancy
        # hooks see (kind, sender, receiver, payload) and may mutate payload
        self.wire_hooks: list[Callable[[str, Agent, Agent, bytes], bytes]] = []
        self._restricted = tuple(p for p in dna.param(RESTRICTED_PREFIX_PARAM).split(",") if p)
        self.current_tick = 0

    def join(self, agent: Agent) -> None:
        if agent.dna_hash != self.network_id:
            raise CrossNetworkError("agent bootstrapped under a different blueprint")
        self.agents.append(agent)

    def begin_tick(self, tick: int | None = None) -> None:
        if tick is not None:
            self.current_tick = tick
        for agent in self.agents:
            agent.rate_window.clear()

    # -- topology ----------------------------------------------------------

    def neighborhood(self, key: bytes, r: int | None = None) -> list[Agent]:
        """The min(r, n) agents nearest to key, online or not, stable order."""
        r = self.redundancy if r is None else r
        ranked = sorted(self.agents, key=lambda a: xor_distance(a.node_id, key))
        return ranked[: max(0, min(r, len(ranked)))]

    def is_restricted(self, entry_type: str) -> bool:
        return any(entry_type.startswith(p) for p in self._restricted)

    def backup_targets(self, key: bytes, record: Record) -> list[Agent]:
        """Who should hold this record right now.

        Privacy-restricted types never leave the static neighborhood.
        Everything else re-targets the nearest currently-online peers, with
        headroom over the bare redundancy target so flapping holders do not
        leave a record unreachable.
        """
        if self.is_restricted(record.header.entry_type):
            return self.neighborhood(key)
        online = [a for a in self.agents if a.online]
        online.sort(key=lambda a: xor_distance(a.node_id, key))
        want = min(len(online), math.ceil(self.redundancy * self.backup_factor))
        return online[:want]

    # -- reputation plumbing ------------------------------------------------

    def _note_violation(self, observer: Agent, claim: NewsClaim) -> None:
        """Apply a misbehavior claim at observer exactly once, and keep it
        for further gossip. Offenders do not score themselves."""
        cid = claim.claim_id()
        if cid in observer.news:
            return
        observer.news[cid] = claim
        self.metrics.news_claims += 1
        if claim.agent == observer.public_key:
            return
        was = is_blacklisted(observer.experience, claim.agent)
        update_experience(
            observer.experience, claim.agent, _VIOLATION_BY_NAME[claim.detail]
        )
        if not was and is_blacklisted(observer.experience, claim.agent):
            self.metrics.blacklist_events += 1

    def _accept_claim(self, receiver: Agent, claim: NewsClaim) -> None:
        if claim.kind == CLAIM_MISBEHAVIOR:
            self._note_violation(receiver, claim)
            return
        cid = claim.claim_id()
        if cid not in receiver.news:
            receiver.news[cid] = claim
            self.metrics.news_claims += 1

    def _rate_exceeded(self, receiver: Agent, sender_key: bytes) -> bool:
        count = receiver.rate_window.get(sender_key, 0) + 1
        receiver.rate_window[sender_key] = count
        if count <= self.rate_limit:
            return False
        # one flood event per (sender, victim, tick); dedup via claim id
        w = Writer()
        w.u8(ord("W"))
        w.lp_bytes(sender_key)
        w.lp_bytes(receiver.public_key)
        w.u64(self.current_tick)
        claim = misbehavior_claim(
            sender_key, ObservationKind.INVALID_DATA, hash_bytes(w.getvalue())
        )
        self._note_violation(receiver, claim)
        return True

    # -- publish / fetch -----------------------------------------------------

    def publish(self, author: Agent, record: Record) -> list[Receipt]:
        """Push one of the author's own records to its validator neighborhood.

        The record must already sit on the author's chain. Each online
        validator independently authenticates the channel with its own
        blueprint copy; storing yields a signed receipt, anything invalid
        is rejected and scored against the author.
        """
        if author.dna_hash != self.network_id:
            raise CrossNetworkError("author does not belong to this network")
        key = record_key(record)
        if key not in author.chain_keys:
            raise DhtError("record is not on the author's chain")
        author.published.add(key)
        payload = self._publish_payload(self.network_id, record)
        envelope = make_envelope(author.keys, "publish", payload)
        receipts: list[Receipt] = []
        for validator in self.neighborhood(key):
            self.metrics.messages += 1
            if not validator.online:
                update_experience(author.experience, validator.public_key, ObservationKind.UNAVAILABLE)
                continue
            receipt = self._deliver_publish(author, validator, envelope)
            if receipt is not None:
                receipts.append(receipt)
        author.receipts.setdefault(key, []).extend(receipts)
        return receipts

    @staticmethod
    def _publish_payload(app_id: bytes, record: Record) -> bytes:
        w = Writer()
        w.digest(app_id)
        w.lp_bytes(encode_record(record))
        return w.getvalue()

    @staticmethod
    def _parse_publish_payload(payload: bytes) -> tuple[bytes, Record]:
        from .canonical import Reader

        r = Reader(payload)
        app_id = r.digest()
        record = decode_record(r.lp_bytes())
        r.finish()
        return app_id, record

    def _deliver_publish(
        self, sender: Agent, validator: Agent, envelope: GossipMessage
    ) -> Receipt | None:
        payload = envelope.payload
        for hook in self.wire_hooks:
            payload = hook("publish", sender, validator, payload)
        if is_blacklisted(validator.experience, envelope.sender):
            self.metrics.rejections += 1
            return None
        if self._rate_exceeded(validator, envelope.sender):
            self.metrics.rejections += 1
            return None
        if payload is not envelope.payload:
            envelope = GossipMessage(envelope.kind, envelope.sender, payload, envelope.signature)
        if not envelope_valid(envelope):
            # bytes changed in flight; nobody provably sent this, so reject
            # without scoring anyone
            self.metrics.rejections += 1
            return None
        try:
            app_id, record = self._parse_publish_payload(envelope.payload)
        except Exception:
            self.metrics.rejections += 1
            return None
        key = record_key(record)
        if app_id != self.network_id:
            # a record addressed to some other network has no business in
            # this DHT even if that network is registered; the shipper owns
            # the misdirection
            self.metrics.rejections += 1
            self._note_violation(
                validator, misbehavior_claim(envelope.sender, ObservationKind.INVALID_DATA, key)
            )
            return None
        verdict = authenticate_channel(
            record, validator.chain.dna, self.marketplace, app_id=app_id,
            ctx=self._rule_context(validator),
        )
        self.metrics.validations += 1
        self.metrics.validation_work += validation_work(validator.chain.dna, record.header.entry_type)
        if not verdict.valid:
            self.metrics.rejections += 1
            # blame the proven shipper, not the claimed author: a relay
            # pushing someone else's bytes owns what it sends
            claim = misbehavior_claim(envelope.sender, ObservationKind.INVALID_DATA, key)
            self._note_violation(validator, claim)
            return None
        if key not in validator.shard:
            validator.shard[key] = StoredRecord(record=record, key=key)
            self.metrics.stores += 1
            update_experience(validator.experience, record.header.author, ObservationKind.VALID_OK)
        return Receipt(
            holder=validator.public_key,
            key=key,
            signature=sign(validator.keys, receipt_signing_bytes(key)),
        )

    def _rule_context(self, validator: Agent):
        from .validation import RuleContext

        def resolve(key: bytes) -> Record | None:
            local = validator.lookup(key)
            if local is not None:
                return local
            return self.fetch(validator, key, count_messages=False)

        return RuleContext(
            resolve=resolve,
            credit_limit=int(validator.chain.dna.param("fuel.credit_limit", "0")),
        )

    def fetch(self, requester: Agent, key: bytes, count_messages: bool = True) -> Record | None:
        """Look a record up by key: own holdings first, then online holders
        nearest the key. Returns None when no online peer has it."""
        local = requester.lookup(key)
        if local is not None:
            return local
        ranked = sorted(self.agents, key=lambda a: xor_distance(a.node_id, key))
        for holder in ranked:
            if holder is requester:
                continue
            if count_messages:
                self.metrics.messages += 1
            if not holder.online:
                continue
            found = holder.lookup(key)
            if found is not None:
                return found
        return None

    # -- claims ---------------------------------------------------------------

    def send_claim(self, sender: Agent, receiver: Agent, claim: NewsClaim) -> bool:
        """Deliver one news claim directly (used to seed transfer witnesses)."""
        self.metrics.messages += 1
        if not receiver.online:
            return False
        if is_blacklisted(receiver.experience, sender.public_key):
            self.metrics.rejections += 1
            return False
        if self._rate_exceeded(receiver, sender.public_key):
            self.metrics.rejections += 1
            return False
        self._accept_claim(receiver, claim)
        return True

    # -- gossip ---------------------------------------------------------------

    def gossip_round(self, rng: random.Random) -> int:
        """One epidemic round: every online agent syncs with fanout random
        online peers. Claims flow both ways; records flow to peers that
        currently belong in their holder set. Returns the contact count."""
        online = [a for a in self.agents if a.online]
        contacts: list[tuple[Agent, Agent]] = []
        for agent in self.agents:
            if not agent.online:
                continue
            peers = [p for p in online if p is not agent]
            if not peers:
                continue
            picked = rng.sample(peers, min(self.fanout, len(peers)))
            for peer in picked:
                contacts.append((agent, peer))
        for a, b in contacts:
            self.metrics.messages += 1
            self._exchange(a, b)
        return len(contacts)

    def _exchange(self, a: Agent, b: Agent) -> None:
        if is_blacklisted(a.experience, b.public_key) or is_blacklisted(
            b.experience, a.public_key
        ):
            self.metrics.rejections += 1
            return
        if self._rate_exceeded(b, a.public_key) or self._rate_exceeded(a, b.public_key):
            self.metrics.rejections += 1
            return
        self._sync_claims(a, b)
        self._sync_claims(b, a)
        self._sync_records(a, b)
        self._sync_records(b, a)

    def _sync_claims(self, src: Agent, dst: Agent) -> None:
        for cid in sorted(src.news):
            if cid not in dst.news:
                self._accept_claim(dst, src.news[cid])

    def _sync_records(self, src: Agent, dst: Agent) -> None:
        candidates = sorted(set(src.shard) | src.published)
        for key in candidates:
            if dst.holds(key):
                continue
            record = src.lookup(key)
            if record is None:
                continue
            targets = self.backup_targets(key, record)
            if dst not in targets:
                continue
            verdict = authenticate_channel(
                record, dst.chain.dna, self.marketplace, app_id=self.network_id,
                ctx=self._rule_context(dst),
            )
            self.metrics.validations += 1
            self.metrics.validation_work += validation_work(dst.chain.dna, record.header.entry_type)
            if not verdict.valid:
                self.metrics.rejections += 1
                # the forwarder shipped bad data
                claim = misbehavior_claim(src.public_key, ObservationKind.INVALID_DATA, key)
                self._note_violation(dst, claim)
                continue
            dst.shard[key] = StoredRecord(record=record, key=key)
            self.metrics.stores += 1
            self.metrics.backup_transfers += 1
            update_experience(dst.experience, record.header.author, ObservationKind.VALID_OK)

    # -- integrity sweeps -------------------------------------------------------

    def holders_of(self, key: bytes) -> list[Agent]:
        return [a for a in self.agents if a.holds(key)]

    def assert_shards_validated(self) -> None:
        """Every stored record must still authenticate. Safety net assertion."""
        for agent in self.agents:
            for key in sorted(agent.shard):
                record = agent.shard[key].record
                verdict = authenticate_channel(
                    record, agent.chain.dna, self.marketplace,
                    app_id=self.network_id, ctx=self._rule_context(agent),
                )
                if not verdict.valid:
                    raise AssertionError(
                        f"agent {agent.index} shard holds invalid record "
                        f"{key.hex()[:12]}: {verdict.reason.value}"
                    )
