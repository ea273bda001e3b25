"""Per-agent signed append-only chains.

Every agent keeps its own log. Record 0 is the app blueprint (the DNA: entry
type definitions, validation rule ids, storage parameters); its digest is the
network id. Record 1 is the genesis entry binding the agent's public key to
that blueprint. Everything after that is application data. Headers are
hash-linked and individually signed, so any rewrite of history is detectable
from public material alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import canonical
from .canonical import EncodingError, Reader, Writer
from .crypto import (
    DIGEST_SIZE,
    HASH_ALG_ID,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    ZERO_DIGEST,
    KeyPair,
    hash_bytes,
    sign,
    verify,
)

# entry types written by the bootstrap path only
DNA_TYPE = "dna"
GENESIS_TYPE = "genesis"
SYSTEM_TYPES = (DNA_TYPE, GENESIS_TYPE)

COST_LIGHT = "light"
COST_STANDARD = "standard"
COST_HEAVY = "heavy"
# simulated work units per validation, by cost class
COST_UNITS = {COST_LIGHT: 1, COST_STANDARD: 4, COST_HEAVY: 16}


class ChainError(ValueError):
    """Structural misuse of a source chain (bad DNA, bad clock, bad type)."""


@dataclass(frozen=True)
class EntryTypeDef:
    """One entry type an app accepts: payload shape plus validation rules."""

    type_name: str
    payload_schema: tuple[tuple[str, str], ...]
    rule_ids: tuple[str, ...]
    validation_cost_class: str = COST_STANDARD

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "payload_schema", tuple((str(f), str(t)) for f, t in self.payload_schema)
        )
        object.__setattr__(self, "rule_ids", tuple(str(r) for r in self.rule_ids))
        if self.validation_cost_class not in COST_UNITS:
            raise ChainError(f"unknown cost class {self.validation_cost_class!r}")


@dataclass(frozen=True)
class DnaDocument:
    """App blueprint. Its canonical-encoding digest is the network id."""

    app_name: str
    description: str
    entry_type_defs: tuple[EntryTypeDef, ...]
    validation_function_ids: tuple[str, ...] = ()
    params: tuple[tuple[str, str], ...] = ()
    dht_redundancy: int = 4
    dht_neighborhood_rule: str = "xor-distance"
    hash_alg_id: str = HASH_ALG_ID

    def __post_init__(self) -> None:
        object.__setattr__(self, "entry_type_defs", tuple(self.entry_type_defs))
        object.__setattr__(
            self, "validation_function_ids", tuple(str(v) for v in self.validation_function_ids)
        )
        params = self.params.items() if isinstance(self.params, dict) else self.params
        object.__setattr__(self, "params", tuple(sorted((str(k), str(v)) for k, v in params)))

    def entry_type(self, name: str) -> EntryTypeDef | None:
        for etd in self.entry_type_defs:
            if etd.type_name == name:
                return etd
        return None

    def param(self, key: str, default: str = "") -> str:
        for k, v in self.params:
            if k == key:
                return v
        return default


def validate_dna(dna: DnaDocument) -> None:
    """Reject blueprints the chain layer cannot work with."""
    if not dna.app_name:
        raise ChainError("DNA app_name must be nonempty")
    if not dna.entry_type_defs:
        raise ChainError("DNA must define at least one entry type")
    names = [etd.type_name for etd in dna.entry_type_defs]
    if len(names) != len(set(names)):
        raise ChainError("duplicate entry type names in DNA")
    for name in names:
        if not name or name in SYSTEM_TYPES:
            raise ChainError(f"entry type name {name!r} is reserved or empty")
    if dna.dht_redundancy < 1:
        raise ChainError("DNA dht_redundancy must be >= 1")


def encode_dna(dna: DnaDocument) -> bytes:
    w = Writer()
    w.u8(ord("D"))
    w.string(dna.app_name)
    w.string(dna.description)
    w.u32(len(dna.entry_type_defs))
    for etd in dna.entry_type_defs:
        w.string(etd.type_name)
        w.u32(len(etd.payload_schema))
        for fname, ftype in etd.payload_schema:
            w.string(fname)
            w.string(ftype)
        w.u32(len(etd.rule_ids))
        for rule in etd.rule_ids:
            w.string(rule)
        w.string(etd.validation_cost_class)
    w.u32(len(dna.validation_function_ids))
    for vfid in dna.validation_function_ids:
        w.string(vfid)
    w.u32(len(dna.params))
    for key, value in dna.params:
        w.string(key)
        w.string(value)
    w.u32(dna.dht_redundancy)
    w.string(dna.dht_neighborhood_rule)
    w.string(dna.hash_alg_id)
    return w.getvalue()


def decode_dna(data: bytes) -> DnaDocument:
    r = Reader(data)
    if r.u8() != ord("D"):
        raise EncodingError("not a DNA encoding")
    app_name = r.string()
    description = r.string()
    defs = []
    for _ in range(r.u32()):
        type_name = r.string()
        schema = tuple((r.string(), r.string()) for _ in range(r.u32()))
        rules = tuple(r.string() for _ in range(r.u32()))
        cost = r.string()
        defs.append(EntryTypeDef(type_name, schema, rules, cost))
    vfids = tuple(r.string() for _ in range(r.u32()))
    params = tuple((r.string(), r.string()) for _ in range(r.u32()))
    redundancy = r.u32()
    rule = r.string()
    alg = r.string()
    r.finish()
    return DnaDocument(app_name, description, tuple(defs), vfids, params, redundancy, rule, alg)


def dna_to_dict(dna: DnaDocument) -> dict:
    """JSON-compatible form, used by config files and fork tests."""
    return {
        "app_name": dna.app_name,
        "description": dna.description,
        "entry_types": [
            {
                "name": etd.type_name,
                "schema": [[f, t] for f, t in etd.payload_schema],
                "rules": list(etd.rule_ids),
                "cost": etd.validation_cost_class,
            }
            for etd in dna.entry_type_defs
        ],
        "validation_function_ids": list(dna.validation_function_ids),
        "params": {k: v for k, v in dna.params},
        "dht": {"redundancy": dna.dht_redundancy, "neighborhood_rule": dna.dht_neighborhood_rule},
        "hash_alg": dna.hash_alg_id,
    }


def dna_from_dict(doc: dict) -> DnaDocument:
    try:
        dna = DnaDocument(
            app_name=doc["app_name"],
            description=doc.get("description", ""),
            entry_type_defs=tuple(
                EntryTypeDef(
                    type_name=et["name"],
                    payload_schema=tuple((f, t) for f, t in et.get("schema", [])),
                    rule_ids=tuple(et.get("rules", [])),
                    validation_cost_class=et.get("cost", COST_STANDARD),
                )
                for et in doc["entry_types"]
            ),
            validation_function_ids=tuple(doc.get("validation_function_ids", [])),
            params=tuple(sorted(doc.get("params", {}).items())),
            dht_redundancy=int(doc.get("dht", {}).get("redundancy", 4)),
            dht_neighborhood_rule=doc.get("dht", {}).get("neighborhood_rule", "xor-distance"),
            hash_alg_id=doc.get("hash_alg", HASH_ALG_ID),
        )
    except (KeyError, TypeError) as exc:
        raise ChainError(f"bad DNA document: {exc}") from exc
    validate_dna(dna)
    return dna


@dataclass(frozen=True)
class GenesisRecord:
    """Second chain entry: ties an agent key to a network id."""

    dna_hash: bytes
    agent_id: bytes
    membrane_proof: bytes | None = None


def encode_genesis(gen: GenesisRecord) -> bytes:
    w = Writer()
    w.u8(ord("G"))
    w.digest(gen.dna_hash)
    w.lp_bytes(gen.agent_id)
    if gen.membrane_proof is None:
        w.u8(0)
    else:
        w.u8(1)
        w.lp_bytes(gen.membrane_proof)
    return w.getvalue()


def decode_genesis(data: bytes) -> GenesisRecord:
    r = Reader(data)
    if r.u8() != ord("G"):
        raise EncodingError("not a genesis encoding")
    dna_hash = r.digest()
    agent_id = r.lp_bytes()
    proof = r.lp_bytes() if r.u8() == 1 else None
    r.finish()
    return GenesisRecord(dna_hash, agent_id, proof)


@dataclass(frozen=True)
class EntryHeader:
    seq: int
    timestamp: int
    entry_type: str
    entry_hash: bytes
    author: bytes
    prev_header_hash: bytes
    signature: bytes


def _header_writer(h: EntryHeader, with_signature: bool) -> bytes:
    w = Writer()
    w.u8(ord("H"))
    w.u64(h.seq)
    w.u64(h.timestamp)
    w.string(h.entry_type)
    w.digest(h.entry_hash)
    w.lp_bytes(h.author)
    w.digest(h.prev_header_hash)
    if with_signature:
        w.lp_bytes(h.signature)
    return w.getvalue()


def header_signing_bytes(h: EntryHeader) -> bytes:
    """What the author signs: the full header minus the signature field."""
    return _header_writer(h, with_signature=False)


def encode_header(h: EntryHeader) -> bytes:
    return _header_writer(h, with_signature=True)


def _read_header(r: Reader) -> EntryHeader:
    if r.u8() != ord("H"):
        raise EncodingError("not a header encoding")
    seq = r.u64()
    timestamp = r.u64()
    entry_type = r.string()
    entry_hash = r.digest()
    author = r.lp_bytes()
    prev = r.digest()
    signature = r.lp_bytes()
    if len(author) != PUBLIC_KEY_SIZE:
        raise EncodingError("author key has wrong size")
    if len(signature) != SIGNATURE_SIZE:
        raise EncodingError("signature has wrong size")
    return EntryHeader(seq, timestamp, entry_type, entry_hash, author, prev, signature)


def decode_header(data: bytes) -> EntryHeader:
    r = Reader(data)
    h = _read_header(r)
    r.finish()
    return h


@dataclass(frozen=True)
class Record:
    """One chain element: signed header plus the payload bytes it commits to."""

    header: EntryHeader
    payload: bytes


def encode_record(record: Record) -> bytes:
    w = Writer()
    w.u8(ord("R"))
    w.lp_bytes(encode_header(record.header))
    w.lp_bytes(record.payload)
    return w.getvalue()


def decode_record(data: bytes) -> Record:
    r = Reader(data)
    if r.u8() != ord("R"):
        raise EncodingError("not a record encoding")
    header = decode_header(r.lp_bytes())
    payload = r.lp_bytes()
    r.finish()
    return Record(header, payload)


def record_key(record: Record) -> bytes:
    """Content address of a full record; doubles as its storage key."""
    return hash_bytes(encode_record(record))


def header_hash(header: EntryHeader) -> bytes:
    return hash_bytes(encode_header(header))


@dataclass
class SourceChain:
    """A live, writable chain owned by a keypair."""

    owner: KeyPair
    dna: DnaDocument
    records: list[Record] = field(default_factory=list)

    @property
    def dna_hash(self) -> bytes:
        return hash_bytes(encode_dna(self.dna))

    def __len__(self) -> int:
        return len(self.records)


def _append_raw(chain: SourceChain, entry_type: str, payload: bytes, clock: int) -> Record:
    if chain.records:
        last = chain.records[-1].header
        if clock < last.timestamp:
            raise ChainError(f"clock went backwards: {clock} < {last.timestamp}")
        prev = header_hash(last)
        seq = last.seq + 1
    else:
        prev = ZERO_DIGEST
        seq = 0
    unsigned = EntryHeader(
        seq=seq,
        timestamp=clock,
        entry_type=entry_type,
        entry_hash=hash_bytes(payload),
        author=chain.owner.public_key,
        prev_header_hash=prev,
        signature=b"\x00" * SIGNATURE_SIZE,
    )
    signed = EntryHeader(
        seq=unsigned.seq,
        timestamp=unsigned.timestamp,
        entry_type=unsigned.entry_type,
        entry_hash=unsigned.entry_hash,
        author=unsigned.author,
        prev_header_hash=unsigned.prev_header_hash,
        signature=sign(chain.owner, header_signing_bytes(unsigned)),
    )
    record = Record(signed, bytes(payload))
    chain.records.append(record)
    return record


def init_chain(
    owner: KeyPair,
    dna: DnaDocument,
    clock: int = 0,
    membrane_proof: bytes | None = None,
) -> SourceChain:
    """Bootstrap a chain: blueprint first, then the genesis self-binding."""
    validate_dna(dna)
    chain = SourceChain(owner=owner, dna=dna)
    dna_payload = encode_dna(dna)
    _append_raw(chain, DNA_TYPE, dna_payload, clock)
    genesis = GenesisRecord(
        dna_hash=hash_bytes(dna_payload),
        agent_id=owner.public_key,
        membrane_proof=membrane_proof,
    )
    _append_raw(chain, GENESIS_TYPE, encode_genesis(genesis), clock)
    return chain


def append_entry(
    chain: SourceChain, entry_type: str, payload: bytes | dict, clock: int
) -> Record:
    """Sign and append one app entry. The entry type must exist in the DNA."""
    if entry_type in SYSTEM_TYPES:
        raise ChainError(f"{entry_type!r} is written by init_chain only")
    if chain.dna.entry_type(entry_type) is None:
        raise ChainError(f"entry type {entry_type!r} not defined in DNA")
    if len(chain.records) < 2:
        raise ChainError("chain is not bootstrapped")
    if isinstance(payload, dict):
        payload = canonical.encode_fields(payload)
    return _append_raw(chain, entry_type, payload, clock)


def head(chain: SourceChain) -> bytes:
    """Digest of the newest header."""
    if not chain.records:
        raise ChainError("empty chain has no head")
    return header_hash(chain.records[-1].header)


def get_record(chain: SourceChain, seq: int) -> Record:
    if not 0 <= seq < len(chain.records):
        raise IndexError(f"seq {seq} out of range 0..{len(chain.records) - 1}")
    return chain.records[seq]


# ---------------------------------------------------------------------------
# integrity verification (works on public material only)

REASON_STRUCTURE = "structure"
REASON_AUTHOR = "author"
REASON_LINK = "link"
REASON_ENTRY_HASH = "entry_hash"
REASON_SIGNATURE = "signature"
REASON_HEAD = "head"


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    first_failure_index: int | None = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_records(
    records: list[Record], expected_head: bytes | None = None
) -> VerificationReport:
    """Walk a chain front to back; report the first broken record.

    Checks, in order per record: sequence/bootstrap structure, author
    exclusivity, previous-header link, payload hash, header signature.

    Internal checks cannot see pure tail truncation (a shortened chain is
    still self-consistent), so callers holding the author's last announced
    head should pass it as expected_head to pin the newest record.
    """
    if len(records) < 2:
        return VerificationReport(False, 0, REASON_STRUCTURE)
    owner = records[0].header.author
    prev_bytes: bytes | None = None
    for i, record in enumerate(records):
        h = record.header
        if h.seq != i:
            return VerificationReport(False, i, REASON_STRUCTURE)
        if i == 0 and h.entry_type != DNA_TYPE:
            return VerificationReport(False, i, REASON_STRUCTURE)
        if i == 1:
            if h.entry_type != GENESIS_TYPE:
                return VerificationReport(False, i, REASON_STRUCTURE)
            try:
                genesis = decode_genesis(record.payload)
            except EncodingError:
                return VerificationReport(False, i, REASON_STRUCTURE)
            if genesis.dna_hash != hash_bytes(records[0].payload):
                return VerificationReport(False, i, REASON_STRUCTURE)
            if genesis.agent_id != owner:
                return VerificationReport(False, i, REASON_STRUCTURE)
        if i > 1 and h.entry_type in SYSTEM_TYPES:
            return VerificationReport(False, i, REASON_STRUCTURE)
        if i > 0 and h.timestamp < records[i - 1].header.timestamp:
            return VerificationReport(False, i, REASON_STRUCTURE)
        if h.author != owner:
            return VerificationReport(False, i, REASON_AUTHOR)
        expected_prev = ZERO_DIGEST if i == 0 else hash_bytes(prev_bytes)
        if h.prev_header_hash != expected_prev:
            return VerificationReport(False, i, REASON_LINK)
        if h.entry_hash != hash_bytes(record.payload):
            return VerificationReport(False, i, REASON_ENTRY_HASH)
        if not verify(h.author, header_signing_bytes(h), h.signature):
            return VerificationReport(False, i, REASON_SIGNATURE)
        prev_bytes = encode_header(h)
    if expected_head is not None and header_hash(records[-1].header) != expected_head:
        return VerificationReport(False, len(records) - 1, REASON_HEAD)
    return VerificationReport(True)


def verify_chain(chain: SourceChain) -> VerificationReport:
    return verify_records(chain.records)


# ---------------------------------------------------------------------------
# export format: one lowercase-hex canonical record per line

def export_records(records: list[Record]) -> str:
    return "".join(encode_record(r).hex() + "\n" for r in records)


def parse_chain_text(text: str) -> list[Record]:
    """Inverse of export_records; raises EncodingError on any malformed line."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = bytes.fromhex(line)
        except ValueError as exc:
            raise EncodingError(f"line {lineno}: not hex: {exc}") from exc
        records.append(decode_record(raw))
    return records
