"""A minimal proof-of-work chain.

Blocks carry a header (parent hash, Merkle root, nonce, timestamp) and an
ordered list of opaque transactions. Everything is SHA-256. The header is
serialized as ``parent_hash || merkle_root || nonce (8 bytes BE) || timestamp
(8 bytes BE)``.

This module is standalone: the probabilistic race in :mod:`wirelesspow.race`
does not mine real blocks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

NONCE_SPACE = 1 << 64
MAX_TARGET = (1 << 256) - 1
ZERO_HASH = bytes(32)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class Transaction:
    """Opaque (notionally signed) transaction content."""

    payload: bytes

    def __post_init__(self):
        if not isinstance(self.payload, (bytes, bytearray)):
            raise TypeError("payload must be bytes")
        if len(self.payload) == 0:
            raise ValueError("transaction payload must be non-empty")
        object.__setattr__(self, "payload", bytes(self.payload))

    @property
    def digest(self) -> bytes:
        return sha256(self.payload)


def _genesis_transaction() -> Transaction:
    # The genesis body is a single empty payload, which the public constructor forbids.
    tx = object.__new__(Transaction)
    object.__setattr__(tx, "payload", b"")
    return tx


@dataclass(frozen=True)
class BlockHeader:
    parent_hash: bytes
    merkle_root: bytes
    nonce: int
    timestamp: int

    def __post_init__(self):
        if len(self.parent_hash) != 32 or len(self.merkle_root) != 32:
            raise ValueError("digests must be 32 bytes")
        if not 0 <= self.nonce < NONCE_SPACE:
            raise ValueError("nonce must fit in 64 bits")
        if not 0 <= self.timestamp < NONCE_SPACE:
            raise ValueError("timestamp must be a non-negative 64-bit integer")

    def serialize(self) -> bytes:
        return (
            self.parent_hash
            + self.merkle_root
            + self.nonce.to_bytes(8, "big")
            + self.timestamp.to_bytes(8, "big")
        )

    def hash(self) -> bytes:
        return sha256(self.serialize())

    def hash_int(self) -> int:
        return int.from_bytes(self.hash(), "big")


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))

    def hash(self) -> bytes:
        return self.header.hash()


@dataclass(frozen=True)
class Verdict:
    """Outcome of a block check. ``reason`` is None when accepted."""

    accepted: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPT = Verdict(True)


def merkle_root(transactions: Sequence[Transaction]) -> bytes:
    """Root of the binary SHA-256 tree over the transaction payload hashes.

    Interior nodes hash the concatenation of their two children. A level with
    an odd number of nodes duplicates its last digest before pairing, so a
    single transaction's root is its own leaf hash.
    """
    if len(transactions) == 0:
        raise ValueError("no transactions")
    level = [tx.digest for tx in transactions]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def mine_block(
    parent_hash: bytes,
    transactions: Sequence[Transaction],
    target: int,
    timestamp: int,
    nonce_start: int = 0,
) -> Block:
    """Search nonces upward from ``nonce_start`` (wrapping at 2**64) until the
    header hash, read big-endian, is below ``target``."""
    if target <= 0:
        raise ValueError("target must be positive")
    if len(transactions) == 0:
        raise ValueError("no transactions")
    root = merkle_root(transactions)
    prefix = parent_hash + root
    suffix = timestamp.to_bytes(8, "big")
    nonce = nonce_start % NONCE_SPACE
    for _ in range(NONCE_SPACE):
        digest = sha256(prefix + nonce.to_bytes(8, "big") + suffix)
        if int.from_bytes(digest, "big") < target:
            header = BlockHeader(parent_hash, root, nonce, timestamp)
            return Block(header, tuple(transactions))
        nonce = (nonce + 1) % NONCE_SPACE
    raise RuntimeError("unminable at target")


def verify_block(block: Block, target: int, expected_parent: bytes) -> Verdict:
    """Check proof of work, parent linkage and Merkle commitment, in that order."""
    if block.header.hash_int() >= target:
        return Verdict(False, "target not met")
    if block.header.parent_hash != expected_parent:
        return Verdict(False, "parent mismatch")
    try:
        root = merkle_root(block.transactions)
    except ValueError:
        return Verdict(False, "no transactions")
    if block.header.merkle_root != root:
        return Verdict(False, "merkle mismatch")
    return ACCEPT


def genesis_block(timestamp: int = 0) -> Block:
    txs = (_genesis_transaction(),)
    header = BlockHeader(ZERO_HASH, merkle_root(txs), 0, timestamp)
    return Block(header, txs)


@dataclass(frozen=True)
class Chain:
    """Immutable chain value; ``blocks[0]`` is the genesis block."""

    target: int
    blocks: tuple[Block, ...] = field(default_factory=lambda: (genesis_block(),))

    def __post_init__(self):
        if not 0 < self.target <= MAX_TARGET:
            raise ValueError("target must be in (0, 2**256 - 1]")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("chain needs a genesis block")

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash()


def append_block(chain: Chain, block: Block) -> tuple[Chain, Verdict]:
    """Return ``(new_chain, verdict)``; the chain is returned unchanged on rejection."""
    verdict = verify_block(block, chain.target, chain.tip_hash)
    if not verdict:
        return chain, verdict
    return replace(chain, blocks=chain.blocks + (block,)), verdict


def validate_chain(chain: Chain) -> tuple[Optional[int], Optional[Verdict]]:
    """Walk the whole chain. Returns ``(None, None)`` if valid, else the first
    failing index and its verdict."""
    genesis = chain.blocks[0]
    if genesis.header.parent_hash != ZERO_HASH:
        return 0, Verdict(False, "parent mismatch")
    if genesis.header.merkle_root != merkle_root(genesis.transactions):
        return 0, Verdict(False, "merkle mismatch")
    for i in range(1, len(chain.blocks)):
        verdict = verify_block(chain.blocks[i], chain.target, chain.blocks[i - 1].hash())
        if not verdict:
            return i, verdict
    return None, None


def build_chain(
    bodies: Sequence[Sequence[Transaction]],
    target: int,
    start_timestamp: int = 1,
) -> Chain:
    """Mine one block per body on top of a fresh genesis block."""
    chain = Chain(target)
    for i, txs in enumerate(bodies):
        block = mine_block(chain.tip_hash, txs, target, start_timestamp + i)
        chain, verdict = append_block(chain, block)
        if not verdict:  # pragma: no cover - mine_block output always verifies
            raise RuntimeError(f"freshly mined block rejected: {verdict.reason}")
    return chain


def tamper_transaction(
    chain: Chain, block_index: int, tx_index: int, byte_index: int, new_value: int
) -> Chain:
    """Copy of ``chain`` with one payload byte overwritten in storage (headers untouched)."""
    block = chain.blocks[block_index]
    payload = bytearray(block.transactions[tx_index].payload)
    payload[byte_index] = new_value
    txs = list(block.transactions)
    txs[tx_index] = Transaction(bytes(payload))
    blocks = list(chain.blocks)
    blocks[block_index] = Block(block.header, tuple(txs))
    return replace(chain, blocks=tuple(blocks))


def chain_demo(target: int = 1 << 248, tamper_at: int = 2) -> dict:
    """Four mined blocks, one tampered transaction, and what verification reports."""
    bodies = [
        [Transaction(f"block{b}:tx{t}:pay {10 * b + t} to node{t}".encode()) for t in range(1, 5)]
        for b in range(1, 5)
    ]
    chain = build_chain(bodies, target)
    tampered = tamper_transaction(chain, tamper_at, 0, 0, chain.blocks[tamper_at].transactions[0].payload[0] ^ 0x01)
    index, verdict = validate_chain(tampered)
    clean_index, _ = validate_chain(chain)

    def render(c: Chain) -> list[dict]:
        return [
            {
                "height": i,
                "hash": b.hash().hex(),
                "parent_hash": b.header.parent_hash.hex(),
                "merkle_root": b.header.merkle_root.hex(),
                "merkle_recomputed": merkle_root(b.transactions).hex(),
                "nonce": b.header.nonce,
                "timestamp": b.header.timestamp,
                "transactions": [tx.payload.decode("utf-8", "replace") for tx in b.transactions],
            }
            for i, b in enumerate(c.blocks)
        ]

    return {
        "target": hex(target),
        "blocks": render(tampered),
        "tamper": {"block": tamper_at, "transaction": 0, "byte": 0},
        "original_valid": clean_index is None,
        "verification": {
            "valid": index is None,
            "failed_at": index,
            "reason": verdict.reason if verdict is not None else None,
        },
    }
