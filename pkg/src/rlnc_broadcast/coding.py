"""Block coding: RLNC over GF(2^q), rank-tracking decoding, and the decode
models used by the simulator.

Three decode models are supported:

``Idealized(k)``
    a user decodes as soon as it has received k packets.
``RankBased(k, d)``
    a user decodes when its received coefficient rows reach rank k over GF(d).
``LtThreshold(k, delta, c)``
    a user needs ``lt_threshold(k, delta, c)`` receptions and then decodes
    with probability ``1 - delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .gf import GF, field as gf_field


@dataclass
class CodedPacket:
    coefficients: np.ndarray
    payload: np.ndarray


def encode(block: np.ndarray, rng: np.random.Generator, d: int = 256) -> CodedPacket:
    """Random linear combination of the rows of ``block`` (k source packets x m symbols)."""
    F = gf_field(d)
    block = np.atleast_2d(np.asarray(block, dtype=np.uint8))
    k = block.shape[0]
    if k == 0:
        raise ValueError("cannot encode an empty block")
    if block.max(initial=0) >= d:
        raise DomainError(f"source symbols exceed field order {d}")
    coeffs = rng.integers(0, d, size=k, dtype=np.uint8)
    payload = np.bitwise_xor.reduce(F.mul(coeffs[:, None], block), axis=0)
    return CodedPacket(coeffs, payload.astype(np.uint8))


class RankDecoder:
    """Incremental Gauss-Jordan elimination on received packets.

    The basis is kept in reduced row-echelon form on the augmented rows
    ``[coefficients | payload]``, so a new row is reduced against every stored
    row in one vectorised step, and once rank reaches k the payload columns are
    the decoded source packets.
    """

    def __init__(self, k: int, d: int = 256, m: int = 1):
        self.k, self.m = k, m
        self.field: GF = gf_field(d)
        self.received = 0
        self.rank = 0
        self._rows = np.zeros((k, k + m), dtype=np.uint8)
        self._pivots = np.zeros(k, dtype=np.intp)

    @property
    def decoded(self) -> bool:
        return self.rank == self.k

    def ingest(self, pkt: CodedPacket) -> bool:
        """Add a packet; returns True if it increased the rank."""
        coeffs = np.asarray(pkt.coefficients, dtype=np.uint8)
        payload = np.atleast_1d(np.asarray(pkt.payload, dtype=np.uint8))
        if coeffs.shape != (self.k,) or payload.shape != (self.m,):
            raise ValueError(
                f"packet shape {coeffs.shape}/{payload.shape} does not match decoder (k={self.k}, m={self.m})"
            )
        self.received += 1
        if self.decoded:
            return False
        mul = self.field.mul_table
        row = np.concatenate([coeffs, payload])
        r = self.rank
        if r:
            basis = self._rows[:r]
            c = row[self._pivots[:r]]
            row ^= np.bitwise_xor.reduce(mul[c[:, None], basis], axis=0)
        nz = np.flatnonzero(row[: self.k])
        if nz.size == 0:
            return False
        j = nz[0]
        row = mul[self.field.inv_table[row[j]], row]
        if r:
            basis = self._rows[:r]
            basis ^= mul[basis[:, j][:, None], row[None, :]]
        self._rows[r] = row
        self._pivots[r] = j
        self.rank += 1
        return True

    def decode(self) -> np.ndarray:
        if not self.decoded:
            raise RuntimeError(f"rank {self.rank} < k={self.k}; block not decodable yet")
        order = np.argsort(self._pivots)
        return self._rows[order, self.k :].copy()

    def dump(self) -> dict:
        return {"k": self.k, "field": self.field.order, "received": self.received, "rank": self.rank}


def decoder_ingest(state: RankDecoder, pkt: CodedPacket) -> RankDecoder:
    state.ingest(pkt)
    return state


def full_rank_probability(k: int, d: int) -> float:
    """Probability that k uniform random vectors in GF(d)^k are linearly independent."""
    if k < 1 or d < 2:
        raise DomainError("need k >= 1 and d >= 2")
    # log-sum keeps large k stable
    s = sum(math.log1p(-(float(d) ** -i)) for i in range(1, k + 1))
    return math.exp(s)


def receptions_to_full_rank(k: int, d: int, size, rng: np.random.Generator) -> np.ndarray:
    """Sample how many uniform random coefficient rows are needed to reach rank k.

    With rank r, a fresh row is innovative with probability 1 - d^(r-k), so the
    total is k plus the failures of k independent geometric stages.
    """
    out = np.full(size, k, dtype=np.int64)
    for j in range(1, k + 1):
        miss = float(d) ** -j
        if miss < 2.0**-60:
            break
        out += rng.geometric(1.0 - miss, size) - 1
    return out


def lt_threshold(k: int, delta: float, c: float = 0.1) -> int:
    """Receptions an LT decoder needs: ceil(k + c sqrt(k) ln^2(k/delta))."""
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if k < 1:
        raise DomainError("k must be >= 1")
    if c < 0:
        raise DomainError("c must be non-negative")
    return math.ceil(k + c * math.sqrt(k) * math.log(k / delta) ** 2)


# ---------------------------------------------------------------------------
# decode models


@dataclass(frozen=True)
class Idealized:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("block size k must be >= 1")

    def required(self, n, rng) -> np.ndarray:
        """Receptions each user needs; ``n`` may be a shape such as (blocks, users)."""
        return np.full(n, self.k, dtype=np.int64)

    def decoded(self, n, rng) -> np.ndarray | None:
        """Per-user decode indicator, or None when every user decodes."""
        return None


@dataclass(frozen=True)
class RankBased(Idealized):
    d: int = 256

    def __post_init__(self):
        super().__post_init__()
        gf_field(self.d)

    def required(self, n, rng) -> np.ndarray:
        return receptions_to_full_rank(self.k, self.d, n, rng)


@dataclass(frozen=True)
class LtThreshold(Idealized):
    delta: float = 0.1
    c: float = 0.1

    def __post_init__(self):
        super().__post_init__()
        if not (0.0 < self.delta < 1.0):
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def nu(self) -> int:
        return lt_threshold(self.k, self.delta, self.c)

    def required(self, n, rng) -> np.ndarray:
        return np.full(n, self.nu, dtype=np.int64)

    def decoded(self, n, rng) -> np.ndarray:
        return rng.random(n) >= self.delta


DecodeModel = Idealized  # base of all three models
