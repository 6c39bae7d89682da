"""Table-driven arithmetic in GF(2^q), 1 <= q <= 8.

Elements are integers 0..2^q-1 read as polynomials over GF(2).  Addition is
XOR; multiplication goes through log/antilog tables built from a primitive
polynomial.  The full multiplication table (at most 256 x 256 bytes) is kept
too, so vectorised code can multiply arrays by plain fancy indexing.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError

# primitive polynomials, bit i = coefficient of x^i
PRIMITIVE_POLY = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10000011,
    8: 0b100011101,  # x^8 + x^4 + x^3 + x^2 + 1
}


class GF:
    def __init__(self, q: int):
        if q not in PRIMITIVE_POLY:
            raise DomainError(f"field GF(2^{q}) unsupported; q must be in 1..8")
        self.q = q
        self.order = 1 << q
        self.poly = PRIMITIVE_POLY[q]
        self.exp, self.log = self._tables()
        self.mul_table = self._mul_table()
        self.inv_table = np.zeros(self.order, dtype=np.uint8)
        self.inv_table[1:] = self.exp[(self.order - 1 - self.log[1:]) % (self.order - 1)]

    def _tables(self):
        d = self.order
        exp = np.zeros(2 * d, dtype=np.uint8)
        log = np.zeros(d, dtype=np.int32)
        x = 1
        for i in range(d - 1):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & d:
                x ^= self.poly
        if d > 2 and x != 1:
            raise AssertionError(f"polynomial {self.poly:#x} is not primitive")
        exp[d - 1 :] = exp[: d + 1]
        return exp, log

    def _mul_table(self):
        d = self.order
        a = np.arange(d)
        la = self.log[a]
        t = self.exp[(la[:, None] + la[None, :]) % (d - 1)]
        t[0, :] = 0
        t[:, 0] = 0
        return t.astype(np.uint8)

    def mul(self, a, b):
        return self.mul_table[np.asarray(a, dtype=np.intp), np.asarray(b, dtype=np.intp)]

    @staticmethod
    def add(a, b):
        return np.bitwise_xor(a, b)

    def inv(self, a):
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("0 has no inverse in GF(2^q)")
        return self.inv_table[a]

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def __repr__(self):
        return f"GF(2^{self.q}, poly={self.poly:#x})"


@lru_cache(maxsize=None)
def field(order: int) -> GF:
    """The shared field instance of the given order (2, 4, ..., 256)."""
    if order < 2 or order & (order - 1):
        raise DomainError(f"field order must be a power of two in 2..256, got {order}")
    return GF(order.bit_length() - 1)
