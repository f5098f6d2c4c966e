"""Element-wise stochastic quantizer and its wire format.

Each coordinate x is rounded to one of the two neighbouring points of the
lattice theta*Z, upward with probability x/theta - floor(x/theta), so the
output is unbiased. A b-bit quantizer accepts inputs with |x| < 2^b theta and
is accounted at b + 1 bits per coordinate (b magnitude bits and a sign).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADER_BITS = 16


class QuantizerRangeError(ValueError):
    """Input outside the representable range 2^b * theta."""


@dataclass(frozen=True)
class StochasticQuantizer:
    theta: float
    bits: int
    ident: int = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"quantizer scale must be positive, got {self.theta}")
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"bit-width must be a positive integer, got {self.bits}")
        if not 0 <= self.ident < 2**HEADER_BITS:
            raise ValueError(f"compressor id must fit in {HEADER_BITS} bits")

    @property
    def limit(self) -> float:
        return 2.0**self.bits * self.theta

    def bits_per_message(self, dim: int) -> int:
        return dim * (self.bits + 1)

    def check_range(self, x) -> None:
        x = np.asarray(x, dtype=float)
        bad = np.flatnonzero(~(np.abs(x.reshape(-1)) < self.limit))
        if bad.size:
            c = int(bad[0])
            raise QuantizerRangeError(
                f"quantizer range exceeded at coordinate {c}: x={float(x.reshape(-1)[c])!r}, "
                f"theta={self.theta}, b={self.bits} (|x| must be < {self.limit})"
            )

    def levels(self, x, u) -> np.ndarray:
        """Integer lattice levels for inputs x given uniforms u in [0, 1)."""
        x = np.asarray(x, dtype=float)
        self.check_range(x)
        lc = np.floor(x / self.theta)
        up = np.asarray(u) < x / self.theta - lc
        return (lc + up).astype(np.int64)

    def apply(self, x, u) -> np.ndarray:
        return self.levels(x, u) * self.theta


@dataclass(frozen=True)
class QuantizedMessage:
    levels: tuple[int, ...]
    theta_id: int
    payload_bits: int

    def values(self, theta: float) -> np.ndarray:
        return np.asarray(self.levels, dtype=float) * theta


def quantize_scalar(q: StochasticQuantizer, x: float, u: float) -> float:
    if not 0.0 <= u < 1.0:
        raise ValueError(f"uniform draw must lie in [0, 1), got {u}")
    return float(q.apply(np.array([x]), np.array([u]))[0])


def quantize_vector(q: StochasticQuantizer, x, rng: np.random.Generator):
    """Quantize every coordinate with consecutive draws from ``rng``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = rng.random(x.size)
    lv = q.levels(x, u)
    msg = QuantizedMessage(tuple(int(v) for v in lv), q.ident, q.bits_per_message(x.size))
    return lv * q.theta, msg


def variance_bound(q: StochasticQuantizer, dim: int = 1) -> float:
    """Worst-case E||C(x) - x||^2: p(1-p) theta^2 peaks at p = 1/2 in each coordinate."""
    return dim * q.theta**2 / 4.0


# --------------------------------------------------------------------------
# wire format: 16-bit compressor id, then dim sign-magnitude fields of b+1 bits,
# packed little-endian (least significant bit first)


def encode_message(msg: QuantizedMessage, bits: int) -> bytes:
    width = bits + 1
    acc = msg.theta_id
    pos = HEADER_BITS
    for lv in msg.levels:
        mag = abs(lv)
        if mag >= 2**bits:
            # |level| = 2^b only occurs for inputs within one cell of the range edge
            raise QuantizerRangeError(f"level {lv} does not fit a {width}-bit sign-magnitude field")
        field_ = mag | ((1 if lv < 0 else 0) << bits)
        acc |= field_ << pos
        pos += width
    return acc.to_bytes((pos + 7) // 8, "little")


def decode_message(data: bytes, bits: int, dim: int) -> QuantizedMessage:
    width = bits + 1
    acc = int.from_bytes(data, "little")
    ident = acc & (2**HEADER_BITS - 1)
    acc >>= HEADER_BITS
    levels = []
    for _ in range(dim):
        field_ = acc & (2**width - 1)
        acc >>= width
        mag = field_ & (2**bits - 1)
        levels.append(-mag if field_ >> bits else mag)
    return QuantizedMessage(tuple(levels), ident, dim * width)


class IdentityCompressor:
    """Exact transmission; used for the uncompressed mode of the engine."""

    theta = 0.0
    bits = 64
    ident = 0

    def bits_per_message(self, dim: int) -> int:
        return 64 * dim

    def check_range(self, x) -> None:
        return None

    def apply(self, x, u) -> np.ndarray:
        return np.asarray(x, dtype=float).copy()


# preset compressors C1 to C3
PRESET_COMPRESSORS = {
    "C1": StochasticQuantizer(theta=5.0, bits=4, ident=1),
    "C2": StochasticQuantizer(theta=10.0, bits=3, ident=2),
    "C3": StochasticQuantizer(theta=15.0, bits=2, ident=3),
}
