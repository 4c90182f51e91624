"""Fine-time-measurement arithmetic: round-trip time from a four-timestamp
exchange, burst averaging, and RTT/distance conversion.

Timestamps are integer nanoseconds. t1 and t4 are recorded by the responder's
clock, t2 and t3 by the initiator's; the RTT formula cancels the unknown offset
between the two clocks, so no cross-clock ordering is ever assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from rttloc.errors import ValidationError

# Propagation speed used for RTT <-> distance conversion, in m/s. Fixed at
# exactly 3e8, not the CODATA value.
SPEED_OF_LIGHT = 3.0e8

# ns -> m conversion is done as rtt * c / 2e9 (and its inverse) so that round
# decimal cases like 200 ns <-> 30 m stay exact in floating point.
_NS_PER_S = 2.0e9  # 2 / (1e-9 s per ns), folded into one constant


@dataclass(frozen=True)
class FtmExchange:
    """One FTM frame/ACK exchange.

    t1: departure of the FTM frame (responder clock, ns)
    t2: arrival of the FTM frame (initiator clock, ns)
    t3: departure of the ACK (initiator clock, ns)
    t4: arrival of the ACK (responder clock, ns)
    """

    t1: int
    t2: int
    t3: int
    t4: int

    def __post_init__(self) -> None:
        if self.t4 < self.t1:
            raise ValidationError(
                f"invalid exchange: t4={self.t4} precedes t1={self.t1} on the responder clock"
            )
        if self.t3 < self.t2:
            raise ValidationError(
                f"invalid exchange: t3={self.t3} precedes t2={self.t2} on the initiator clock"
            )


@dataclass(frozen=True)
class Burst:
    """An ordered run of FTM exchanges averaged into one RTT measurement."""

    exchanges: tuple[FtmExchange, ...]

    def __init__(self, exchanges: Sequence[FtmExchange]):
        if len(exchanges) < 1:
            raise ValidationError("a burst must contain at least one exchange")
        object.__setattr__(self, "exchanges", tuple(exchanges))

    @property
    def burst_size(self) -> int:
        return len(self.exchanges)


@dataclass(frozen=True)
class RttMeasurement:
    """An averaged RTT (ns) attributed to one (transmitter, receiver) pair.

    Negative RTT is legal: device calibration offsets can push measurements
    below zero and the pipeline retains them as location signatures.
    """

    rtt: float
    pair: tuple[int, int]


def compute_rtt(x: FtmExchange) -> int:
    """RTT of a single exchange: (t4 - t1) - (t3 - t2), exact integer ns.

    Each parenthesised difference is taken on a single station's clock, so a
    constant offset on either clock cancels.
    """
    return (x.t4 - x.t1) - (x.t3 - x.t2)


def average_rtt(b: Burst) -> float:
    """Arithmetic mean of the per-exchange RTTs in a burst, in ns."""
    return sum(compute_rtt(x) for x in b.exchanges) / b.burst_size


def rtt_to_distance(rtt: float) -> float:
    """Convert an RTT in ns to a one-way distance in metres: (rtt / 2) * c.

    Negative RTT yields negative distance; the sign is deliberately preserved.
    """
    return rtt * SPEED_OF_LIGHT / _NS_PER_S


def distance_to_rtt(d: float) -> float:
    """Inverse of rtt_to_distance: metres to RTT in ns."""
    return d * _NS_PER_S / SPEED_OF_LIGHT
