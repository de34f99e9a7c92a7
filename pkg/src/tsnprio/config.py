from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction

from .model import ConfigurationError, Link, bytes_time, transmission_time


@dataclass(frozen=True)
class ShaperConfig:
    """Port-level shaping and framing parameters used by scheduler, analysis and simulator.

    ``idle_a``/``idle_b`` are fractions of the link rate reserved for the
    two credit-based shaper classes.
    """

    idle_a: float = 0.4
    idle_b: float = 0.2
    preemption: bool = True
    preemption_pad: bool = True
    include_overhead: bool = True
    frag_overhead: int = 24
    np_residue: int = 123
    max_lp_frame: int = 1538
    be_everywhere: bool = False

    def __post_init__(self):
        if not (0 < self.idle_a and 0 < self.idle_b and self.idle_a + self.idle_b < 1):
            raise ConfigurationError("idle slopes must satisfy 0 < idle_a + idle_b < 1")

    def idle_slope(self, link: Link, cls_is_a: bool) -> int:
        frac = Fraction(str(self.idle_a if cls_is_a else self.idle_b))
        return int(link.rate * frac)

    def wire(self, size, link: Link):
        return transmission_time(size, link, self.include_overhead)

    def pad(self, link: Link):
        """Front extension of a TT window absorbing the hold-over of a preempted frame."""
        if not (self.preemption and self.preemption_pad):
            return 0
        return bytes_time(self.np_residue + self.frag_overhead, link.rate)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
