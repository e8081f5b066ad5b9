"""Spectrum supports as sets of disjoint half-open intervals [lo, hi) in MHz.

Transmit profiles are on-off: an operator either transmits at the power cap
over its support or not at all, so a support fully describes a transmission.
Endpoint arithmetic is exact (no tolerance): deviation detection compares
supports bit for bit, and touching intervals are merged on construction so
equal supports always compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SpectrumAllocation:
    """Disjoint, sorted, canonical intervals within [0, band_mhz)."""

    intervals: tuple[tuple[float, float], ...]

    @staticmethod
    def from_intervals(intervals, band_mhz: float) -> "SpectrumAllocation":
        """Validate, sort and merge touching intervals into canonical form."""
        items = sorted((float(lo), float(hi)) for lo, hi in intervals)
        merged: list[tuple[float, float]] = []
        for lo, hi in items:
            if not lo < hi:
                raise ValueError(f"empty or inverted interval [{lo}, {hi})")
            if lo < 0.0 or hi > band_mhz:
                raise ValueError(f"interval [{lo}, {hi}) outside [0, {band_mhz})")
            if merged and lo < merged[-1][1]:
                raise ValueError(f"overlapping intervals at {lo}")
            if merged and lo == merged[-1][1]:
                merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        return SpectrumAllocation(tuple(merged))

    @staticmethod
    def empty() -> "SpectrumAllocation":
        return SpectrumAllocation(())

    @staticmethod
    def block(lo: float, hi: float, band_mhz: float) -> "SpectrumAllocation":
        return SpectrumAllocation.from_intervals([(lo, hi)], band_mhz)

    @staticmethod
    def full_band(band_mhz: float) -> "SpectrumAllocation":
        return SpectrumAllocation(((0.0, float(band_mhz)),))

    @property
    def width(self) -> float:
        return sum(hi - lo for lo, hi in self.intervals)

    def covers(self, f: float) -> bool:
        return any(lo <= f < hi for lo, hi in self.intervals)

    def is_empty(self) -> bool:
        return not self.intervals


def partition_points(allocations, band_mhz: float) -> list[float]:
    """Sorted unique endpoints of all allocations plus the band edges.

    Consecutive points delimit maximal sub-intervals on which every
    allocation's membership (and hence the interferer count) is constant.
    """
    points = {0.0, float(band_mhz)}
    for alloc in allocations:
        for lo, hi in alloc.intervals:
            points.add(lo)
            points.add(hi)
    return sorted(points)
