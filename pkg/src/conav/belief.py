"""Human-centred zones, the human's sensor model and the logical belief filter.

Zones are indexed row-major with row 0 on the north side (largest y) and
column 0 on the west side, so the default 3x3 layout reads::

    0 1 2
    3 4 5      (4 contains the human)
    6 7 8
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import NULL_SIGNAL

NULL_OBSERVATION = "null"
# emitted when a signal contradicts where the robot will be
INCOHERENT = "_incoherent"


@dataclass(frozen=True)
class ZoneLayout:
    rows: int = 3
    cols: int = 3
    cell_extent: float = 1.0

    @classmethod
    def for_delta(cls, delta: float, rows: int = 3, cols: int = 3) -> "ZoneLayout":
        return cls(rows, cols, delta / max(rows, cols))

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def center_index(self) -> int | None:
        """The zone containing the human itself (odd layouts only)."""
        if self.rows % 2 and self.cols % 2:
            return (self.rows // 2) * self.cols + self.cols // 2
        return None

    def centers(self, anchor) -> np.ndarray:
        """World coordinates of every zone center for a human at `anchor`."""
        e = self.cell_extent
        ax, ay = float(anchor[0]), float(anchor[1])
        out = np.empty((self.size, 2))
        for r in range(self.rows):
            for c in range(self.cols):
                out[r * self.cols + c] = (ax + (c - (self.cols - 1) / 2) * e,
                                          ay + ((self.rows - 1) / 2 - r) * e)
        return out

    def side(self, direction: str) -> frozenset[int]:
        if direction == "north":
            return frozenset(range(self.cols))
        if direction == "south":
            return frozenset(range((self.rows - 1) * self.cols, self.size))
        if direction == "east":
            return frozenset(r * self.cols + self.cols - 1 for r in range(self.rows))
        if direction == "west":
            return frozenset(r * self.cols for r in range(self.rows))
        raise KeyError(direction)


def zone_of(s_r, s_h, layout: ZoneLayout) -> int | None:
    """Index of the zone containing the robot's base, or None outside the neighbourhood."""
    rx, ry = (s_r.x, s_r.y) if hasattr(s_r, "x") else (float(s_r[0]), float(s_r[1]))
    hx, hy = (s_h.x, s_h.y) if hasattr(s_h, "x") else (float(s_h[0]), float(s_h[1]))
    e = layout.cell_extent
    col = math.floor((rx - hx + layout.cols * e / 2) / e)
    row = math.floor((layout.rows * e / 2 - (ry - hy)) / e)
    if 0 <= row < layout.rows and 0 <= col < layout.cols:
        return row * layout.cols + col
    return None


@dataclass(frozen=True)
class Belief:
    bits: tuple[bool, ...]

    @classmethod
    def empty(cls, n: int) -> "Belief":
        return cls((False,) * n)

    @classmethod
    def full(cls, n: int) -> "Belief":
        return cls((True,) * n)

    @classmethod
    def from_indices(cls, n: int, idx) -> "Belief":
        s = set(idx)
        return cls(tuple(i in s for i in range(n)))

    @property
    def is_empty(self) -> bool:
        return not any(self.bits)

    @property
    def indices(self) -> list[int]:
        return [i for i, b in enumerate(self.bits) if b]

    def __len__(self) -> int:
        return len(self.bits)

    def issubset(self, other: "Belief") -> bool:
        return all(o or not s for s, o in zip(self.bits, other.bits))

    def as_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


@dataclass(frozen=True)
class SensorModel:
    """What the human hears for each signal and which zones each signal names.

    ``heard`` maps a signal to its observation symbol; several signals sharing
    a symbol models conflation. ``regions`` maps a signal to the zones where
    the human expects the robot after hearing it.
    """

    heard: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    size: int = 9

    @classmethod
    def compass(cls, vocab, layout: ZoneLayout, conflation=()) -> "SensorModel":
        heard, regions = {}, {}
        for sig in vocab:
            if sig == NULL_SIGNAL:
                continue
            heard[sig] = sig
            regions[sig] = layout.side(sig)
        for obs, sigs in conflation:
            for sig in sigs:
                if sig not in heard:
                    raise KeyError(f"conflated signal {sig!r} not in vocabulary")
                heard[sig] = obs
        return cls(heard, regions, layout.size)

    def knows(self, signal: str) -> bool:
        return signal == NULL_SIGNAL or signal in self.heard

    def output(self, signal: str, zone: int | None):
        """Sensor function evaluated with the robot's next-state zone."""
        if signal == NULL_SIGNAL:
            return NULL_OBSERVATION
        if signal not in self.heard:
            raise KeyError(f"unknown signal {signal!r}")
        return self.heard[signal] if zone in self.regions[signal] else INCOHERENT

    def consistent_zones(self, obs) -> frozenset[int]:
        """Zones i for which some signal could have produced `obs`."""
        if obs == NULL_OBSERVATION:
            return frozenset(range(self.size))
        zones = set()
        for sig, heard in self.heard.items():
            if heard == obs:
                zones |= self.regions[sig]
        return frozenset(zones)


def observe(s_h, a_c: str, s_r_next, model: SensorModel):
    """Observation the human receives when the robot emits `a_c`.

    The null signal is heard as the null observation in every context and
    never touches the model's tables.
    """
    if a_c == NULL_SIGNAL:
        return NULL_OBSERVATION
    if not model.knows(a_c):
        raise KeyError(f"unknown signal {a_c!r}")
    return model.heard[a_c]


def update_belief(b_k: Belief, obs, s_h, layout: ZoneLayout, model: SensorModel | None,
                  reach: np.ndarray) -> Belief:
    """Logical filtering step.

    Zone i is possible next iff it is consistent with `obs` and reachable in
    one cycle from some zone that was possible before. An empty prior places
    no constraint on the previous zone; an empty prior with the null
    observation stays empty.
    """
    n = layout.size
    if obs == NULL_OBSERVATION:
        if b_k.is_empty:
            return b_k
        consistent = None
    else:
        consistent = model.consistent_zones(obs)
    reach = np.asarray(reach, dtype=bool)
    prior = np.ones(n, dtype=bool) if b_k.is_empty else np.array(b_k.bits, dtype=bool)
    reachable = np.any(reach[prior], axis=0)
    bits = tuple(bool(reachable[i]) and (consistent is None or i in consistent) for i in range(n))
    return Belief(bits)


def reach_relation(old_anchor, new_anchor, layout: ZoneLayout, reach_distance: float,
                   free=None) -> np.ndarray:
    """reach[j, i]: the robot can get from zone j (old frame) to zone i (new frame) in one cycle.

    Zone representatives are their centers; `free` optionally flags centers the
    robot can occupy, as (old_free, new_free) boolean arrays.
    """
    a = layout.centers(old_anchor)
    b = layout.centers(new_anchor)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    reach = d <= reach_distance + 1e-12
    if free is not None:
        old_free, new_free = free
        reach &= np.asarray(old_free, dtype=bool)[:, None]
        reach &= np.asarray(new_free, dtype=bool)[None, :]
    return reach
