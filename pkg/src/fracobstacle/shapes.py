"""Target sets and obstacle templates: balls, boxes and finite unions of balls."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise InvalidParameter("ball radius must be >= 0")

    kind = "ball"

    @property
    def n(self):
        return len(self.center)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.sum((x - self.center) ** 2, axis=1) < self.radius ** 2

    def reach(self, origin=None) -> float:
        """Smallest R with the set inside the closed ball ``B_R(origin)``."""
        o = np.zeros(self.n) if origin is None else np.asarray(origin, float)
        return float(np.linalg.norm(np.subtract(self.center, o)) + self.radius)

    @property
    def diameter(self):
        return 2 * self.radius

    def scaled(self, a: float) -> "Ball":
        return Ball(tuple(a * c for c in self.center), a * self.radius)

    def translated(self, shift) -> "Ball":
        return Ball(tuple(np.add(self.center, shift)), self.radius)

    def normalized(self):
        """``(canonical, scale)``: the set equals ``canonical`` scaled by ``scale``
        and translated; capacities obey ``cap(set) = scale^(n-sp) cap(canonical)``."""
        return Ball((0.0,) * self.n, 1.0), self.radius

    def is_empty(self):
        return self.radius == 0

    def mark(self, grid, mask):
        grid._mark_cells_meeting_ball(mask, np.asarray(self.center), self.radius)

    def key(self):
        return ("ball", self.center, self.radius)

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    center: tuple
    half_widths: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        hw = tuple(float(v) for v in np.atleast_1d(self.half_widths))
        if len(hw) == 1 and len(self.center) > 1:
            hw = hw * len(self.center)
        object.__setattr__(self, "half_widths", hw)
        if len(hw) != len(self.center) or min(hw) < 0:
            raise InvalidParameter("box half widths must be >= 0, one per axis")

    kind = "box"

    @property
    def n(self):
        return len(self.center)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all(np.abs(x - self.center) < self.half_widths, axis=1)

    def reach(self, origin=None) -> float:
        o = np.zeros(self.n) if origin is None else np.asarray(origin, float)
        far = np.abs(np.subtract(self.center, o)) + self.half_widths
        return float(np.linalg.norm(far))

    @property
    def diameter(self):
        return 2 * float(np.linalg.norm(self.half_widths))

    def scaled(self, a):
        return Box(tuple(a * c for c in self.center), tuple(a * w for w in self.half_widths))

    def translated(self, shift):
        return Box(tuple(np.add(self.center, shift)), self.half_widths)

    def normalized(self):
        scale = float(np.linalg.norm(self.half_widths))
        return Box((0.0,) * self.n, tuple(w / scale for w in self.half_widths)), scale

    def is_empty(self):
        return min(self.half_widths) == 0

    def mark(self, grid, mask):
        mask |= grid.cells_meeting_box(self.center, self.half_widths)

    def key(self):
        return ("box", self.center, self.half_widths)

    def to_dict(self):
        return {"kind": "box", "center": list(self.center), "half_widths": list(self.half_widths)}


@dataclass(frozen=True)
class BallUnion:
    balls: tuple

    def __post_init__(self):
        balls = tuple(self.balls)
        if not balls or any(not isinstance(b, Ball) for b in balls):
            raise InvalidParameter("a ball union needs at least one Ball")
        if len({b.n for b in balls}) != 1:
            raise InvalidParameter("balls of a union must share the dimension")
        object.__setattr__(self, "balls", balls)

    kind = "union"

    @property
    def n(self):
        return self.balls[0].n

    def contains(self, x):
        out = self.balls[0].contains(x)
        for b in self.balls[1:]:
            out |= b.contains(x)
        return out

    def reach(self, origin=None):
        return max(b.reach(origin) for b in self.balls)

    @property
    def diameter(self):
        cs = np.array([b.center for b in self.balls])
        rs = np.array([b.radius for b in self.balls])
        d = np.sqrt(np.sum((cs[:, None] - cs[None]) ** 2, axis=-1)) + rs[:, None] + rs[None]
        return float(d.max())

    def scaled(self, a):
        return BallUnion(tuple(b.scaled(a) for b in self.balls))

    def translated(self, shift):
        return BallUnion(tuple(b.translated(shift) for b in self.balls))

    def normalized(self):
        cs = np.array([b.center for b in self.balls])
        mid = 0.5 * (cs.min(axis=0) + cs.max(axis=0))
        shifted = self.translated(-mid)
        scale = shifted.reach()
        return shifted.scaled(1.0 / scale), scale

    def is_empty(self):
        return all(b.is_empty() for b in self.balls)

    def mark(self, grid, mask):
        for b in self.balls:
            b.mark(grid, mask)

    def key(self):
        return ("union",) + tuple(b.key() for b in self.balls)

    def to_dict(self):
        return {"kind": "union", "balls": [b.to_dict() for b in self.balls]}


def shape_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "ball":
        return Ball(d["center"], d["radius"])
    if kind == "box":
        return Box(d["center"], d["half_widths"])
    if kind == "union":
        return BallUnion(tuple(Ball(b["center"], b["radius"]) for b in d["balls"]))
    raise InvalidParameter(f"unknown shape kind {kind!r}")
