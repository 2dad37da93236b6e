"""Declarative waypoint recipes for aerobatic maneuvers.

All coordinates are world frame with z pointing down, so climbing means
decreasing z. Yaw values are unwrapped. Where a maneuver's geometry is only
described qualitatively, the chosen coordinates are listed in the builder's
docstring.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .minsnap import MU_PSI, Waypoint

PI = math.pi
X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


@dataclass
class ManeuverRecipe:
    """Waypoints plus time-allocation directive.

    With ``durations`` set, those segment times are used as given. Otherwise
    they come from the total-time estimate (or ``total_time``) followed by
    segment-time optimization; ``minimize`` asks the caller to search for the
    smallest feasible time scale.
    """
    name: str
    waypoints: list
    mu_psi: float = MU_PSI
    total_time: float | None = None
    durations: list | None = None
    minimize: bool = True
    notes: str = ""

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise DomainError("a recipe needs at least two waypoints")
        if self.durations is not None and len(self.durations) != len(self.waypoints) - 1:
            raise DomainError("durations must have one entry per segment")

    @property
    def yaws(self):
        return [wp.yaw for wp in self.waypoints]

    def to_dict(self):
        d = {"name": self.name, "mu_psi": self.mu_psi, "minimize": self.minimize,
             "waypoints": [wp.to_dict() for wp in self.waypoints]}
        if self.total_time is not None:
            d["total_time"] = self.total_time
        if self.durations is not None:
            d["durations"] = [float(t) for t in self.durations]
        if self.notes:
            d["notes"] = self.notes
        return d

    @classmethod
    def from_dict(cls, d):
        if "waypoints" not in d:
            raise DomainError("recipe needs a 'waypoints' list")
        known = {"name", "mu_psi", "minimize", "waypoints", "total_time", "durations", "notes"}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown recipe field(s): {sorted(unknown)}")
        return cls(
            name=d.get("name", "custom"),
            waypoints=[Waypoint.from_dict(w) for w in d["waypoints"]],
            mu_psi=float(d.get("mu_psi", MU_PSI)),
            total_time=d.get("total_time"),
            durations=d.get("durations"),
            minimize=bool(d.get("minimize", True)),
            notes=d.get("notes", ""),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"invalid recipe JSON: {exc}") from None
        return cls.from_dict(data)


@dataclass(frozen=True)
class CircleRecipe:
    """Constant-speed horizontal circle, checked analytically."""
    r: float
    v: float
    mode: str = "coordinated"
    name: str = field(default="circle")

    def __post_init__(self):
        from .feasibility import CIRCLE_MODES
        if not self.r > 0 or not self.v >= 0:
            raise DomainError("circle needs r > 0 and v >= 0")
        if self.mode not in CIRCLE_MODES:
            raise DomainError(f"unknown circle mode {self.mode!r}")

    def check(self, p, n=721):
        from .feasibility import circle_check
        return circle_check(self.r, self.v, self.mode, p, n)


def _pass(position, velocity, yaw):
    # straight pass: fixed velocity, yaw held steady
    return Waypoint(position, yaw, velocity=np.asarray(velocity, float),
                    yaw_rate=0.0, yaw_acceleration=0.0)


def loop(radius=1.0, approach=2.5):
    """Inside loop in the x-z plane.

    Circle centre (0, 0, -r); entry and exit at its lowest point, visited
    twice, with tangential direction constraints at the four quarter points.
    Hover start and end ``approach`` metres before and after the circle.
    """
    center = np.array([0.0, 0.0, -radius])
    wps = [Waypoint.rest([-approach, 0.0, 0.0])]
    for a in (-PI / 2, 0.0, PI / 2, PI, -PI / 2):
        pos = center + radius * np.array([math.cos(a), 0.0, -math.sin(a)])
        tangent = np.array([-math.sin(a), 0.0, -math.cos(a)])
        wps.append(Waypoint(pos, 0.0, velocity_direction=tangent))
    wps.append(Waypoint.rest([approach, 0.0, 0.0]))
    return ManeuverRecipe("loop", wps, notes="entry/exit hover 2.5 m from the circle")


def knife_edge(speed=5.0):
    """Straight level pass along +x rolling into knife-edge flight and back.

    Pass waypoints at x = 4, 7, 10, 13 m carry the velocity; yaw is 0, pi/2,
    pi/2, 0, so the three middle segments hold the transitions and the
    knife-edge leg.
    """
    wps = [Waypoint.rest([0.0, 0.0, 0.0])]
    for x, yaw in ((4.0, 0.0), (7.0, PI / 2), (10.0, PI / 2), (13.0, 0.0)):
        wps.append(_pass([x, 0.0, 0.0], speed * X, yaw))
    wps.append(Waypoint.rest([17.0, 0.0, 0.0]))
    return ManeuverRecipe("knife_edge", wps)


def climbing_turn(speed=5.0, climb=1.0):
    """270 degree right turn with a climb between two straight-flight passes.

    Pass A at the origin heading +x; pass B directly above heading -y.
    """
    yaw_end = 3 * PI / 2
    wps = [
        Waypoint.rest([-2.5, 0.0, 0.0]),
        _pass([0.0, 0.0, 0.0], speed * X, 0.0),
        _pass([0.0, 0.0, -climb], -speed * Y, yaw_end),
        Waypoint.rest([0.0, -2.5, -climb], yaw_end),
    ]
    return ManeuverRecipe("climbing_turn", wps)


def immelmann(speed=6.0, sweep=5.0):
    """Half loop up (radius 1.5 m) followed by a yaw sweep to upright.

    Intermediate passes: (3,0,0) and (5,0,0) heading +x, (5,0,-3) inverted
    heading -x, then ``sweep`` metres further on heading -x with yaw pi.
    """
    x_end = 5.0 - sweep
    wps = [
        Waypoint.rest([0.0, 0.0, 0.0]),
        _pass([3.0, 0.0, 0.0], speed * X, 0.0),
        _pass([5.0, 0.0, 0.0], speed * X, 0.0),
        _pass([5.0, 0.0, -3.0], -speed * X, 0.0),
        _pass([x_end, 0.0, -3.0], -speed * X, PI),
        Waypoint.rest([x_end - 3.0, 0.0, -3.0], PI),
    ]
    return ManeuverRecipe("immelmann", wps)


def split_s(speed=5.0, sweep=5.0):
    """Yaw sweep to inverted on the upper leg, then a half loop down.

    Mirrors the Immelmann waypoints with reversed order and velocity.
    """
    x_start = 5.0 - sweep
    wps = [
        Waypoint.rest([x_start - 3.0, 0.0, -3.0]),
        _pass([x_start, 0.0, -3.0], speed * X, 0.0),
        _pass([5.0, 0.0, -3.0], speed * X, PI),
        _pass([5.0, 0.0, 0.0], -speed * X, PI),
        _pass([3.0, 0.0, 0.0], -speed * X, PI),
        Waypoint.rest([0.0, 0.0, 0.0], PI),
    ]
    return ManeuverRecipe("split_s", wps)


def diff_thrust_turn(speed=8.0, reach=6.0):
    """Out-and-back dash reversing on the spot at ``reach`` metres."""
    turn = [reach, 0.0, 0.0]
    wps = [
        Waypoint.rest([0.0, 0.0, 0.0]),
        _pass(turn, speed * X, 0.0),
        _pass(turn, -speed * X, PI),
        Waypoint.rest([0.0, 0.0, 0.0], PI),
    ]
    return ManeuverRecipe("diff_thrust_turn", wps)


def hover_to_hover(distance=6.0, psi_start=0.0, psi_end=0.0, minimal=True):
    """Rest-to-rest along +x.

    With ``minimal`` the yaw turns by the rotation in (-pi, pi] (ties go to
    +pi); otherwise ``psi_end`` is used as the unwrapped end yaw.
    """
    from .feasibility import minimal_yaw_end

    if not distance >= 0:
        raise DomainError("distance must be non-negative")
    yaw_end = minimal_yaw_end(psi_start, psi_end) if minimal else float(psi_end)
    wps = [
        Waypoint.rest([0.0, 0.0, 0.0], psi_start),
        Waypoint.rest([distance, 0.0, 0.0], yaw_end),
    ]
    return ManeuverRecipe("hover_to_hover", wps)


def _nearest_yaw(target, ref):
    return ref + math.remainder(target - ref, 2 * PI)


def race_recipe(gates, start=(0.0, 0.0, 0.0), name="race"):
    """Hover start, one direction-constrained waypoint per gate, hover back at start.

    ``gates`` holds ``(position, normal, mode)`` with mode ``coordinated``
    (yaw along the normal) or ``knife_edge`` (yaw a quarter turn further).
    """
    if not gates:
        raise DomainError("race needs at least one gate")
    wps = []
    yaw = None
    for pos, normal, mode in gates:
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise DomainError("gate normal has zero length")
        n = n / norm
        if mode not in ("coordinated", "knife_edge"):
            raise DomainError(f"unknown gate mode {mode!r}")
        heading = math.atan2(n[1], n[0]) if np.hypot(n[0], n[1]) > 1e-9 else (yaw or 0.0)
        target = heading + (PI / 2 if mode == "knife_edge" else 0.0)
        yaw = target if yaw is None else _nearest_yaw(target, yaw)
        wps.append(Waypoint(pos, yaw, velocity_direction=n))
    wps = ([Waypoint.rest(start, wps[0].yaw)] + wps + [Waypoint.rest(start, yaw)])
    return ManeuverRecipe(name, wps)


COURSE_GATES = (
    ((8.0, 0.0, -2.0), (1.0, 0.0, 0.0), "coordinated"),
    ((16.0, 8.0, -2.0), (0.0, 1.0, 0.0), "coordinated"),
    ((8.0, 16.0, -3.0), (-1.0, 0.0, 0.0), "coordinated"),
    ((0.0, 8.0, -2.0), (0.0, -1.0, 0.0), "knife_edge"),
)


def race_course():
    """Representative four-gate course; the last gate is flown knife-edge."""
    return race_recipe(COURSE_GATES, name="race")


BUILDERS = {
    "loop": loop,
    "knife_edge": knife_edge,
    "climbing_turn": climbing_turn,
    "immelmann": immelmann,
    "split_s": split_s,
    "diff_thrust_turn": diff_thrust_turn,
    "hover_to_hover": hover_to_hover,
    "race": race_course,
}

MANEUVER_NAMES = tuple(BUILDERS) + ("circle",)


def build_recipe(name, **kwargs):
    """Recipe by maneuver name; keyword arguments go to the builder."""
    if name == "circle":
        return CircleRecipe(**kwargs)
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise DomainError(f"unknown maneuver {name!r}; choose from {sorted(MANEUVER_NAMES)}") from None
    try:
        return builder(**kwargs)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {name}: {exc}") from None
