"""
Kinematic follow-the-leader guidewire.

The body is the polyline traced by the tip since insertion. Advancing moves the tip
along its heading in short sub-steps; a sub-step that would leave the lumen keeps only
its component along the local centerline and slides along the wall instead. Inside
the capture radius of a branch point the heading relaxes towards the best aligned
branch, so the tip follows the tree without touching the wall.
Retracting pulls the tip back along the traced path.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import OutsideLumenError, TimeStepError
from .geometry import VesselTree, lumen_clearance, nearest_lumen_point


@dataclass
class DeviceConfig:
    #: Seconds per environment step: a 200-step episode spans about 27 s.
    dt: float = 0.135
    substep: float = 0.5
    body_length: float = 4.0
    tip_spacing: float = 2.0
    #: Degrees per second.
    max_rotation: float = 180.0
    #: Millimetres per second.
    max_translation: float = 40.0
    #: Fraction of the gap to the steering direction the heading closes every
    #: ``blend_length`` millimetres of travel.
    heading_blend: float = 0.5
    blend_length: float = 0.5
    #: Junction capture radius as a multiple of the local vessel radius.
    junction_capture: float = 1.0
    #: Distance kept from the wall when a sub-step is projected back into the lumen.
    wall_margin: float = 1e-9


@dataclass(frozen=True)
class DeviceAction:
    rotation_rate: float
    translation_rate: float
    max_rotation: float = 180.0
    max_translation: float = 40.0

    def __post_init__(self):
        rot = float(np.clip(self.rotation_rate, -self.max_rotation, self.max_rotation))
        trans = float(
            np.clip(self.translation_rate, -self.max_translation, self.max_translation)
        )
        object.__setattr__(self, "rotation_rate", rot)
        object.__setattr__(self, "translation_rate", trans)

    @classmethod
    def from_normalized(cls, action, config: DeviceConfig = None) -> "DeviceAction":
        """
        Map an agent action in ``[-1, 1]^2`` onto the rate bounds.
        """
        config = config or DeviceConfig()
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        return cls(
            a[0] * config.max_rotation,
            a[1] * config.max_translation,
            config.max_rotation,
            config.max_translation,
        )

    def normalized(self) -> np.ndarray:
        return np.array(
            [
                self.rotation_rate / self.max_rotation,
                self.translation_rate / self.max_translation,
            ]
        )


@dataclass(frozen=True, eq=False)
class GuidewireState:
    inserted_length: float
    tip_heading: float
    path_history: np.ndarray
    tip_points: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, GuidewireState):
            return NotImplemented
        return (
            self.inserted_length == other.inserted_length
            and self.tip_heading == other.tip_heading
            and np.array_equal(self.path_history, other.path_history)
            and np.array_equal(self.tip_points, other.tip_points)
        )

    @property
    def tip(self) -> np.ndarray:
        return self.path_history[-1]


def _readonly(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _direction(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def _tracking_points(path, spacing):
    """
    Points at arc offsets ``0, spacing, 2*spacing`` behind the tip along ``path``,
    clamped to the insertion point on short bodies.
    """
    back = path[::-1]
    steps = np.linalg.norm(np.diff(back, axis=0), axis=1)
    arcs = np.concatenate(([0.0], np.cumsum(steps)))
    points = []
    for offset in (0.0, spacing, 2 * spacing):
        if offset >= arcs[-1]:
            points.append(back[-1])
            continue
        i = int(np.searchsorted(arcs, offset, side="right")) - 1
        t = (offset - arcs[i]) / (arcs[i + 1] - arcs[i])
        points.append(back[i] + t * (back[i + 1] - back[i]))
    return np.array(points)


def _make_state(path, heading, config):
    path = np.asarray(path, dtype=float)
    inserted = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
    return GuidewireState(
        inserted,
        float(heading),
        _readonly(path),
        _readonly(_tracking_points(path, config.tip_spacing)),
    )


def _into_lumen(tree: VesselTree, point, margin):
    """
    Move ``point`` onto the lumen boundary along its normal if it lies outside.
    """
    if lumen_clearance(tree, point)[0] >= 0:
        return point
    near = nearest_lumen_point(tree, point)
    limit = max(near.radius - margin, 0.0)
    moved = near.point + (point - near.point) * (limit / near.distance)
    if lumen_clearance(tree, moved)[0] >= 0:
        return moved
    return near.point.copy()


def _junction_zones(tree: VesselTree, capture: float):
    """
    Capture circle ``(centre, radius)`` and candidate directions of every branch point:
    the parent in either sense and each child, in branch id order.
    """
    zones = []
    for position, pid, children in tree.junctions:
        parent = tree.branch(pid)
        arc = tree.branch(children[0]).parent[1]
        _, tangent, radius = parent.locate(arc)
        candidates = []
        if arc < parent.length:
            candidates.append((pid, tangent))
        if arc > 0:
            candidates.append((pid, -tangent))
        for cid in children:
            candidates.append((cid, tree.branch(cid).locate(0.0)[1]))
        # Stable sort keeps the distal sense of a branch ahead of its reverse.
        candidates.sort(key=lambda c: c[0])
        zones.append((position, capture * radius, [d for _, d in candidates]))
    return zones


def _best_aligned(candidates, heading):
    h = _direction(heading)
    return candidates[int(np.argmax([float(np.dot(d, h)) for d in candidates]))]


def local_direction(tree: VesselTree, point, heading, capture: float = 1.0) -> np.ndarray:
    """
    Unit centerline direction the device follows at ``point``. Within the capture
    radius of a branch point the candidate directions are the parent in either sense
    and each child; the one best aligned with ``heading`` wins, ties going to the lower
    branch id. Elsewhere it is the local tangent, oriented along the heading with ties
    going distal.
    """
    for centre, radius, candidates in _junction_zones(tree, capture):
        if np.linalg.norm(point - centre) <= radius:
            return _best_aligned(candidates, heading)
    near = nearest_lumen_point(tree, point)
    tangent = tree.branch(near.branch).locate(near.arc_length)[1]
    return tangent if np.dot(tangent, _direction(heading)) >= 0 else -tangent


def _chord_inside(p, u, length, centre, radius) -> float:
    """
    Length of the chord ``p + s*u``, ``0 <= s <= length``, inside a circle.
    """
    offset = p - centre
    b = float(np.dot(u, offset))
    disc = b * b - float(np.dot(offset, offset)) + radius * radius
    if disc <= 0:
        return 0.0
    root = np.sqrt(disc)
    return max(0.0, min(length, root - b) - max(0.0, -root - b))


def _relax(heading, direction, distance, config):
    """
    Heading after closing ``heading_blend`` of its gap to ``direction`` every
    ``blend_length`` of travel, over ``distance``.
    """
    target = np.arctan2(direction[1], direction[0])
    delta = np.arctan2(np.sin(target - heading), np.cos(target - heading))
    kept = (1 - config.heading_blend) ** (distance / config.blend_length)
    return heading + (1 - kept) * delta


def reset_device(tree: VesselTree, start, config: DeviceConfig = None) -> GuidewireState:
    """
    Lay the device body straight back from ``start`` along the local centerline.
    """
    config = config or DeviceConfig()
    start = np.asarray(start, dtype=float)
    if lumen_clearance(tree, start)[0] < -1e-9:
        raise OutsideLumenError(
            f"Start point {tuple(start)} lies outside the lumen.", start
        )
    near = nearest_lumen_point(tree, start)
    tangent = tree.branch(near.branch).locate(near.arc_length)[1]
    heading = float(np.arctan2(tangent[1], tangent[0]))
    n = max(1, int(np.ceil(config.body_length / config.substep)))
    offsets = np.linspace(config.body_length, 0.0, n + 1)
    body = start[None, :] - offsets[:, None] * tangent[None, :]
    clear = lumen_clearance(tree, body)
    for i in np.flatnonzero(clear < 0):
        body[i] = _into_lumen(tree, body[i], config.wall_margin)
    body[-1] = start
    return _make_state(body, heading, config)


def _substep(tree, zones, p, heading, length, config):
    """
    Move the tip ``length`` from ``p``. Headings are relaxed over the travelled
    distance and the motion follows the heading halfway through that relaxation, so
    the result converges as sub-steps shrink.
    """
    move = end = heading
    u = _direction(heading)
    for centre, radius, candidates in zones:
        inside = _chord_inside(p, u, length, centre, radius)
        if inside > 0:
            steer = _best_aligned(candidates, heading)
            move = _relax(heading, steer, inside / 2, config)
            end = _relax(heading, steer, inside, config)
            break
    d = length * _direction(move)
    q = p + d
    clear_q = lumen_clearance(tree, q)[0]
    if clear_q >= 0:
        return q, end
    # Free flight up to the wall, then slide along it for the rest of the sub-step.
    clear_p = max(lumen_clearance(tree, p)[0], 0.0)
    free = clear_p / (clear_p - clear_q)
    contact = _into_lumen(tree, p + free * d, config.wall_margin)
    rest = (1 - free) * length
    tangent = local_direction(tree, contact, end, config.junction_capture)
    slide = rest * np.dot(_direction(_relax(end, tangent, rest / 2, config)), tangent)
    q = _into_lumen(tree, contact + slide * tangent, config.wall_margin)
    return q, _relax(end, tangent, rest, config)


def _advance(tree, path, heading, distance, config):
    n = max(1, int(np.ceil(distance / config.substep - 1e-12)))
    length = distance / n
    zones = _junction_zones(tree, config.junction_capture)
    points = list(path)
    p = points[-1]
    for _ in range(n):
        q, heading = _substep(tree, zones, p, heading, length, config)
        if np.any(q != p):
            points.append(q)
            p = q
    return np.array(points), heading


def _retract(tree, path, distance, config):
    back = path[::-1]
    steps = np.linalg.norm(np.diff(back, axis=0), axis=1)
    arcs = np.concatenate(([0.0], np.cumsum(steps)))
    if distance >= arcs[-1]:
        return path[:1].copy()
    i = int(np.searchsorted(arcs, distance, side="right")) - 1
    t = (distance - arcs[i]) / (arcs[i + 1] - arcs[i])
    kept = path[: len(path) - i - 1]
    if t >= 1.0 - 1e-12:
        return kept.copy()
    # A chord between two body points can cut a bend outside the lumen.
    tip = _into_lumen(tree, back[i] + t * (back[i + 1] - back[i]), config.wall_margin)
    return np.concatenate((kept, tip[None, :]))


def step_device(
    state: GuidewireState,
    action: DeviceAction,
    dt: float,
    tree: VesselTree,
    config: DeviceConfig = None,
) -> GuidewireState:
    """
    Rotate the tip heading, then advance or retract the device for ``dt`` seconds.
    """
    config = config or DeviceConfig()
    if not dt > 0:
        raise TimeStepError(f"Time step must be positive, got {dt}.")
    heading = state.tip_heading + np.radians(action.rotation_rate * dt)
    distance = action.translation_rate * dt
    path = state.path_history
    if distance > 0:
        path, heading = _advance(tree, path, heading, distance, config)
    elif distance < 0:
        path = _retract(tree, path, -distance, config)
    return _make_state(path, heading, config)


def tip_tracking(state: GuidewireState) -> np.ndarray:
    return np.array(state.tip_points)


def body_violations(tree: VesselTree, state: GuidewireState, tol: float = 1e-6) -> int:
    """
    Number of body points further than ``tol`` outside the lumen.
    """
    return int(np.sum(lumen_clearance(tree, state.path_history) < -tol))
