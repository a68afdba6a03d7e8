"""
Planar vessel trees: centerline branches annotated with radii.

A :class:`VesselTree` is the world geometry of the simulator. A point lies in the
lumen when its distance to the nearest centerline point does not exceed the radius
interpolated at that centerline point.
"""

import json
import typing
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .exceptions import (
    EndonavWarning,
    MissingSegmentError,
    ScaleRangeError,
    TreeFileError,
    TreeInvariantError,
    ZeroChordError,
)

SEGMENT_NAMES = (
    "common_iliac",
    "descending_aorta",
    "aortic_arch",
    "cca_left",
    "cca_right",
    "ica_left",
    "ica_right",
    "subclavian_left",
    "subclavian_right",
    "brachiocephalic",
)
TASK_SEGMENTS = (
    "common_iliac",
    "descending_aorta",
    "cca_left",
    "cca_right",
    "ica_left",
    "ica_right",
)
MAX_SPACING = 2.0
AUGMENT_RANGE = (0.7, 1.3)


@dataclass(frozen=True)
class CenterlineSample:
    position: typing.Tuple[float, float]
    radius: float
    arc_length: float


class LumenPoint(typing.NamedTuple):
    branch: int
    arc_length: float
    distance: float
    radius: float
    point: np.ndarray


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _arc_lengths(positions):
    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(steps)))


def resample(positions, radii, max_spacing=MAX_SPACING):
    """
    Insert linearly interpolated samples so that no two consecutive samples are more
    than ``max_spacing`` apart. Existing samples are kept untouched.
    """
    positions = np.asarray(positions, dtype=float)
    radii = np.asarray(radii, dtype=float)
    lengths = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    if not len(lengths) or lengths.max(initial=0) <= max_spacing:
        return positions, radii
    out_p, out_r = [positions[:1]], [radii[:1]]
    for i, length in enumerate(lengths):
        pieces = max(1, int(np.ceil(length / max_spacing)))
        t = np.arange(1, pieces + 1)[:, None] / pieces
        out_p.append(positions[i] + t * (positions[i + 1] - positions[i]))
        out_r.append(radii[i] + t[:, 0] * (radii[i + 1] - radii[i]))
        # Keep the original sample bit-exact rather than its interpolated twin.
        out_p[-1][-1] = positions[i + 1]
        out_r[-1][-1] = radii[i + 1]
    return np.concatenate(out_p), np.concatenate(out_r)


class VesselBranch:
    """
    One centerline polyline with a radius per sample, optionally attached to a parent
    branch at an arc length along the parent.
    """

    def __init__(
        self,
        id: int,
        name: str,
        positions,
        radii,
        parent: typing.Optional[typing.Tuple[int, float]] = None,
    ):
        self.id = int(id)
        self.name = name
        self.positions = _frozen(positions)
        self.radii = _frozen(radii)
        self.parent = None if parent is None else (int(parent[0]), float(parent[1]))
        self._validate()
        self.arc_length = _frozen(_arc_lengths(self.positions))
        if np.any(np.diff(self.arc_length) <= 0):
            sample = int(np.flatnonzero(np.diff(self.arc_length) <= 0)[0]) + 1
            raise TreeInvariantError(
                f"Branch {self.id} ('{self.name}') repeats sample {sample}.",
                self.id,
                sample,
            )

    def _validate(self):
        if self.name not in SEGMENT_NAMES:
            raise TreeInvariantError(
                f"Branch {self.id} has unknown segment name '{self.name}'.", self.id, None
            )
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise TreeInvariantError(
                f"Branch {self.id} positions must be an (N, 2) array.", self.id, None
            )
        if len(self.positions) < 2:
            raise TreeInvariantError(
                f"Branch {self.id} ('{self.name}') needs 2+ samples.", self.id, None
            )
        if self.radii.shape != (len(self.positions),):
            raise TreeInvariantError(
                f"Branch {self.id} has {len(self.radii)} radii for"
                f" {len(self.positions)} samples.",
                self.id,
                None,
            )
        bad = np.flatnonzero(~np.isfinite(self.radii) | (self.radii <= 0))
        if len(bad):
            raise TreeInvariantError(
                f"Branch {self.id} ('{self.name}') has non-positive radius at sample"
                f" {bad[0]}.",
                self.id,
                int(bad[0]),
            )
        bad = np.flatnonzero(~np.all(np.isfinite(self.positions), axis=1))
        if len(bad):
            raise TreeInvariantError(
                f"Branch {self.id} has a non-finite position at sample {bad[0]}.",
                self.id,
                int(bad[0]),
            )

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, VesselBranch):
            return NotImplemented
        return (
            self.id == other.id
            and self.name == other.name
            and self.parent == other.parent
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.radii, other.radii)
        )

    def __repr__(self):
        return (
            f"<VesselBranch {self.id} '{self.name}' n={len(self)} parent={self.parent}>"
        )

    @property
    def length(self) -> float:
        return float(self.arc_length[-1])

    @property
    def samples(self) -> typing.List[CenterlineSample]:
        return [
            CenterlineSample((float(p[0]), float(p[1])), float(r), float(s))
            for p, r, s in zip(self.positions, self.radii, self.arc_length)
        ]

    def locate(self, arc: float):
        """
        Return the position, unit tangent and radius at ``arc`` mm along the branch.
        """
        arc = min(max(float(arc), 0.0), self.length)
        i = int(np.searchsorted(self.arc_length, arc, side="right")) - 1
        i = min(max(i, 0), len(self) - 2)
        a, b = self.positions[i], self.positions[i + 1]
        seg = self.arc_length[i + 1] - self.arc_length[i]
        t = (arc - self.arc_length[i]) / seg
        tangent = (b - a) / seg
        radius = self.radii[i] + t * (self.radii[i + 1] - self.radii[i])
        return a + t * (b - a), tangent, float(radius)

    def remap_arc(self, arc: float, other: "VesselBranch") -> float:
        """
        Map an arc length on this branch to the arc length of the same sample-relative
        location on ``other``, a reshaped copy with identical sample count.
        """
        return float(np.interp(arc, self.arc_length, other.arc_length))


class VesselTree:
    """
    Directed tree of :class:`VesselBranch` objects. Immutable after construction.

    :param required_segments: Segment names that must each be present exactly once.
      Partial trees, such as the two halves fed to :func:`join_and_scale`, pass an
      empty tuple.
    """

    def __init__(
        self,
        branches: typing.Iterable[VesselBranch],
        root: int,
        *,
        required_segments: typing.Iterable[str] = TASK_SEGMENTS,
    ):
        self.branches = tuple(sorted(branches, key=lambda b: b.id))
        self.root = int(root)
        self._index = {b.id: b for b in self.branches}
        self._validate(tuple(required_segments))

    def _validate(self, required_segments):
        if len(self._index) != len(self.branches):
            raise TreeInvariantError("Duplicate branch ids in tree.", None, None)
        if self.root not in self._index:
            raise TreeInvariantError(
                f"Root branch {self.root} not in tree.", self.root, None
            )
        names = [b.name for b in self.branches]
        for name in set(names):
            if names.count(name) > 1:
                dup = [b.id for b in self.branches if b.name == name][1]
                raise TreeInvariantError(f"Segment '{name}' appears twice.", dup, None)
        for name in required_segments:
            if name not in names:
                raise MissingSegmentError(f"Tree has no '{name}' segment.", name)
        graph = nx.DiGraph()
        graph.add_nodes_from(self._index)
        for branch in self.branches:
            if branch.id == self.root:
                if branch.parent is not None:
                    raise TreeInvariantError(
                        f"Root branch {branch.id} cannot have a parent.", branch.id, None
                    )
                continue
            if branch.parent is None:
                raise TreeInvariantError(
                    f"Branch {branch.id} ('{branch.name}') has no parent but is not the"
                    " root.",
                    branch.id,
                    None,
                )
            pid, arc = branch.parent
            if pid not in self._index:
                raise TreeInvariantError(
                    f"Branch {branch.id} has unknown parent {pid}.", branch.id, None
                )
            graph.add_edge(pid, branch.id)
        if not nx.is_arborescence(graph):
            cycle = next(iter(nx.simple_cycles(graph)), [None])
            raise TreeInvariantError(
                f"Parent references of branches {cycle} are cyclic.", cycle[0], None
            )
        for branch in self.branches:
            if branch.parent is None:
                continue
            pid, arc = branch.parent
            parent = self._index[pid]
            if arc < -1e-9 or arc > parent.length + 1e-9:
                raise TreeInvariantError(
                    f"Branch {branch.id} attaches at {arc} mm, outside parent {pid}.",
                    branch.id,
                    0,
                )
            point, _, radius = parent.locate(arc)
            if np.linalg.norm(branch.positions[0] - point) > radius + 1e-6:
                raise TreeInvariantError(
                    f"First sample of branch {branch.id} ('{branch.name}') lies outside"
                    f" the lumen of parent {pid}.",
                    branch.id,
                    0,
                )

    def __eq__(self, other):
        if not isinstance(other, VesselTree):
            return NotImplemented
        return self.root == other.root and self.branches == other.branches

    def __iter__(self):
        return iter(self.branches)

    def __len__(self):
        return len(self.branches)

    def __repr__(self):
        return f"<VesselTree root={self.root} branches={len(self)}>"

    def branch(self, id: int) -> VesselBranch:
        return self._index[id]

    def by_name(self, name: str) -> VesselBranch:
        for branch in self.branches:
            if branch.name == name:
                return branch
        raise MissingSegmentError(f"Tree has no '{name}' segment.", name)

    def has_segment(self, name: str) -> bool:
        return any(b.name == name for b in self.branches)

    def children(self, id: int) -> typing.List[VesselBranch]:
        return [b for b in self.branches if b.parent is not None and b.parent[0] == id]

    @cached_property
    def bounding_box(self) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        Extent of the lumen: all centerline samples padded by their radius.
        """
        lo = np.min([(b.positions - b.radii[:, None]).min(axis=0) for b in self], axis=0)
        hi = np.max([(b.positions + b.radii[:, None]).max(axis=0) for b in self], axis=0)
        return _frozen(lo), _frozen(hi)

    @cached_property
    def _segments(self):
        a, b, ra, rb, arc, length, owner = [], [], [], [], [], [], []
        for branch in self.branches:
            a.append(branch.positions[:-1])
            b.append(branch.positions[1:])
            ra.append(branch.radii[:-1])
            rb.append(branch.radii[1:])
            arc.append(branch.arc_length[:-1])
            length.append(np.diff(branch.arc_length))
            owner.append(np.full(len(branch) - 1, branch.id))
        return tuple(np.concatenate(x) for x in (a, b, ra, rb, arc, length, owner))

    @cached_property
    def junctions(self) -> typing.List[typing.Tuple[np.ndarray, int, typing.List[int]]]:
        """
        Branch points as ``(position, parent id, child ids)`` triples.
        """
        points = {}
        for branch in self.branches:
            if branch.parent is None:
                continue
            key = (branch.parent[0], round(branch.parent[1], 9))
            points.setdefault(key, []).append(branch.id)
        return [
            (self.branch(pid).locate(arc)[0], pid, sorted(children))
            for (pid, arc), children in sorted(points.items())
        ]

    def _gap(self, branch: VesselBranch) -> float:
        pid, arc = branch.parent
        attach = self.branch(pid).locate(arc)[0]
        return float(np.linalg.norm(branch.positions[0] - attach))


def _project(tree: VesselTree, points):
    a, b, ra, rb, arc, length, owner = tree._segments
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = b - a
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("mkj,kj->mk", rel, d) / (length**2)[None, :], 0.0, 1.0)
    nearest = a[None, :, :] + t[..., None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - nearest, axis=2)
    k = np.argmin(dist, axis=1)
    rows = np.arange(len(points))
    tk = t[rows, k]
    return (
        owner[k],
        arc[k] + tk * length[k],
        dist[rows, k],
        ra[k] + tk * (rb[k] - ra[k]),
        nearest[rows, k],
    )


def nearest_lumen_point(tree: VesselTree, p) -> LumenPoint:
    """
    Closest point on any centerline of ``tree`` to the 2D point ``p``. Ties resolve to
    the lowest branch id and the most proximal segment.
    """
    owner, arc, dist, radius, nearest = _project(tree, p)
    return LumenPoint(
        int(owner[0]), float(arc[0]), float(dist[0]), float(radius[0]), nearest[0]
    )


def lumen_clearance(tree: VesselTree, points) -> np.ndarray:
    """
    Signed clearance ``radius - distance`` of each point; negative outside the lumen.
    """
    _, _, dist, radius, _ = _project(tree, points)
    return radius - dist


def _ancestry(tree: VesselTree, branch_id: int, arc: float):
    chain = {}
    cost = 0.0
    branch = tree.branch(branch_id)
    while True:
        chain[branch.id] = (arc, cost)
        if branch.parent is None:
            return chain
        cost = cost + arc + tree._gap(branch)
        pid, arc = branch.parent
        branch = tree.branch(pid)


def tree_distance(
    tree: VesselTree, a: typing.Tuple[int, float], b: typing.Tuple[int, float]
):
    """
    Length of the tree path between two ``(branch id, arc length)`` locations.
    """
    chain_a = _ancestry(tree, *a)
    chain_b = _ancestry(tree, *b)
    for branch_id in chain_b:
        if branch_id in chain_a:
            arc_a, cost_a = chain_a[branch_id]
            arc_b, cost_b = chain_b[branch_id]
            return (cost_a + cost_b) + abs(arc_a - arc_b)
    raise TreeInvariantError("Locations lie on disconnected branches.", b[0], None)


def path_length(tree: VesselTree, a, b) -> float:
    """
    Distance between two points measured along the centerlines, after projecting both
    onto their nearest centerline location.
    """
    pa = nearest_lumen_point(tree, a)
    pb = nearest_lumen_point(tree, b)
    return float(
        tree_distance(tree, (pa.branch, pa.arc_length), (pb.branch, pb.arc_length))
    )


def tortuosity(branch: VesselBranch) -> float:
    chord = float(np.linalg.norm(branch.positions[-1] - branch.positions[0]))
    if chord <= 1e-12:
        raise ZeroChordError(
            f"Branch {branch.id} ('{branch.name}') starts and ends at the same point.",
            branch.id,
        )
    return branch.length / chord


def _reshape_tree(tree: VesselTree, transform, radius_scale, *, required_segments=None):
    """
    Apply ``transform`` to every position and ``radius_scale`` to every radius, keeping
    attachments at the same relative location on their parent.
    """
    reshaped = {
        b.id: VesselBranch(b.id, b.name, transform(b.positions), b.radii * radius_scale)
        for b in tree
    }
    branches = []
    for branch in tree:
        new = reshaped[branch.id]
        parent = None
        if branch.parent is not None:
            pid, arc = branch.parent
            parent = (pid, tree.branch(pid).remap_arc(arc, reshaped[pid]))
        branches.append(VesselBranch(new.id, new.name, new.positions, new.radii, parent))
    if required_segments is None:
        required_segments = [s for s in TASK_SEGMENTS if tree.has_segment(s)]
    scaled = VesselTree(branches, tree.root, required_segments=required_segments)
    return _resampled(scaled)


def _resampled(tree: VesselTree, max_spacing=MAX_SPACING) -> VesselTree:
    if all(np.diff(b.arc_length).max() <= max_spacing for b in tree):
        return tree
    dense = {}
    for branch in tree:
        positions, radii = resample(branch.positions, branch.radii, max_spacing)
        dense[branch.id] = VesselBranch(branch.id, branch.name, positions, radii)
    branches = []
    for branch in tree:
        parent = None
        if branch.parent is not None:
            pid, arc = branch.parent
            # Inserted samples lie on the old segments; arc lengths are unchanged.
            parent = (pid, min(arc, dense[pid].length))
        new = dense[branch.id]
        branches.append(VesselBranch(new.id, new.name, new.positions, new.radii, parent))
    required = [s for s in TASK_SEGMENTS if tree.has_segment(s)]
    return VesselTree(branches, tree.root, required_segments=required)


def augment_scale(tree: VesselTree, sx: float, sy: float) -> VesselTree:
    """
    Scale the tree's width by ``sx`` and height by ``sy``; radii scale by their mean.
    """
    lo, hi = AUGMENT_RANGE
    for name, s in (("sx", sx), ("sy", sy)):
        if not lo <= s <= hi:
            raise ScaleRangeError(f"Augmentation factor {name}={s} outside [{lo}, {hi}].")
    factors = np.array([sx, sy], dtype=float)
    return _reshape_tree(tree, lambda p: p * factors, (sx + sy) / 2)


def join_and_scale(
    lower: VesselTree,
    upper: VesselTree,
    *,
    required_segments: typing.Iterable[str] = TASK_SEGMENTS,
) -> VesselTree:
    """
    Scale ``lower`` uniformly so the radius at the end of its descending aorta matches
    the first radius of ``upper``'s aortic arch, then attach the arch there.
    """
    aorta = lower.by_name("descending_aorta")
    arch = upper.branch(upper.root)
    if arch.name != "aortic_arch":
        raise MissingSegmentError(
            "Upper tree's root is not an aortic arch.", "aortic_arch"
        )
    factor = arch.radii[0] / aorta.radii[-1]
    if not np.isfinite(factor) or factor <= 0:
        raise ScaleRangeError(f"Cannot join trees with scale factor {factor}.")
    offset = arch.positions[0] - factor * aorta.positions[-1]
    branches = []
    for branch in lower:
        parent = branch.parent
        if parent is not None:
            parent = (parent[0], parent[1] * factor)
        branches.append(
            VesselBranch(
                branch.id,
                branch.name,
                branch.positions * factor + offset,
                branch.radii * factor,
                parent,
            )
        )
    scaled_aorta = next(b for b in branches if b.name == "descending_aorta")
    shift = max(b.id for b in lower) + 1
    for branch in upper:
        if branch.parent is None:
            parent = (scaled_aorta.id, scaled_aorta.length)
        else:
            parent = (branch.parent[0] + shift, branch.parent[1])
        branches.append(
            VesselBranch(
                branch.id + shift, branch.name, branch.positions, branch.radii, parent
            )
        )
    joined = VesselTree(branches, lower.root, required_segments=required_segments)
    return _resampled(joined)


def tree_to_dict(tree: VesselTree) -> dict:
    return {
        "root": tree.root,
        "branches": [
            {
                "id": b.id,
                "name": b.name,
                "parent": None if b.parent is None else [b.parent[0], b.parent[1]],
                "samples": [
                    [float(x), float(y), float(r)]
                    for (x, y), r in zip(b.positions, b.radii)
                ],
            }
            for b in tree
        ],
    }


def tree_from_dict(
    data: dict,
    *,
    max_spacing=MAX_SPACING,
    source="<dict>",
    required_segments: typing.Iterable[str] = TASK_SEGMENTS,
) -> VesselTree:
    try:
        root = int(data["root"])
        records = list(data["branches"])
    except (KeyError, TypeError, ValueError) as e:
        raise TreeFileError(f"Malformed tree data in '{source}': {e}", source) from None
    branches = []
    for record in records:
        try:
            id = int(record["id"])
            name = str(record["name"])
            parent = record.get("parent")
            samples = np.array(record["samples"], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise TreeFileError(
                f"Malformed branch record in '{source}': {e}", source
            ) from None
        if samples.ndim != 2 or samples.shape[1] not in (3, 4):
            raise TreeFileError(
                f"Branch {id} samples in '{source}' must have 3 or 4 columns.", source
            )
        positions, radii = samples[:, :2], samples[:, -1]
        bad = np.flatnonzero(~(radii > 0))
        if len(bad):
            raise TreeInvariantError(
                f"Branch {id} ('{name}') has non-positive radius at sample {bad[0]}.",
                id,
                int(bad[0]),
            )
        dense_p, dense_r = resample(positions, radii, max_spacing)
        if len(dense_p) != len(positions):
            warnings.warn(
                f"Branch {id} in '{source}' resampled to {max_spacing} mm spacing.",
                EndonavWarning,
            )
        if parent is not None:
            parent = (int(parent[0]), float(parent[1]))
        branches.append((id, name, dense_p, dense_r, parent))
    lengths = {id: _arc_lengths(p)[-1] for id, _, p, _, _ in branches}
    built = []
    for id, name, positions, radii, parent in branches:
        if parent is not None and parent[0] in lengths:
            # Arc lengths of projected 3D input are measured on the planar polyline.
            parent = (parent[0], min(parent[1], float(lengths[parent[0]])))
        built.append(VesselBranch(id, name, positions, radii, parent))
    return VesselTree(built, root, required_segments=required_segments)


def load_tree(
    path, *, required_segments: typing.Iterable[str] = TASK_SEGMENTS
) -> VesselTree:
    """
    Load and validate a tree file. 4-column ``[x, y, z, r]`` samples are projected onto
    the plane by dropping ``z``.
    """
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise TreeFileError(
            f"Could not parse tree file '{path}': {e}", str(path)
        ) from None
    return tree_from_dict(data, source=str(path), required_segments=required_segments)


def save_tree(tree: VesselTree, path) -> None:
    path = Path(path)
    with open(path, "w") as f:
        f.write(json.dumps(tree_to_dict(tree), sort_keys=True))
        f.write("\n")
