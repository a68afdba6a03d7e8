"""
Procedural aortic arch and supra-aortic anatomy.

Each branch centerline is a circular arc of random bend perturbed by a whole number of
sinusoidal half-waves, so its end points stay on the underlying arc. The lower half
(iliac and descending aorta) and the upper half (arch and great vessels) are built
separately and joined with :func:`~endonav.geometry.join_and_scale`.
"""

import typing
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import AnatomyParameterError
from .geometry import (
    VesselBranch,
    VesselTree,
    join_and_scale,
    tortuosity,
)

Range = typing.Tuple[float, float]


@dataclass
class SegmentParams:
    length: Range
    radius: Range
    #: Heading at the branch origin, degrees counter-clockwise from +x.
    heading: float
    #: Total bend of the underlying arc, degrees; the sign is drawn at random.
    bend: Range = (0.0, 0.0)
    #: Multiplier on :attr:`AnatomyParams.tortuosity_amplitude`.
    waviness: float = 1.0
    #: Distal radius as a fraction of the proximal radius.
    taper: Range = (0.85, 0.95)


def _default_segments():
    return {
        "common_iliac": SegmentParams((50.0, 70.0), (4.0, 4.6), 100.0, (10.0, 30.0), 0.5),
        "descending_aorta": SegmentParams(
            (150.0, 190.0), (8.5, 9.5), 90.0, (5.0, 20.0), 0.5, (0.9, 0.97)
        ),
        "brachiocephalic": SegmentParams(
            (30.0, 40.0), (5.5, 6.2), 115.0, (0.0, 15.0), 0.0
        ),
        "subclavian_left": SegmentParams(
            (55.0, 70.0), (4.2, 4.8), 45.0, (20.0, 40.0), 0.5
        ),
        "subclavian_right": SegmentParams(
            (55.0, 70.0), (4.2, 4.8), 165.0, (20.0, 40.0), 0.5
        ),
        "cca_left": SegmentParams((85.0, 105.0), (3.4, 3.9), 90.0, (30.0, 80.0)),
        "cca_right": SegmentParams((85.0, 105.0), (3.4, 3.9), 95.0, (30.0, 80.0)),
        "ica_left": SegmentParams((50.0, 65.0), (2.4, 2.9), 90.0, (20.0, 60.0)),
        "ica_right": SegmentParams((50.0, 65.0), (2.4, 2.9), 90.0, (20.0, 60.0)),
    }


#: Take-off angle on the arch (radians from the descending end) per arch type.
ARCH_TAKEOFFS = {
    "I": {"subclavian_left": 0.36, "cca_left": 0.50, "brachiocephalic": 0.66},
    "II": {"subclavian_left": 0.44, "cca_left": 0.60, "brachiocephalic": 0.78},
}
#: Parent of every non-root segment of the upper tree.
UPPER_TOPOLOGY = {
    "subclavian_left": "aortic_arch",
    "cca_left": "aortic_arch",
    "brachiocephalic": "aortic_arch",
    "cca_right": "brachiocephalic",
    "subclavian_right": "brachiocephalic",
    "ica_left": "cca_left",
    "ica_right": "cca_right",
}


@dataclass
class AnatomyParams:
    arch_type: str = "I"
    #: Probability of a Type-I arch when a cohort draws arch types.
    type_i_fraction: float = 0.8
    arch_radius: Range = (9.5, 11.0)
    #: Radius of curvature of the arch centerline.
    arch_span: Range = (26.0, 34.0)
    #: Peak lateral offset of the sinusoidal perturbation, mm.
    tortuosity_amplitude: float = 4.0
    #: Maximum half-waves per branch; limited further by the curvature bound.
    max_waves: int = 4
    #: Smallest allowed ratio between the centerline radius of curvature and lumen radius.
    curvature_margin: float = 3.0
    spacing: float = 1.0
    segments: typing.Dict[str, SegmentParams] = field(default_factory=_default_segments)

    def __post_init__(self):
        self.segments = {
            k: v if isinstance(v, SegmentParams) else SegmentParams(**v)
            for k, v in self.segments.items()
        }

    def validate(self):
        if self.arch_type not in ARCH_TAKEOFFS:
            raise AnatomyParameterError(f"Unknown arch type '{self.arch_type}'.")
        if not 0 <= self.type_i_fraction <= 1:
            raise AnatomyParameterError("type_i_fraction must lie in [0, 1].")
        if self.tortuosity_amplitude < 0 or self.spacing <= 0:
            raise AnatomyParameterError("Amplitude and spacing must be non-negative.")
        required = set(UPPER_TOPOLOGY) | {"common_iliac", "descending_aorta"}
        missing = required - set(self.segments)
        if missing:
            raise AnatomyParameterError(f"Missing segment parameters: {sorted(missing)}.")
        for name, seg in self.segments.items():
            for label, (lo, hi) in (("length", seg.length), ("radius", seg.radius)):
                if not 0 < lo <= hi:
                    raise AnatomyParameterError(
                        f"Invalid {label} range {lo, hi} for {name}."
                    )
        radius = {n: s.radius for n, s in self.segments.items()}
        radius["aortic_arch"] = self.arch_radius
        for child, parent in UPPER_TOPOLOGY.items():
            if radius[child][1] > radius[parent][0]:
                raise AnatomyParameterError(
                    f"Radius range of '{child}' {radius[child]} can exceed that of its"
                    f" parent '{parent}' {radius[parent]}."
                )
        return self


def _heading(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def _branch_path(rng, start, heading, seg: SegmentParams, params: AnatomyParams):
    """
    Sample a perturbed arc starting at ``start`` in direction ``heading`` (radians).
    Returns positions, radii and the distal heading.
    """
    length = rng.uniform(*seg.length)
    r0 = rng.uniform(*seg.radius)
    r1 = r0 * rng.uniform(*seg.taper)
    bend = np.radians(rng.uniform(*seg.bend)) * rng.choice([-1.0, 1.0])
    amplitude = params.tortuosity_amplitude * seg.waviness * rng.uniform(0.75, 1.25)
    # Bound the curvature of the perturbation so the tube does not fold over itself.
    margin = params.curvature_margin * r0 * max(amplitude, 1e-9)
    limit = length / np.pi * np.sqrt(1 / margin)
    waves = int(rng.integers(2, params.max_waves + 1))
    waves = max(1, min(waves, int(limit)))
    n = max(2, int(np.ceil(length / params.spacing)) + 1)
    s = np.linspace(0.0, length, n)
    phi = heading + bend * s / length
    if abs(bend) > 1e-12:
        kappa = bend / length
        arc = np.stack([np.sin(phi) - np.sin(heading), np.cos(heading) - np.cos(phi)], 1)
        base = start + arc / kappa
    else:
        base = start + s[:, None] * _heading(heading)[None, :]
    normal = np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    offset = amplitude * np.sin(np.pi * waves * s / length)
    positions = base + offset[:, None] * normal
    positions[0] = start
    radii = r0 + (r1 - r0) * s / length
    return positions, radii, heading + bend


def _distal_heading(branch: VesselBranch) -> float:
    tangent = branch.locate(branch.length)[1]
    return float(np.arctan2(tangent[1], tangent[0]))


def generate_lower_tree(params: AnatomyParams, seed: int) -> VesselTree:
    """
    Iliac artery and descending aorta, proximal to distal in navigation order.
    """
    rng = np.random.default_rng([seed, 1])
    iliac = params.segments["common_iliac"]
    aorta = params.segments["descending_aorta"]
    p0, r0, _ = _branch_path(rng, np.zeros(2), np.radians(iliac.heading), iliac, params)
    iliac_branch = VesselBranch(0, "common_iliac", p0, r0)
    # The aorta widens at the confluence; radii only taper within a branch.
    p1, r1, _ = _branch_path(rng, p0[-1], np.radians(aorta.heading), aorta, params)
    aorta_branch = VesselBranch(1, "descending_aorta", p1, r1, (0, iliac_branch.length))
    return VesselTree([iliac_branch, aorta_branch], 0, required_segments=())


def generate_upper_tree(params: AnatomyParams, seed: int, index: int = 0) -> VesselTree:
    """
    Aortic arch with the great vessels and internal carotids for ``params.arch_type``.
    Trees of one cohort share ``seed`` and differ in ``index``.
    """
    rng = np.random.default_rng([seed, 2, index])
    span = rng.uniform(*params.arch_span)
    r_arch = rng.uniform(*params.arch_radius)
    samples = max(3, int(np.ceil(np.pi * span / params.spacing)) + 1)
    theta = np.linspace(0.0, np.pi, samples)
    arch_p = np.array([-span, 0.0]) + span * np.stack([np.cos(theta), np.sin(theta)], 1)
    arch_r = r_arch * np.linspace(1.0, 0.97, len(theta))
    branches = {"aortic_arch": VesselBranch(0, "aortic_arch", arch_p, arch_r)}
    takeoff = ARCH_TAKEOFFS[params.arch_type]
    for id, name in enumerate(UPPER_TOPOLOGY, start=1):
        parent = branches[UPPER_TOPOLOGY[name]]
        seg = params.segments[name]
        if parent.name == "aortic_arch":
            attach = takeoff[name] * np.pi * span
            heading = np.radians(seg.heading)
        else:
            # Bifurcation at the parent's distal end; an ica continues its carotid.
            attach = parent.length
            heading = _distal_heading(parent) if name.startswith("ica") else np.radians(
                seg.heading
            )
        start = parent.locate(attach)[0]
        positions, radii, _ = _branch_path(rng, start, heading, seg, params)
        branches[name] = VesselBranch(id, name, positions, radii, (parent.id, attach))
    return VesselTree(branches.values(), 0, required_segments=())


def generate_synthetic_tree(params: AnatomyParams, seed: int) -> VesselTree:
    """
    Full navigation anatomy: deterministic in ``(params, seed)``.
    """
    params.validate()
    lower = generate_lower_tree(params, seed)
    return join_and_scale(lower, generate_upper_tree(params, seed))


def draw_arch_type(params: AnatomyParams, rng: np.random.Generator) -> str:
    return "I" if rng.random() < params.type_i_fraction else "II"


def generate_cohort(
    params: AnatomyParams, seed: int, count: int
) -> typing.List[typing.Tuple[str, VesselTree]]:
    """
    One lower tree per ``seed`` joined with ``count`` upper trees whose arch types are
    drawn with probability ``params.type_i_fraction`` for Type-I.
    """
    params.validate()
    lower = generate_lower_tree(params, seed)
    rng = np.random.default_rng([seed, 3])
    cohort = []
    for index in range(count):
        drawn = replace(params, arch_type=draw_arch_type(params, rng))
        upper = generate_upper_tree(drawn, seed, index)
        cohort.append((drawn.arch_type, join_and_scale(lower, upper)))
    return cohort


def side_tortuosity(tree: VesselTree) -> typing.Dict[str, float]:
    """
    Mean tortuosity of the carotid segments on each side.
    """
    return {
        side: float(
            np.mean([tortuosity(tree.by_name(f"{v}_{side}")) for v in ("cca", "ica")])
        )
        for side in ("left", "right")
    }


def cohort_summary(cohort: typing.List[typing.Tuple[str, VesselTree]]) -> dict:
    per_tree = [
        {"index": i, "arch_type": arch_type, "tortuosity": side_tortuosity(tree)}
        for i, (arch_type, tree) in enumerate(cohort)
    ]
    summary = {"trees": per_tree}
    for side in ("left", "right"):
        values = [t["tortuosity"][side] for t in per_tree]
        summary[f"{side}_tortuosity"] = {
            "mean": float(np.mean(values)) if values else None,
            "std": float(np.std(values)) if values else None,
        }
    return summary
