"""Synthetic scenes, corrupted proposals, and training-data preparation ops.

The simulator renders rectangles moving under affine motion, then corrupts
the resulting ground truth the way an unstable per-frame grounding model
would: jittered target boxes, random distractor boxes, score noise, and
occasional identity switches where the target's score trades places with a
distractor's.  Everything is driven by the counter-based generator in
:mod:`trackref.rng`, so outputs are byte-identical for a given seed at any
degree of parallelism.

Also here: the box jitter used to harden a box-guided segmenter against
sloppy localization (each edge offset drawn uniformly within a fraction of
the box side), synthetic optical flow from foreground/background affine
motion, the flow-magnitude normalization chain, and the 5-channel guidance
stack (RGB + flow magnitude + box interior).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import (
    AffineTransform,
    Box,
    Mask,
    box_from_mask,
    rasterize_box,
    warp_mask,
)
from .rerank import Proposal, VideoProposals
from .rng import SplitRng

TARGET_BASE_SCORE = 0.8
DISTRACTOR_BASE_SCORE = 0.3
PROPOSAL_OBJECTNESS = 0.9


@dataclass(frozen=True)
class ObjectSpec:
    initial_box: Box
    motion: AffineTransform  # applied once per frame step


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    num_frames: int
    objects: tuple[ObjectSpec, ...]
    background: AffineTransform
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid scene size {self.width}x{self.height}")
        if self.num_frames < 1:
            raise ValueError("a scene needs at least one frame")
        if not self.objects:
            raise ValueError("a scene needs at least one object")
        for index, obj in enumerate(self.objects, start=1):
            box = obj.initial_box
            if box.x < 0 or box.y < 0 or box.x + box.w > self.width or box.y + box.h > self.height:
                raise ValueError(f"object {index} initial box outside image bounds")


@dataclass(frozen=True)
class CorruptionSpec:
    distractors_per_frame: int = 0
    score_noise_sd: float = 0.0
    id_switch_prob: float = 0.0
    box_jitter_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.distractors_per_frame < 0:
            raise ValueError("distractors_per_frame must be >= 0")
        if self.score_noise_sd < 0:
            raise ValueError("score_noise_sd must be >= 0")
        if not 0.0 <= self.id_switch_prob <= 1.0:
            raise ValueError("id_switch_prob must be within [0, 1]")
        if self.box_jitter_fraction < 0:
            raise ValueError("box_jitter_fraction must be >= 0")


@dataclass
class SceneGroundTruth:
    """Per-object, per-frame masks and tight boxes for one rendered scene."""

    width: int
    height: int
    num_frames: int
    masks: dict[int, dict[int, Mask]]
    boxes: dict[int, dict[int, Box | None]]


# ---------------------------------------------------------------------------
# Spec files: flat "key = value" lines with # comments
# ---------------------------------------------------------------------------

def _parse_kv(text: str, path: str = "<spec>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{path}:{number}: empty key")
        if key in entries:
            raise ValueError(f"{path}:{number}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _parse_floats(value: str, count: int, key: str) -> list[float]:
    parts = value.split()
    if len(parts) != count:
        raise ValueError(f"key {key!r} expects {count} numbers, got {len(parts)}")
    return [float(p) for p in parts]


def _parse_affine(value: str, key: str) -> AffineTransform:
    a, b, tx, c, d, ty = _parse_floats(value, 6, key)
    return AffineTransform(a, b, tx, c, d, ty)


def parse_scene_spec(text: str, path: str = "<scene spec>") -> SceneSpec:
    """Parse a scene spec file.

    Recognized keys: ``width``, ``height``, ``num_frames``, ``seed``,
    ``background`` (six affine coefficients ``a b tx c d ty``), and per
    object ``object<k>.box`` (``x y w h``) / ``object<k>.motion`` (affine),
    with k counting from 1.
    """
    entries = _parse_kv(text, path)
    scalars = {"width": 1, "height": 1, "num_frames": 1, "seed": 0}
    boxes: dict[int, Box] = {}
    motions: dict[int, AffineTransform] = {}
    background = AffineTransform.identity()
    for key, value in entries.items():
        if key in scalars:
            scalars[key] = int(value)
        elif key == "background":
            background = _parse_affine(value, key)
        elif key.startswith("object") and "." in key:
            head, _, field = key.partition(".")
            try:
                index = int(head[len("object"):])
            except ValueError:
                raise ValueError(f"unknown scene spec key: {key!r}") from None
            if field == "box":
                x, y, w, h = _parse_floats(value, 4, key)
                boxes[index] = Box(x, y, w, h)
            elif field == "motion":
                motions[index] = _parse_affine(value, key)
            else:
                raise ValueError(f"unknown scene spec key: {key!r}")
        else:
            raise ValueError(f"unknown scene spec key: {key!r}")
    if not boxes:
        raise ValueError("scene spec defines no objects")
    indices = sorted(boxes)
    if indices != list(range(1, len(indices) + 1)):
        raise ValueError(f"object indices must be contiguous from 1, got {indices}")
    objects = []
    for index in indices:
        motion = motions.pop(index, AffineTransform.identity())
        objects.append(ObjectSpec(boxes[index], motion))
    if motions:
        raise ValueError(f"motion given for undefined objects: {sorted(motions)}")
    return SceneSpec(
        width=scalars["width"], height=scalars["height"],
        num_frames=scalars["num_frames"], objects=tuple(objects),
        background=background, seed=scalars["seed"],
    )


def parse_corruption_spec(text: str, path: str = "<corruption spec>") -> CorruptionSpec:
    entries = _parse_kv(text, path)
    known = {
        "distractors_per_frame": int,
        "score_noise_sd": float,
        "id_switch_prob": float,
        "box_jitter_fraction": float,
        "seed": int,
    }
    kwargs = {}
    for key, value in entries.items():
        if key not in known:
            raise ValueError(f"unknown corruption spec key: {key!r}")
        kwargs[key] = known[key](value)
    return CorruptionSpec(**kwargs)


# ---------------------------------------------------------------------------
# Data-preparation operations
# ---------------------------------------------------------------------------

def jitter_box(
    box: Box,
    fraction: float,
    rng: SplitRng,
    image_width: float,
    image_height: float,
    max_retries: int = 10,
) -> Box:
    """Randomly perturb each box edge within +-fraction of the box side.

    The two x-edges move independently by at most ``fraction * w`` and the
    two y-edges by at most ``fraction * h``; the result is clamped into the
    image.  Draws producing a side of one pixel or less are retried a bounded
    number of times, after which the box is forced to the minimum size.
    """
    if fraction < 0:
        raise ValueError("jitter fraction must be >= 0")
    for _ in range(max_retries):
        x0 = box.x + rng.uniform(-fraction * box.w, fraction * box.w)
        x1 = box.x + box.w + rng.uniform(-fraction * box.w, fraction * box.w)
        y0 = box.y + rng.uniform(-fraction * box.h, fraction * box.h)
        y1 = box.y + box.h + rng.uniform(-fraction * box.h, fraction * box.h)
        x0, x1 = max(x0, 0.0), min(x1, image_width)
        y0, y1 = max(y0, 0.0), min(y1, image_height)
        if x1 - x0 > 1.0 and y1 - y0 > 1.0:
            return Box(x0, y0, x1 - x0, y1 - y0)
    x0 = min(max(box.x, 0.0), max(image_width - 1.0, 0.0))
    y0 = min(max(box.y, 0.0), max(image_height - 1.0, 0.0))
    return Box(x0, y0, min(1.0, image_width - x0), min(1.0, image_height - y0))


def synth_flow(
    fg_mask: Mask, fg: AffineTransform, bg: AffineTransform
) -> np.ndarray:
    """Dense flow field (H, W, 2) from foreground and background motion.

    The flow at pixel p is ``motion(p) - p`` using the foreground transform
    inside the mask and the background transform elsewhere.
    """
    height, width = fg_mask.shape
    cols, rows = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    flow = np.empty((height, width, 2), dtype=float)
    for transform, region in ((bg, ~fg_mask), (fg, fg_mask)):
        dx = transform.a * cols + transform.b * rows + transform.tx - cols
        dy = transform.c * cols + transform.d * rows + transform.ty - rows
        flow[region, 0] = dx[region]
        flow[region, 1] = dy[region]
    return flow


def flow_magnitude_image(fwd: np.ndarray, bwd: np.ndarray) -> np.ndarray:
    """Normalized motion-magnitude image in [0, 255].

    The per-field component-wise median vector is subtracted from each field
    (cancelling global/camera motion), magnitudes of the forward and backward
    fields are averaged, and the result is min-max scaled to [0, 255].  A
    constant magnitude field maps to all zeros.
    """
    fwd = np.asarray(fwd, dtype=float)
    bwd = np.asarray(bwd, dtype=float)
    if fwd.shape != bwd.shape or fwd.ndim != 3 or fwd.shape[2] != 2:
        raise ValueError(f"flow fields must share shape (H, W, 2): {fwd.shape} vs {bwd.shape}")
    magnitudes = []
    for field in (fwd, bwd):
        centered = field - np.median(field.reshape(-1, 2), axis=0)
        magnitudes.append(np.hypot(centered[..., 0], centered[..., 1]))
    combined = (magnitudes[0] + magnitudes[1]) / 2.0
    low, high = float(combined.min()), float(combined.max())
    if high - low <= 0.0:
        return np.zeros_like(combined)
    return (combined - low) / (high - low) * 255.0


def guidance_channels(rgb: np.ndarray, flow_magnitude: np.ndarray, box: Box) -> np.ndarray:
    """Stack (H, W, 5): R, G, B, flow magnitude, box-interior channel.

    The box channel is 255 at pixels whose centers lie inside the box and 0
    elsewhere.
    """
    rgb = np.asarray(rgb, dtype=float)
    flow_magnitude = np.asarray(flow_magnitude, dtype=float)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"rgb must have shape (H, W, 3), got {rgb.shape}")
    if flow_magnitude.shape != rgb.shape[:2]:
        raise ValueError(
            f"flow magnitude shape {flow_magnitude.shape} does not match image {rgb.shape[:2]}"
        )
    height, width = flow_magnitude.shape
    box_channel = rasterize_box(box, width, height).astype(float) * 255.0
    return np.dstack([rgb, flow_magnitude, box_channel])


# ---------------------------------------------------------------------------
# Scene generation and corruption
# ---------------------------------------------------------------------------

def generate_scene(spec: SceneSpec) -> SceneGroundTruth:
    """Render ground-truth masks and boxes for every object and frame.

    Frame t carries the initial rectangle warped by the object's motion
    composed t-1 times (composition, not repeated warping, so rounding does
    not accumulate).  Objects that leave the image get a None box.
    """
    masks: dict[int, dict[int, Mask]] = {}
    boxes: dict[int, dict[int, Box | None]] = {}
    for index, obj in enumerate(spec.objects, start=1):
        base = rasterize_box(obj.initial_box, spec.width, spec.height)
        per_frame_masks: dict[int, Mask] = {}
        per_frame_boxes: dict[int, Box | None] = {}
        transform = AffineTransform.identity()
        for frame in range(1, spec.num_frames + 1):
            mask = base if frame == 1 else warp_mask(base, transform)
            per_frame_masks[frame] = mask
            per_frame_boxes[frame] = box_from_mask(mask)
            transform = obj.motion.compose(transform)
        masks[index] = per_frame_masks
        boxes[index] = per_frame_boxes
    return SceneGroundTruth(spec.width, spec.height, spec.num_frames, masks, boxes)


def _clamp01(value: float) -> float:
    return min(max(value, 0.0), 1.0)


def _distractor_box(rng: SplitRng, width: int, height: int) -> Box:
    w = rng.uniform(0.1, 0.5) * width
    h = rng.uniform(0.1, 0.5) * height
    w, h = max(w, 1.0), max(h, 1.0)
    x = rng.uniform(0.0, max(width - w, 0.0))
    y = rng.uniform(0.0, max(height - h, 0.0))
    return Box(x, y, w, h)


def generate_proposals(
    gt: SceneGroundTruth,
    corruption: CorruptionSpec,
    video_id: str = "video",
    rng: SplitRng | None = None,
) -> dict[str, VideoProposals]:
    """Corrupted per-frame proposals for every object of a scene.

    Per frame and object: the true box jittered by ``box_jitter_fraction``
    with score clamp01(0.8 + noise) and proposal id 0, plus
    ``distractors_per_frame`` boxes drawn independently each frame with score
    clamp01(0.3 + noise) and ids 1..D.  With probability ``id_switch_prob``
    the target's score trades places with one distractor's for that frame.
    All draws come from streams keyed by (seed, object, frame, purpose), so
    output is reproducible and independent of evaluation order.
    """
    if rng is None:
        rng = SplitRng(corruption.seed)
    out: dict[str, VideoProposals] = {}
    for obj_index in sorted(gt.boxes):
        obj_rng = rng.child("object", obj_index)
        frames: dict[int, list[Proposal]] = {}
        for frame in range(1, gt.num_frames + 1):
            frame_rng = obj_rng.child("frame", frame)
            proposals: list[Proposal] = []
            true_box = gt.boxes[obj_index].get(frame)
            if true_box is not None:
                jittered = jitter_box(
                    true_box, corruption.box_jitter_fraction,
                    frame_rng.child("jitter"), gt.width, gt.height,
                )
                noise = frame_rng.child("target-score").normal(0.0, corruption.score_noise_sd)
                proposals.append(Proposal(
                    frame=frame, box=jittered,
                    score=_clamp01(TARGET_BASE_SCORE + noise),
                    objectness=PROPOSAL_OBJECTNESS, proposal_id=0,
                ))
            for d in range(1, corruption.distractors_per_frame + 1):
                drng = frame_rng.child("distractor", d)
                noise = drng.normal(0.0, corruption.score_noise_sd)
                proposals.append(Proposal(
                    frame=frame, box=_distractor_box(drng, gt.width, gt.height),
                    score=_clamp01(DISTRACTOR_BASE_SCORE + noise),
                    objectness=PROPOSAL_OBJECTNESS, proposal_id=d,
                ))
            if (
                true_box is not None
                and corruption.distractors_per_frame > 0
                and frame_rng.child("switch").unit() < corruption.id_switch_prob
            ):
                victim = frame_rng.child("victim").randint(
                    1, corruption.distractors_per_frame
                )
                target, other = proposals[0], proposals[victim]
                proposals[0] = replace(target, score=other.score)
                proposals[victim] = replace(other, score=target.score)
            if proposals:
                frames[frame] = proposals
        out[str(obj_index)] = VideoProposals(
            video_id, str(obj_index), frames, gt.num_frames
        )
    return out
