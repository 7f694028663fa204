"""Synthetic video with programmed transitions and exact ground truth.

A sequence is a list of scenes joined by transitions (cut, dissolve, fade through
black, horizontal wipe), optionally decorated with distractors (flashes, camera
pans) that must not be reported as boundaries.

Conventions: a cut is annotated at the first frame of the new scene; a gradual
transition occupies d inserted frames, annotated as the span of exactly those
frames. Blend step j (1..d) uses alpha = j / (d + 1).
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .classify import BoundaryEvent, write_events
from .errors import InvalidSpec
from .frameio import Frame, StreamInfo, rgb_to_yuv, write_y4m  # noqa: F401  (write_y4m re-exported)

PATTERNS = ("solid", "gradient", "noise", "blocks")
TRANSITIONS = ("cut", "dissolve", "fade", "wipe")
MIN_SIZE = 32


@dataclass
class SceneSpec:
    length: int
    pattern: str = "solid"
    color: tuple[int, int, int] = (128, 128, 128)
    color2: Optional[tuple[int, int, int]] = None
    seed: int = 0
    amplitude: float = 0.0
    velocity: tuple[float, float] = (0.0, 0.0)
    n_blocks: int = 3


@dataclass
class TransitionSpec:
    kind: str = "cut"
    length: int = 0


@dataclass
class DistractorSpec:
    kind: str  # flash | pan
    scene: int
    offset: int
    frames: int = 1
    intensity: float = 0.8
    velocity: float = 2.0
    length: int = 20


@dataclass
class SequenceSpec:
    scenes: list[SceneSpec]
    transitions: list[TransitionSpec] = field(default_factory=list)
    distractors: list[DistractorSpec] = field(default_factory=list)
    name: str = "seq"
    seed: int = 0

    def validate(self) -> None:
        if not self.scenes:
            raise InvalidSpec("a sequence needs at least one scene")
        if len(self.transitions) != len(self.scenes) - 1:
            raise InvalidSpec(
                f"{len(self.scenes)} scenes need {len(self.scenes) - 1} transitions, got {len(self.transitions)}"
            )
        for i, sc in enumerate(self.scenes):
            if sc.length < 1:
                raise InvalidSpec(f"scene {i} has length {sc.length}")
            if sc.pattern not in PATTERNS:
                raise InvalidSpec(f"scene {i}: unknown pattern {sc.pattern!r}")
        for i, tr in enumerate(self.transitions):
            if tr.kind not in TRANSITIONS:
                raise InvalidSpec(f"transition {i}: unknown kind {tr.kind!r}")
            if tr.kind != "cut" and tr.length < 2:
                raise InvalidSpec(f"transition {i}: gradual {tr.kind} needs length >= 2")
        for i, ds in enumerate(self.distractors):
            if not 0 <= ds.scene < len(self.scenes):
                raise InvalidSpec(f"distractor {i} refers to missing scene {ds.scene}")
            length = self.scenes[ds.scene].length
            if ds.kind == "flash":
                if not 1 <= ds.frames <= 3:
                    raise InvalidSpec(f"distractor {i}: flash length must be 1..3")
                if not 0 < ds.intensity <= 1:
                    raise InvalidSpec(f"distractor {i}: flash intensity must be in (0, 1]")
                if ds.offset < 0 or ds.offset + ds.frames > length:
                    raise InvalidSpec(f"distractor {i}: flash does not fit in scene {ds.scene}")
            elif ds.kind == "pan":
                if ds.length < 1 or ds.offset < 0 or ds.offset >= length:
                    raise InvalidSpec(f"distractor {i}: pan outside scene {ds.scene}")
            else:
                raise InvalidSpec(f"distractor {i}: unknown kind {ds.kind!r}")

    @property
    def n_frames(self) -> int:
        return sum(s.length for s in self.scenes) + sum(
            t.length for t in self.transitions if t.kind != "cut"
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceSpec":
        def scene(s):
            s = dict(s)
            for key in ("color", "color2", "velocity"):
                if s.get(key) is not None:
                    s[key] = tuple(s[key])
            return SceneSpec(**s)

        try:
            return cls(
                scenes=[scene(s) for s in d["scenes"]],
                transitions=[TransitionSpec(**t) for t in d.get("transitions", [])],
                distractors=[DistractorSpec(**x) for x in d.get("distractors", [])],
                name=d.get("name", "seq"),
                seed=d.get("seed", 0),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSpec(f"bad sequence spec: {exc}") from None


class _SceneRenderer:
    """Procedural RGB content for one scene; frame k may be any integer."""

    def __init__(self, spec: SceneSpec, width: int, height: int, seed_key: Sequence[int],
                 distractors: Sequence[DistractorSpec]):
        self.spec = spec
        self.w, self.h = width, height
        self.seed_key = list(seed_key)
        rng = np.random.default_rng(self.seed_key)
        color = np.asarray(spec.color, dtype=np.float64)
        if spec.pattern == "gradient":
            color2 = np.asarray(spec.color2 if spec.color2 is not None else 255 - color, dtype=np.float64)
            theta = rng.uniform(0, 2 * np.pi)
            yy, xx = np.mgrid[0:height, 0:width]
            proj = xx * np.cos(theta) + yy * np.sin(theta)
            tt = (proj - proj.min()) / max(np.ptp(proj), 1e-9)
            self.base = color[None, None, :] * (1 - tt[..., None]) + color2[None, None, :] * tt[..., None]
        elif spec.pattern == "noise":
            amp = spec.amplitude
            texture = rng.normal(0.0, 1.0, (height, width, 1)) * amp
            tint = rng.normal(0.0, 1.0, (height, width, 3)) * (amp / 3)
            self.base = color[None, None, :] + texture + tint
        else:
            self.base = np.broadcast_to(color, (height, width, 3)).astype(np.float64)
        self.blocks = []
        if spec.pattern == "blocks":
            for _ in range(spec.n_blocks):
                bw = int(rng.integers(width // 8, width // 3 + 1))
                bh = int(rng.integers(height // 8, height // 3 + 1))
                x0, y0 = rng.uniform(0, width), rng.uniform(0, height)
                if spec.color2 is not None:
                    c = np.clip(np.asarray(spec.color2, dtype=np.float64) + rng.normal(0.0, 30.0, 3), 0, 255)
                else:
                    c = rng.integers(0, 256, 3).astype(np.float64)
                jitter = rng.uniform(0.5, 1.5, 2)
                self.blocks.append((bw, bh, x0, y0, c, jitter))
        self.flashes = [d for d in distractors if d.kind == "flash"]
        self.pans = [d for d in distractors if d.kind == "pan"]

    def pan_shift(self, k: int) -> int:
        shift = 0.0
        for p in self.pans:
            shift += p.velocity * min(max(k - p.offset, 0), p.length)
        return int(np.floor(shift + 0.5))

    def render(self, k: int) -> np.ndarray:
        spec = self.spec
        img = self.base.copy()
        if spec.pattern == "noise" and spec.amplitude > 0:
            rng = np.random.default_rng(self.seed_key + [k % (1 << 31), 7])
            img = img + rng.normal(0.0, spec.amplitude / 4, (self.h, self.w, 1))
        for bw, bh, x0, y0, c, jitter in self.blocks:
            x = int(np.floor(x0 + spec.velocity[0] * jitter[0] * k)) % self.w
            y = int(np.floor(y0 + spec.velocity[1] * jitter[1] * k)) % self.h
            rows = (y + np.arange(bh)) % self.h
            cols = (x + np.arange(bw)) % self.w
            img[np.ix_(rows, cols)] = c
        shift = self.pan_shift(k)
        if shift:
            img = np.roll(img, shift, axis=1)
        for f in self.flashes:
            if f.offset <= k < f.offset + f.frames:
                img = img + (255.0 - img) * f.intensity
        return np.clip(img, 0, 255)


def _yuv(rgb: np.ndarray, chroma: int):
    return rgb_to_yuv(rgb, chroma)


def _q(a: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def _blend(a, b, alpha: float):
    return tuple(_q((1.0 - alpha) * pa.astype(np.float64) + alpha * pb.astype(np.float64)) for pa, pb in zip(a, b))


def _fade(a, b, alpha: float):
    src, f = (a, 1.0 - 2.0 * alpha) if alpha < 0.5 else (b, 2.0 * alpha - 1.0)
    y, u, v = (p.astype(np.float64) for p in src)
    return _q(y * f), _q(128.0 + (u - 128.0) * f), _q(128.0 + (v - 128.0) * f)


def _wipe(a, b, alpha: float):
    out = []
    for pa, pb in zip(a, b):
        edge = int(np.floor(alpha * pa.shape[1] + 0.5))
        plane = pa.copy()
        plane[:, :edge] = pb[:, :edge]
        out.append(plane)
    return tuple(out)


_GRADUAL = {"dissolve": _blend, "fade": _fade, "wipe": _wipe}


def ground_truth(spec: SequenceSpec) -> list[BoundaryEvent]:
    events = []
    pos = 0
    for i, scene in enumerate(spec.scenes[:-1]):
        pos += scene.length
        tr = spec.transitions[i]
        if tr.kind == "cut":
            events.append(BoundaryEvent.cut(pos))
        else:
            events.append(BoundaryEvent.gradual(pos, pos + tr.length - 1))
            pos += tr.length
    return events


def generate_iter(spec: SequenceSpec, geometry: tuple[int, int] = (64, 64), seed: int = 0,
                  chroma: int = 420) -> Iterator[Frame]:
    """Yield the frames of a sequence one by one (see generate())."""
    spec.validate()
    width, height = geometry
    if width < MIN_SIZE or height < MIN_SIZE:
        raise InvalidSpec(f"geometry {width}x{height} below {MIN_SIZE}x{MIN_SIZE}")
    renderers = [
        _SceneRenderer(sc, width, height, [seed, spec.seed, i, sc.seed],
                       [d for d in spec.distractors if d.scene == i])
        for i, sc in enumerate(spec.scenes)
    ]
    index = 0
    for i, scene in enumerate(spec.scenes):
        r = renderers[i]
        for k in range(scene.length):
            yield Frame(index, *_yuv(r.render(k), chroma), chroma)
            index += 1
        if i == len(spec.scenes) - 1:
            break
        tr = spec.transitions[i]
        if tr.kind == "cut":
            continue
        nxt = renderers[i + 1]
        d = tr.length
        mix = _GRADUAL[tr.kind]
        for j in range(1, d + 1):
            alpha = j / (d + 1)
            a = _yuv(r.render(scene.length + j - 1), chroma)
            b = _yuv(nxt.render(j - d - 1), chroma)
            yield Frame(index, *mix(a, b, alpha), chroma)
            index += 1


def generate(spec: SequenceSpec, geometry: tuple[int, int] = (64, 64), seed: int = 0,
             chroma: int = 420) -> tuple[list[Frame], list[BoundaryEvent]]:
    """Render a sequence; returns (frames, ground-truth events). Deterministic given seed."""
    frames = list(generate_iter(spec, geometry, seed, chroma))
    return frames, ground_truth(spec)


# ---------------------------------------------------------------------------
# random corpora


def _color(rng) -> tuple[int, int, int]:
    return tuple(int(c) for c in rng.integers(20, 236, 3))


def _near(rng, color, spread: int = 20) -> tuple[int, int, int]:
    return tuple(int(np.clip(c + rng.integers(-spread, spread + 1), 0, 255)) for c in color)


def random_scene(rng, length: int, like: Optional[SceneSpec] = None, fast_prob: float = 0.3) -> SceneSpec:
    """A random scene; with `like`, a new shot of a similar setting (same palette, new layout)."""
    if like is not None:
        # same palette with roles swapped: histograms barely move, the layout does
        pattern = str(rng.choice(["gradient", "blocks"]))
        color = _near(rng, like.color2 or like.color)
        color2 = _near(rng, like.color)
    else:
        pattern = str(rng.choice(PATTERNS, p=[0.05, 0.25, 0.3, 0.4]))
        color, color2 = _color(rng), _color(rng)
    speed = rng.uniform(4.0, 9.0) if rng.random() < fast_prob else rng.uniform(0.5, 3.0)
    angle = rng.uniform(0, 2 * np.pi)
    return SceneSpec(
        length=length,
        pattern=pattern,
        color=color,
        color2=color2,
        seed=int(rng.integers(1 << 30)),
        amplitude=float(rng.uniform(4, 24)) if pattern == "noise" else 0.0,
        velocity=(float(speed * np.cos(angle)), float(speed * np.sin(angle))),
        n_blocks=int(rng.integers(2, 6)),
    )


def random_sequence(rng, name: str, n_scenes: int = 16, scene_range: tuple[int, int] = (60, 200),
                    cut_prob: float = 0.7, grad_range: tuple[int, int] = (6, 16),
                    flash_prob: float = 1.0, pan_prob: float = 0.5, similar_prob: float = 0.4,
                    fast_prob: float = 0.3) -> SequenceSpec:
    """Random scenes and transitions with one flash and possibly one pan as distractors.

    `similar_prob` is the chance a scene reuses the previous scene's palette, which
    makes the boundary hard for histogram metrics; `fast_prob` the chance of fast
    object motion, which is hard for pixel-difference metrics.
    """
    scenes: list[SceneSpec] = []
    for _ in range(n_scenes):
        length = int(rng.integers(scene_range[0], scene_range[1] + 1))
        like = scenes[-1] if scenes and rng.random() < similar_prob else None
        scenes.append(random_scene(rng, length, like, fast_prob))
    transitions = []
    for _ in range(n_scenes - 1):
        if rng.random() < cut_prob:
            transitions.append(TransitionSpec("cut"))
        else:
            kind = str(rng.choice(["dissolve", "fade", "wipe"]))
            transitions.append(TransitionSpec(kind, int(rng.integers(grad_range[0], grad_range[1] + 1))))
    distractors = []
    used = set()
    if rng.random() < flash_prob:
        s = int(rng.integers(n_scenes))
        used.add(s)
        length = scenes[s].length
        frames = min(int(rng.integers(1, 4)), length)
        # clamped so short scenes still get a flash that fits
        offset = min(int(rng.integers(30, max(31, length - 30 - frames))), length - frames)
        distractors.append(DistractorSpec("flash", s, offset, frames=frames,
                                          intensity=float(rng.uniform(0.5, 1.0))))
    if rng.random() < pan_prob:
        choices = [i for i in range(n_scenes) if i not in used] or list(range(n_scenes))
        s = int(rng.choice(choices))
        length = scenes[s].length
        pan_len = int(rng.integers(15, 41))
        offset = min(int(rng.integers(10, max(11, length - pan_len - 10))), length - 1)
        velocity = float(rng.uniform(1, 8) * rng.choice([-1, 1]))
        distractors.append(DistractorSpec("pan", s, offset, velocity=velocity, length=pan_len))
    return SequenceSpec(scenes, transitions, distractors, name=name, seed=int(rng.integers(1 << 30)))


def random_corpus(n_sequences: int = 20, seed: int = 0, **kwargs) -> list[SequenceSpec]:
    rng = np.random.default_rng(seed)
    return [random_sequence(rng, f"seq{i:02d}", **kwargs) for i in range(n_sequences)]


# ---------------------------------------------------------------------------
# manifests and materialization


@dataclass
class Manifest:
    sequences: list[SequenceSpec]
    geometry: tuple[int, int] = (64, 64)
    fps: tuple[int, int] = (25, 1)
    chroma: int = 420
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "geometry": list(self.geometry),
            "fps": list(self.fps),
            "chroma": self.chroma,
            "seed": self.seed,
            "sequences": [s.to_dict() for s in self.sequences],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"manifest is not valid JSON: {exc}") from None
        if isinstance(d, list):
            d = {"sequences": d}
        return cls(
            sequences=[SequenceSpec.from_dict(s) for s in d.get("sequences", [])],
            geometry=tuple(d.get("geometry", (64, 64))),
            fps=tuple(d.get("fps", (25, 1))),
            chroma=int(d.get("chroma", 420)),
            seed=int(d.get("seed", 0)),
        )


def materialize(manifest: Manifest, outdir) -> list[tuple[str, str]]:
    """Write <name>.y4m and <name>.ann for every sequence; returns the path pairs."""
    os.makedirs(outdir, exist_ok=True)
    width, height = manifest.geometry
    info = StreamInfo(width, height, manifest.fps[0], manifest.fps[1], manifest.chroma)
    written = []
    for spec in manifest.sequences:
        video = os.path.join(outdir, f"{spec.name}.y4m")
        ann = os.path.join(outdir, f"{spec.name}.ann")
        with open(video, "wb") as fh:
            write_y4m(generate_iter(spec, manifest.geometry, manifest.seed, manifest.chroma), info, fh)
        with open(ann, "w", encoding="utf-8") as fh:
            write_events(ground_truth(spec), fh, with_confidence=False,
                         header=f"synthetic ground truth for {spec.name}")
        written.append((video, ann))
    return written
