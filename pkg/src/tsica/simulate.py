"""Seeded phantom generators: concentric signal-carrying tubes in noise.

Three variants on a 128 x 128 x 3 grid; all randomness flows from one
counter-based Philox stream keyed by the seed, so identical seeds give
bit-identical volumes.

- multisignal: 100 frames, four partially overlapping tubes carrying a
  sinusoid (1/11 Hz), a square wave (1/10 Hz), a sinusoid (1/16 Hz) and a
  square wave (1/4 Hz), all with phase 0.
- event: 100 frames, four disjoint tubes carrying Bernoulli event trains
  with expected counts 9, 17, 11 and 7.
- wave: 240 frames, four partially overlapping tubes carrying 1/16 Hz
  sinusoids with phases 0, pi/4, pi/2 and 3pi/4.

Tube overlap bands carry the sum of the two adjacent signals; the
background carries sd-0.2 Gaussian noise; sd-0.1 Gaussian noise is added
everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volio import Volume4D

DEFAULT_EXTENTS = (128, 128, 3)
BACKGROUND_SD = 0.2
GLOBAL_SD = 0.1

# (inner, outer) radii in voxels; adjacent tubes share a band
OVERLAPPING_RADII = ((8.0, 23.0), (21.0, 31.0), (29.0, 38.0), (36.0, 45.0))
# pure bands only: the same rings without their shared bands
DISJOINT_RADII = ((8.0, 21.0), (23.0, 29.0), (31.0, 36.0), (38.0, 45.0))

EVENT_EXPECTED_COUNTS = (9, 17, 11, 7)

WAVE_FREQUENCY = 1.0 / 16.0
WAVE_PHASES = (0.0, math.pi / 4.0, math.pi / 2.0, 3.0 * math.pi / 4.0)


@dataclass(frozen=True)
class SignalSpec:
    kind: str                 # sinusoid | square | bernoulli
    frequency: float = 0.0    # Hz (sinusoid/square)
    phase: float = 0.0        # radians
    probability: float = 0.0  # per-frame event probability (bernoulli)
    amplitude: float = 1.0


@dataclass(frozen=True)
class TubePhantomSpec:
    """Geometry and signal layout of one phantom variant."""

    extents: tuple[int, int, int] = DEFAULT_EXTENTS
    radii: tuple[tuple[float, float], ...] = OVERLAPPING_RADII
    signals: tuple[SignalSpec, ...] = ()
    n_frames: int = 100
    background_sd: float = BACKGROUND_SD
    global_sd: float = GLOBAL_SD
    voxel_size: tuple[float, float, float] = (3.0, 3.0, 3.0)
    time_step: float = 1.0

    def __post_init__(self):
        if len(self.radii) != len(self.signals):
            raise ValueError("one signal per tube required")
        for inner, outer in self.radii:
            if not 0.0 <= inner < outer:
                raise ValueError(f"bad annulus radii ({inner}, {outer})")
        inners = [r[0] for r in self.radii]
        if inners != sorted(inners):
            raise ValueError("tubes must be ordered centre to periphery")
        if self.background_sd < 0 or self.global_sd < 0:
            raise ValueError("noise sd must be >= 0")


@dataclass
class GroundTruth:
    """Voxel regions and reference signals behind a simulated volume."""

    kind: str
    pure_masks: list[np.ndarray]                 # bool, one per tube
    overlap_masks: dict[tuple[int, int], np.ndarray]
    background_mask: np.ndarray
    references: np.ndarray                       # T x n_tubes
    time_step: float
    seed: int
    event_counts: tuple[int, ...] = ()
    region_labels: np.ndarray = field(default=None, repr=False)

    @property
    def n_tubes(self) -> int:
        return len(self.pure_masks)

    def tube_mask(self, i: int) -> np.ndarray:
        """Full region of tube i: pure band plus shared bands."""
        full = self.pure_masks[i].copy()
        for (a, b), m in self.overlap_masks.items():
            if i in (a, b):
                full |= m
        return full


def _radius_grid(extents) -> np.ndarray:
    nx, ny, nz = extents
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    x = np.arange(nx, dtype=np.float64)[:, None] - cx
    y = np.arange(ny, dtype=np.float64)[None, :] - cy
    r2d = np.hypot(x, y)
    return np.repeat(r2d[:, :, None], nz, axis=2)


def _build_regions(spec: TubePhantomSpec):
    r = _radius_grid(spec.extents)
    tubes = [(r >= inner) & (r < outer) for inner, outer in spec.radii]
    overlaps = {}
    for i in range(len(tubes) - 1):
        band = tubes[i] & tubes[i + 1]
        if np.any(band):
            overlaps[(i, i + 1)] = band
    pures = []
    for i, tube in enumerate(tubes):
        pure = tube.copy()
        for (a, b), band in overlaps.items():
            if i in (a, b):
                pure &= ~band
        pures.append(pure)
    background = ~np.logical_or.reduce(tubes)
    labels = np.zeros(spec.extents, dtype=np.int16)
    for i, pure in enumerate(pures):
        labels[pure] = i + 1
    for k, (pair, band) in enumerate(sorted(overlaps.items())):
        labels[band] = len(tubes) + 1 + k
    return pures, overlaps, background, labels


def _deterministic_signal(sig: SignalSpec, n_frames: int, dt: float) -> np.ndarray:
    t = np.arange(n_frames, dtype=np.float64) * dt
    theta = 2.0 * math.pi * sig.frequency * t + sig.phase
    if sig.kind == "sinusoid":
        return sig.amplitude * np.sin(theta)
    if sig.kind == "square":
        s = np.sin(theta)
        return sig.amplitude * np.where(s >= 0.0, 1.0, -1.0)
    raise ValueError(f"not a deterministic signal kind: {sig.kind!r}")


def _simulate(spec: TubePhantomSpec, seed: int, kind: str) -> tuple[Volume4D, GroundTruth]:
    rng = np.random.Generator(np.random.Philox(key=seed))
    pures, overlaps, background, labels = _build_regions(spec)
    T = spec.n_frames

    references = np.zeros((T, len(spec.signals)))
    event_counts = []
    for i, sig in enumerate(spec.signals):
        if sig.kind == "bernoulli":
            seq = (rng.random(T) < sig.probability).astype(np.float64)
            references[:, i] = sig.amplitude * seq
            event_counts.append(int(seq.sum()))
        else:
            references[:, i] = _deterministic_signal(sig, T, spec.time_step)

    data = np.zeros(spec.extents + (T,), dtype=np.float64)
    for i, pure in enumerate(pures):
        data[pure, :] = references[:, i]
    for (a, b), band in overlaps.items():
        data[band, :] = references[:, a] + references[:, b]
    if spec.background_sd > 0:
        data[background, :] = rng.normal(0.0, spec.background_sd,
                                         (int(background.sum()), T))
    if spec.global_sd > 0:
        data += rng.normal(0.0, spec.global_sd, data.shape)

    truth = GroundTruth(
        kind=kind,
        pure_masks=pures,
        overlap_masks=overlaps,
        background_mask=background,
        references=references,
        time_step=spec.time_step,
        seed=seed,
        event_counts=tuple(event_counts),
        region_labels=labels,
    )
    return Volume4D(data, spec.voxel_size, spec.time_step), truth


def multisignal_spec() -> TubePhantomSpec:
    return TubePhantomSpec(
        radii=OVERLAPPING_RADII,
        signals=(
            SignalSpec("sinusoid", frequency=1.0 / 11.0),
            SignalSpec("square", frequency=1.0 / 10.0),
            SignalSpec("sinusoid", frequency=1.0 / 16.0),
            SignalSpec("square", frequency=1.0 / 4.0),
        ),
        n_frames=100,
    )


def event_spec() -> TubePhantomSpec:
    return TubePhantomSpec(
        radii=DISJOINT_RADII,
        signals=tuple(
            SignalSpec("bernoulli", probability=c / 100.0)
            for c in EVENT_EXPECTED_COUNTS
        ),
        n_frames=100,
    )


def wave_spec() -> TubePhantomSpec:
    return TubePhantomSpec(
        radii=OVERLAPPING_RADII,
        signals=tuple(
            SignalSpec("sinusoid", frequency=WAVE_FREQUENCY, phase=p)
            for p in WAVE_PHASES
        ),
        n_frames=240,
    )


def simulate_multisignal(seed: int = 0, spec: TubePhantomSpec | None = None
                         ) -> tuple[Volume4D, GroundTruth]:
    """Four mixed periodic signals in partially overlapping tubes."""
    return _simulate(spec or multisignal_spec(), seed, "multisignal")


def simulate_event_related(seed: int = 0, spec: TubePhantomSpec | None = None
                           ) -> tuple[Volume4D, GroundTruth]:
    """Bernoulli event trains in disjoint tubes; realized sequences are truth."""
    return _simulate(spec or event_spec(), seed, "event")


def simulate_traveling_wave(seed: int = 0, spec: TubePhantomSpec | None = None
                            ) -> tuple[Volume4D, GroundTruth]:
    """Same-frequency sinusoids with stepped phases in overlapping tubes."""
    return _simulate(spec or wave_spec(), seed, "wave")


SIMULATORS = {
    "multisignal": simulate_multisignal,
    "event": simulate_event_related,
    "wave": simulate_traveling_wave,
}
