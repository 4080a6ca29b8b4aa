"""Near-field steering vectors, multipath channel synthesis and pilot observations.

Two steering models live here. :func:`steering_exact` uses the spherical
wavefront distance to every antenna; :func:`steering_approx` is the
second-order (Fresnel) expansion parametrized in the surrogate-distance /
angle (SD-A) plane, ``exp(j 2 pi (b x^2 - Theta x) / wavelength)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ArrayLayout


@dataclass(frozen=True)
class SdaPoint:
    """A point in the SD-A plane: surrogate distance ``b`` (1/m) and angle ``theta`` = sin(physical angle)."""

    b: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.b) and math.isfinite(self.theta)):
            raise ValueError("SD-A coordinates must be finite")
        if self.b < 0:
            raise ValueError(f"surrogate distance must be nonnegative, got {self.b}")
        if abs(self.theta) > 1:
            raise ValueError(f"angle Theta must lie in [-1, 1], got {self.theta}")


def to_sda(r: float, theta: float) -> SdaPoint:
    """Map a (distance, physical angle in radians) pair to the SD-A plane."""
    if not r > 0:
        raise ValueError("distance must be positive")
    s = math.sin(theta)
    return SdaPoint((1 - s * s) / (2 * r), s)


def from_sda(sda: SdaPoint) -> tuple[float, float]:
    """Inverse of :func:`to_sda`; returns ``(r, theta)`` with theta in radians."""
    if sda.b == 0:
        raise ValueError("far-field point has no finite distance")
    if abs(sda.theta) == 1:
        raise ValueError("degenerate endfire point: b > 0 with |Theta| = 1 has no distance")
    r = (1 - sda.theta**2) / (2 * sda.b)
    return r, math.asin(sda.theta)


@dataclass(frozen=True)
class PathParam:
    gain: complex
    distance: float
    theta_physical: float

    @property
    def sda(self) -> SdaPoint:
        return to_sda(self.distance, self.theta_physical)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    paths: tuple[PathParam, ...]
    vector: np.ndarray


@dataclass(frozen=True)
class ChannelConfig:
    """Multipath statistics. ``theta_range`` bounds Theta = sin(angle), not the angle itself."""

    paths: int = 3
    ricean_db: float = -10.0
    theta_range: tuple[float, float] = (-math.sqrt(3) / 2, math.sqrt(3) / 2)
    r_range: tuple[float, float] = (10.0, 100.0)

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise ValueError(f"need at least one path, got {self.paths}")
        lo, hi = self.theta_range
        if not (-1 <= lo < hi <= 1):
            raise ValueError(f"theta_range must be a nonempty subinterval of [-1, 1], got {self.theta_range}")
        lo, hi = self.r_range
        if not (0 < lo < hi):
            raise ValueError(f"r_range must be a nonempty interval of positive distances, got {self.r_range}")

    def path_powers(self) -> np.ndarray:
        """Mean power of each path: LoS first, the NLoS paths share the rest equally."""
        if math.isinf(self.ricean_db) and self.ricean_db > 0:
            return np.array([1.0])
        if self.paths == 1:
            return np.array([1.0])
        kappa = 10 ** (self.ricean_db / 10)
        los = kappa / (1 + kappa)
        nlos = (1 - los) / (self.paths - 1)
        return np.array([los] + [nlos] * (self.paths - 1))

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelConfig":
        kw = {}
        if "paths" in data:
            kw["paths"] = int(data["paths"])
        if "ricean_db" in data:
            kw["ricean_db"] = float(data["ricean_db"])
        if "theta_range" in data:
            kw["theta_range"] = tuple(float(v) for v in data["theta_range"])
        if "r_range" in data:
            kw["r_range"] = tuple(float(v) for v in data["r_range"])
        return cls(**kw)


def exact_distance(layout: ArrayLayout, r, theta, n=None):
    """Distance from a user at (r, theta) to every antenna, or to antenna ``n``.

    ``n`` is a zero-based array index (0 is the leftmost antenna). For UCA the
    user sits at ``(r sin theta, r cos theta)`` in the array plane.
    """
    pos = layout.positions if n is None else layout.positions[n]
    if layout.is_linear:
        d2 = r * r - 2 * r * pos * np.sin(theta) + pos * pos
        return np.sqrt(np.maximum(d2, 0.0))
    return np.hypot(pos[..., 0] - r * np.sin(theta), pos[..., 1] - r * np.cos(theta))


def steering_exact(layout: ArrayLayout, r: float, theta: float) -> np.ndarray:
    """Spherical-wave steering vector with unit-modulus entries."""
    if not r > 0:
        raise ValueError("distance must be positive")
    d = exact_distance(layout, r, theta)
    return np.exp(2j * np.pi * (d - r) / layout.wavelength)


def steering_approx(layout: ArrayLayout, sda: SdaPoint | None = None, *, b=None, theta=None) -> np.ndarray:
    """Simplified steering vector(s) in SD-A coordinates.

    Pass either an :class:`SdaPoint` or arrays ``b`` and ``theta`` of equal
    length, in which case the result is an N x L matrix with one column per
    (b, theta) pair. Angles outside [-1, 1] are accepted in array form so that
    grating-lobe replicas can be probed.
    """
    if not layout.is_linear:
        raise ValueError("the simplified SD-A steering model is defined for linear arrays only")
    x = layout.positions
    if sda is not None:
        return np.exp(2j * np.pi * (sda.b * x * x - sda.theta * x) / layout.wavelength)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phase = np.outer(x * x, b) - np.outer(x, theta)
    return np.exp(2j * np.pi * phase / layout.wavelength)


def sample_paths(rng: np.random.Generator, config: ChannelConfig) -> tuple[PathParam, ...]:
    """Draw path gains and locations; the first path is the line-of-sight one."""
    powers = config.path_powers()
    out = []
    for xi in powers:
        big_theta = rng.uniform(*config.theta_range)
        r = rng.uniform(*config.r_range)
        g = math.sqrt(xi / 2) * complex(rng.standard_normal(), rng.standard_normal())
        out.append(PathParam(g, r, math.asin(big_theta)))
    return tuple(out)


def realize(layout: ArrayLayout, paths) -> ChannelRealization:
    """Gain-weighted sum of exact steering vectors for the given paths."""
    h = np.zeros(layout.n_antennas, dtype=complex)
    for path in paths:
        h += path.gain * steering_exact(layout, path.distance, path.theta_physical)
    return ChannelRealization(tuple(paths), h)


def sample_channel(rng: np.random.Generator, layout: ArrayLayout, config: ChannelConfig) -> ChannelRealization:
    return realize(layout, sample_paths(rng, config))


def received_pilot(h: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Unit pilot observation ``y = h + noise`` with circular Gaussian noise of variance ``sigma2``."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    if sigma2 == 0:
        return np.array(h, dtype=complex)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + math.sqrt(sigma2 / 2) * noise


def snr_to_sigma2(snr_db: float) -> float:
    return 10 ** (-snr_db / 10)
