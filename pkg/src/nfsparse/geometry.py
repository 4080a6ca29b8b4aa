"""Array layouts (USA, NSA, HULA, UCA) and derived geometric quantities."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

LINEAR_KINDS = ("USA", "NSA", "HULA")
KINDS = LINEAR_KINDS + ("UCA",)

# Slack for spacing/panel checks on optimizer output (projection round-off).
_TOL = 1e-12

DEFAULT_R_MIN = 10.0


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    """Antenna coordinates plus panel and carrier metadata.

    For linear kinds ``positions`` is a length-N vector of x coordinates
    ordered from left to right. For ``UCA`` it is an N x 2 array of (x, y)
    points.
    """

    positions: np.ndarray
    wavelength: float
    panel_length: float
    sparsity_factor: float
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown array kind {self.kind!r}; expected one of {KINDS}")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        pos = np.array(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        half = self.panel_length / 2
        if self.is_linear:
            if pos.ndim != 1:
                raise ValueError("linear layouts take a 1-D vector of x coordinates")
            n = pos.size
            if n % 2 == 0:
                raise ValueError(
                    f"N={n} is even; layouts are indexed n=-M..M and need an odd antenna count"
                )
            gaps = np.diff(pos)
            if np.any(gaps < self.wavelength / 2 - _TOL):
                raise ValueError(
                    f"adjacent spacing {gaps.min():.6g} m below half wavelength "
                    f"{self.wavelength / 2:.6g} m"
                )
            if np.any(np.abs(pos) > half + _TOL):
                raise ValueError(f"positions exceed the panel [-{half:.6g}, {half:.6g}] m")
        else:
            if pos.ndim != 2 or pos.shape[1] != 2:
                raise ValueError("UCA layouts take an N x 2 array of (x, y) points")
            if pos.shape[0] < 3:
                raise ValueError("UCA needs at least 3 antennas")
            if np.any(np.abs(pos) > half + _TOL):
                raise ValueError("UCA points outside the panel extent")

    @property
    def is_linear(self) -> bool:
        return self.kind in LINEAR_KINDS

    @property
    def n_antennas(self) -> int:
        return self.positions.shape[0]

    @property
    def aperture(self) -> float:
        """Distance between the outermost antennas (diameter for UCA)."""
        if self.is_linear:
            return float(self.positions[-1] - self.positions[0])
        return float(2 * np.max(np.hypot(self.positions[:, 0], self.positions[:, 1])))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "wavelength": self.wavelength,
            "panel_length": self.panel_length,
            "sparsity_factor": self.sparsity_factor,
            "positions": self.positions.tolist(),
        }

    def to_json(self) -> str:
        # repr-based float formatting round-trips IEEE-754 doubles exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ArrayLayout":
        kind = data["kind"]
        wavelength = float(data["wavelength"])
        positions = np.asarray(data["positions"], dtype=float)
        if "panel_length" in data:
            panel = float(data["panel_length"])
        elif kind == "UCA":
            panel = 2 * float(np.max(np.hypot(positions[:, 0], positions[:, 1])))
        else:
            panel = 2 * float(np.max(np.abs(positions)))
        n = positions.shape[0]
        if "sparsity_factor" in data:
            p = float(data["sparsity_factor"])
        elif kind == "UCA":
            p = 1.0
        else:
            p = 2 * panel / ((n - 1) * wavelength)
        return cls(positions, wavelength, panel, p, kind)

    @classmethod
    def from_json(cls, text: str) -> "ArrayLayout":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GeometrySummary:
    rayleigh_distance: float
    near_field_bound: float
    b_max: float
    panel_length: float


def _check_count(n_antennas: int) -> None:
    if int(n_antennas) != n_antennas or n_antennas < 3:
        raise ValueError(f"need an integer antenna count >= 3, got {n_antennas}")
    if n_antennas % 2 == 0:
        raise ValueError(
            f"N={n_antennas} is even; layouts are indexed n=-M..M and need an odd antenna count"
        )


def build_usa(n_antennas: int, p: float, wavelength: float) -> ArrayLayout:
    """Uniform sparse array: antenna n sits at ``p * n * wavelength / 2``."""
    _check_count(n_antennas)
    if p < 1:
        raise ValueError(f"sparsity factor p={p} < 1 violates half-wavelength spacing")
    m = (n_antennas - 1) // 2
    n = np.arange(-m, m + 1)
    positions = p * n * wavelength / 2
    panel = p * (n_antennas - 1) * wavelength / 2
    kind = "HULA" if p == 1 else "USA"
    return ArrayLayout(positions, wavelength, panel, float(p), kind)


def build_hula(n_antennas: int, wavelength: float) -> ArrayLayout:
    return build_usa(n_antennas, 1.0, wavelength)


def build_nsa(positions: Sequence[float], wavelength: float, panel_length: float) -> ArrayLayout:
    """Wrap optimized (nonuniform) positions as an NSA layout on a given panel."""
    positions = np.asarray(positions, dtype=float)
    p = 2 * panel_length / ((positions.size - 1) * wavelength)
    return ArrayLayout(positions, wavelength, panel_length, p, "NSA")


def build_uca(n_antennas: int, wavelength: float) -> ArrayLayout:
    """Uniform circular array with half-wavelength arc spacing, centred at the origin."""
    if int(n_antennas) != n_antennas or n_antennas < 3:
        raise ValueError(f"UCA needs at least 3 antennas, got {n_antennas}")
    radius = n_antennas * wavelength / (4 * math.pi)
    phi = 2 * np.pi * np.arange(n_antennas) / n_antennas
    points = np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    return ArrayLayout(points, wavelength, 2 * radius, 1.0, "UCA")


def rayleigh_distance(panel_length: float, wavelength: float) -> float:
    # D / wavelength first keeps common decimal inputs exact (1.6 m at 0.01 m -> 512.0)
    return 2 * panel_length * (panel_length / wavelength)


def near_field_bound(panel_length: float, wavelength: float) -> float:
    """Inner edge of the radiative near field, ``0.62 sqrt(D^3 / wavelength)``."""
    return 0.62 * math.sqrt(panel_length**3 / wavelength)


def geometry_summary(layout: ArrayLayout, r_min: float = DEFAULT_R_MIN) -> GeometrySummary:
    panel = layout.panel_length
    if not (panel > 0 and layout.wavelength > 0 and r_min > 0):
        raise ValueError("panel length, wavelength and r_min must all be positive")
    bound = near_field_bound(panel, layout.wavelength)
    if r_min <= bound:
        warnings.warn(
            f"r_min={r_min} m lies inside the reactive near field (bound {bound:.3g} m); "
            "the simplified steering model loses accuracy there",
            stacklevel=2,
        )
    return GeometrySummary(
        rayleigh_distance=rayleigh_distance(panel, layout.wavelength),
        near_field_bound=bound,
        b_max=1 / (2 * r_min),
        panel_length=panel,
    )
