"""Beam gains in the SD-A plane and their closed-form approximations.

The gain of a beam focused at ``(k, Omega)`` probed at ``(b, Theta)`` is the
inner product of two simplified steering vectors,

    G = sum_n exp(j 2 pi ((Theta - Omega) x_n - (b - k) x_n^2) / lambda),

so it depends only on the offset ``(b - k, Theta - Omega)``. For a uniform
sparse array the angle dependence is periodic with period ``2/p``, which is
the source of grating lobes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .channel import SdaPoint
from .geometry import ArrayLayout

THREE_DB = 10 ** (-3 / 20)
# |b~ - k~| = KAPPA_SCALE / (p N)^2 marks the edge of the USA beam depth
KAPPA_SCALE = 3.5


@dataclass(frozen=True)
class LobeReport:
    lobe_centers: tuple[float, ...]
    lobe_index_set: tuple[int, ...]
    beamwidth: float
    beam_depth: float
    coverage: float


def _require_linear(layout: ArrayLayout) -> None:
    if not layout.is_linear:
        raise ValueError("SD-A beam gains are defined for linear layouts only")


def beam_gain_grid(layout: ArrayLayout, focus: SdaPoint, b, theta) -> np.ndarray:
    """Complex gain over the outer grid ``b x theta`` (shape ``len(b) x len(theta)``).

    The quadratic and linear phase factors separate, so the whole map is a
    single matrix product.
    """
    _require_linear(layout)
    x = layout.positions
    lam = layout.wavelength
    b = np.atleast_1d(np.asarray(b, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    eb = np.exp(-2j * np.pi * np.outer(b - focus.b, x * x) / lam)
    et = np.exp(2j * np.pi * np.outer(theta - focus.theta, x) / lam)
    return eb @ et.T


def beam_gain_exact(layout: ArrayLayout, focus: SdaPoint, probe) -> complex:
    """Gain at a single probe point. ``probe`` may be an :class:`SdaPoint` or a ``(b, theta)`` pair.

    Angles outside [-1, 1] are allowed so that replica lobes can be probed.
    """
    if isinstance(probe, SdaPoint):
        b, theta = probe.b, probe.theta
    else:
        b, theta = probe
    return complex(beam_gain_grid(layout, focus, [b], [theta])[0, 0])


def beam_gain_points(layout: ArrayLayout, focus: SdaPoint, b, theta) -> np.ndarray:
    """Gain at paired probe points ``(b[i], theta[i])``."""
    _require_linear(layout)
    x = layout.positions
    b = np.asarray(b, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phase = np.multiply.outer(theta - focus.theta, x) - np.multiply.outer(b - focus.b, x * x)
    return np.exp(2j * np.pi * phase / layout.wavelength).sum(axis=-1)


def lobe_index_set(p: float, omega: float) -> tuple[int, ...]:
    """Integers m with ``|omega + 2m/p| < 1 + 1/p``."""
    bound = 1 + 1 / p
    lo = math.floor((-bound - omega) * p / 2) - 1
    hi = math.ceil((bound - omega) * p / 2) + 1
    return tuple(m for m in range(lo, hi + 1) if abs(omega + 2 * m / p) < bound)


def psp_amplitude(p, n_antennas, wavelength, focus: SdaPoint, probe: SdaPoint | tuple) -> float:
    """Stationary-phase amplitude: flat lobes of height ``1/sqrt(p^2 |b~ - k~|)``.

    Each lobe m covers ``Omega + 2m/p +- p |b~ - k~| N``; overlapping lobes add.
    """
    if isinstance(probe, SdaPoint):
        b, theta = probe.b, probe.theta
    else:
        b, theta = probe
    delta = abs(b - focus.b) * wavelength / 2
    if delta == 0:
        raise ValueError(
            "stationary phase is undefined at b = k; use the angle cross-section "
            "formula (exact summation) instead"
        )
    level = 1 / math.sqrt(p * p * delta)
    half = p * delta * n_antennas
    total = 0.0
    for m in lobe_index_set(p, focus.theta):
        centre = focus.theta + 2 * m / p
        if centre - half <= theta <= centre + half:
            total += level
    return total


def fresnel_cs(zeta):
    """Fresnel integrals ``(C, S)`` with the ``pi z^2 / 2`` kernel.

    Note the argument order: scipy returns ``(S, C)``.
    """
    s, c = special.fresnel(zeta)
    return c, s


def distance_cross_section(p, n_antennas, wavelength, focus: SdaPoint, b) -> np.ndarray | float:
    """Fresnel approximation of ``|G|`` along ``Theta = Omega`` as a function of ``b``."""
    b_arr = np.asarray(b, dtype=float)
    delta = np.abs(b_arr - focus.b) * wavelength / 2
    m = (n_antennas - 1) / 2
    zeta = np.sqrt(2 * p * p * delta) * (m + 0.5)
    c, s = fresnel_cs(zeta)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sqrt((2 * c * c + 2 * s * s) / (p * p * delta))
    val = np.where(delta == 0, float(n_antennas), val)
    return float(val) if val.ndim == 0 else val


def depth_constant(kappa_scale: float = KAPPA_SCALE) -> float:
    """Normalized gain ``|G|/N`` at ``|b~ - k~| = kappa_scale / (pN)^2`` in the Fresnel model."""
    c, s = fresnel_cs(math.sqrt(kappa_scale / 2))
    return math.sqrt((2 * c * c + 2 * s * s) / kappa_scale)


def usa_beamwidth(p, n_antennas) -> float:
    """Distance from the lobe peak to its first angular null."""
    return 2 / (p * n_antennas)


def usa_beam_depth(p, n_antennas, wavelength, b_max) -> float:
    return min(4 * KAPPA_SCALE / (wavelength * p * p * n_antennas**2), b_max)


def hula_coverage(n_antennas, b_max) -> float:
    return 2 * b_max / n_antennas


def usa_lobe_report(p, n_antennas, wavelength, focus: SdaPoint, b_max) -> LobeReport:
    idx = lobe_index_set(p, focus.theta)
    width = usa_beamwidth(p, n_antennas)
    depth = usa_beam_depth(p, n_antennas, wavelength, b_max)
    return LobeReport(
        lobe_centers=tuple(focus.theta + 2 * m / p for m in idx),
        lobe_index_set=idx,
        beamwidth=width,
        beam_depth=depth,
        coverage=p * width * depth,
    )


def _half_width(gain_at, step, limit, level, tol):
    """Smallest t in (0, limit] with gain_at(t) <= level, or None if it never drops."""
    prev = 0.0
    t = step
    while prev < limit:
        t = min(t, limit)
        if gain_at(t) <= level:
            return optimize.brentq(lambda u: gain_at(u) - level, prev, t, xtol=tol)
        prev = t
        t += step
    return None


def measure_mainlobe(layout: ArrayLayout, b_max: float, *, level: float = THREE_DB, tol: float = 1e-9):
    """Full 3 dB width of ``|G|/N`` along the angle axis and along the distance axis.

    The gain depends only on the offset from the focus, so the focus is
    placed at the origin. Both cross-sections are even in the offset (the
    gain at a negated offset is the complex conjugate), so the full width is
    twice the one-sided crossing. The depth is capped at ``b_max``.
    """
    _require_linear(layout)
    x = layout.positions
    lam = layout.wavelength
    n = x.size
    x_max = float(np.max(np.abs(x)))

    def along_theta(t):
        return abs(np.exp(2j * np.pi * t * x / lam).sum()) / n

    def along_b(u):
        return abs(np.exp(-2j * np.pi * u * x * x / lam).sum()) / n

    theta_step = lam / (8 * (x[-1] - x[0]))
    half = _half_width(along_theta, theta_step, 2.0, level, tol)
    width = 2 * half if half is not None else 4.0

    b_step = min(lam / (16 * x_max**2), b_max / 64)
    half_b = _half_width(along_b, b_step, b_max / 2, level, tol)
    depth = b_max if half_b is None else min(2 * half_b, b_max)
    return width, depth


def write_beam_map_csv(path, b, theta, gains) -> None:
    """Row-major ``b,theta,abs_gain`` table; ``gains`` has shape ``len(b) x len(theta)``."""
    gains = np.abs(np.asarray(gains))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("b,theta,abs_gain\n")
        for i, bv in enumerate(b):
            for j, tv in enumerate(theta):
                fh.write(f"{float(bv)!r},{float(tv)!r},{float(gains[i, j])!r}\n")
