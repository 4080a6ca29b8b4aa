"""Antenna position optimization for nonuniform sparse arrays (SCA-APO).

The objective ``h(x)`` is the expected squared correlation between two
simplified steering vectors whose SD-A coordinates differ by a random
offset, evaluated as a weighted Riemann sum over a grid of offsets. Each
SCA step minimizes the quadratic upper model

    grad^T (x - x_prev) + chi/2 ||x - x_prev||^2

over the feasible set {x_n - x_{n-1} >= wavelength/2, |x_n| <= D/2}, which
reduces to a Euclidean projection solved exactly by isotonic regression.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import ArrayLayout, build_nsa

log = logging.getLogger(__name__)

DEFAULT_S = 64
DEFAULT_T = 128
DEFAULT_ITERATIONS = 100
_MAX_BACKTRACKS = 60


@dataclass(frozen=True, eq=False)
class DiffGrid:
    """Quantized offsets (b, Theta) and their triangular-density weights ``weights[s, t]``."""

    b_samples: np.ndarray
    theta_samples: np.ndarray
    weights: np.ndarray
    b_max: float


@dataclass
class OptimizerState:
    x: np.ndarray
    iteration: int = 0
    objective_history: list[float] = field(default_factory=list)
    chi_history: list[float] = field(default_factory=list)

    def run_log_rows(self):
        """Rows ``(q, h, chi)``; the initial point has no chi."""
        rows = [(0, self.objective_history[0], float("nan"))]
        for q, (h, chi) in enumerate(zip(self.objective_history[1:], self.chi_history), start=1):
            rows.append((q, h, chi))
        return rows

    def write_run_log(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("q,h,chi\n")
            for q, h, chi in self.run_log_rows():
                fh.write(f"{q},{h!r},{chi!r}\n")


def b_density(b, b_max):
    """Density of the difference of two U(0, b_max) surrogate distances."""
    b = np.asarray(b, dtype=float)
    return np.where(np.abs(b) <= b_max, 1 / b_max - np.abs(b) / b_max**2, 0.0)


def theta_density(theta):
    """Density of the difference of two U(-1, 1) angles."""
    theta = np.asarray(theta, dtype=float)
    return np.where(np.abs(theta) <= 2, 0.5 - np.abs(theta) / 4, 0.0)


def build_diff_grid(S: int, T: int, b_max: float) -> DiffGrid:
    """Left-endpoint grids on [-b_max, b_max) and [-2, 2) with product weights."""
    if S < 2 or T < 2:
        raise ValueError(f"need S >= 2 and T >= 2, got S={S}, T={T}")
    if not b_max > 0:
        raise ValueError("b_max must be positive")
    b = -b_max + 2 * np.arange(S) * b_max / S
    theta = -2 + 4 * np.arange(T) / T
    w = np.outer(b_density(b, b_max), theta_density(theta))
    return DiffGrid(b, theta, np.ascontiguousarray(w), b_max)


def _terms(x, grid: DiffGrid, wavelength, order):
    x = np.ascontiguousarray(x, dtype=float)
    return kernels.interference_terms(
        x, grid.b_samples, grid.theta_samples, grid.weights, wavelength, order
    )


def objective_h(x, grid: DiffGrid, wavelength: float) -> float:
    return _terms(x, grid, wavelength, 0)[0]


def grad_h(x, grid: DiffGrid, wavelength: float) -> np.ndarray:
    return _terms(x, grid, wavelength, 1)[1]


def hess_h(x, grid: DiffGrid, wavelength: float) -> np.ndarray:
    """Hessian of :func:`objective_h`.

    The diagonal includes the curvature of the phase product as well as the
    second derivative of the phase itself:
    ``2 w [phi_n'' sum_v sin(phi_v - phi_n) - phi_n'^2 sum_{v != n} cos(phi_v - phi_n)]``.
    """
    return _terms(x, grid, wavelength, 2)[2]


def project_positions(v, spacing: float, panel_length: float) -> np.ndarray:
    """Euclidean projection onto {x_n - x_{n-1} >= spacing, |x_n| <= panel_length/2}.

    With ``y_n = x_n - n * spacing`` the spacing chain becomes monotonicity of
    y and the panel box collapses to ``-D/2 <= y <= D/2 - (N-1) spacing``.
    Projecting onto a monotone cone intersected with a constant box is the
    isotonic fit clipped to the box.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    lo = -panel_length / 2
    hi = panel_length / 2 - (n - 1) * spacing
    if hi < lo:
        raise ValueError(
            f"infeasible panel: {n} antennas at spacing {spacing} need "
            f"{(n - 1) * spacing:.6g} m but the panel is {panel_length:.6g} m"
        )
    offsets = spacing * np.arange(n)
    y = kernels.pav_nondecreasing(np.ascontiguousarray(v - offsets))
    return np.clip(y, lo, hi) + offsets


def surrogate_min(x_prev, grad, chi: float, spacing: float, panel_length: float) -> np.ndarray:
    """Exact minimizer of the separable quadratic upper model over the feasible polytope."""
    if not chi > 0:
        raise ValueError("chi must be positive")
    return project_positions(np.asarray(x_prev) - np.asarray(grad) / chi, spacing, panel_length)


def largest_eigenvalue(hess: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(hess)[-1])


def random_init(rng: np.random.Generator, n_antennas: int, panel_length: float, wavelength: float) -> np.ndarray:
    """Sorted uniform draw over the panel, projected to restore the spacing constraint."""
    draw = np.sort(rng.uniform(-panel_length / 2, panel_length / 2, n_antennas))
    return project_positions(draw, wavelength / 2, panel_length)


def sca_apo(
    n_antennas: int,
    panel_length: float,
    wavelength: float,
    grid: DiffGrid,
    iterations: int = DEFAULT_ITERATIONS,
    rng: np.random.Generator | None = None,
    x0=None,
) -> tuple[np.ndarray, OptimizerState]:
    """Successive convex approximation of the antenna positions.

    Parameters
    ----------
    n_antennas, panel_length, wavelength
        Array size, panel length D (m) and carrier wavelength (m).
    grid
        Offset grid from :func:`build_diff_grid`.
    iterations
        Number of surrogate steps Q.
    rng
        Source for the random initial layout; ignored when ``x0`` is given.
    x0
        Optional starting positions (projected onto the feasible set first).

    Returns
    -------
    positions, state
        Final positions and the per-iteration objective and chi history.

    Notes
    -----
    chi starts at the largest Hessian eigenvalue at the current iterate,
    clamped below to keep the model strongly convex. If the step does not
    decrease h (the eigenvalue is a local curvature, not a global bound),
    chi is doubled until it does; after ``_MAX_BACKTRACKS`` doublings the
    iterate is kept.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    spacing = wavelength / 2
    if x0 is None:
        rng = np.random.default_rng() if rng is None else rng
        x = random_init(rng, n_antennas, panel_length, wavelength)
    else:
        x = project_positions(x0, spacing, panel_length)

    h_cur = objective_h(x, grid, wavelength)
    state = OptimizerState(x=x.copy(), objective_history=[h_cur])
    for q in range(1, iterations + 1):
        h_cur, g, H = _terms(x, grid, wavelength, 2)
        chi_floor = 1e-6 * max(abs(np.trace(H)) / n_antennas, 1e-12)
        chi = max(largest_eigenvalue(H), chi_floor)
        for _ in range(_MAX_BACKTRACKS):
            x_new = surrogate_min(x, g, chi, spacing, panel_length)
            h_new = objective_h(x_new, grid, wavelength)
            if h_new <= h_cur:
                break
            chi *= 2
        else:
            log.debug("iteration %d: no descent after %d doublings, keeping iterate", q, _MAX_BACKTRACKS)
            x_new, h_new = x, h_cur
        x = x_new
        state.objective_history.append(h_new)
        state.chi_history.append(chi)
        state.iteration = q
    state.x = x.copy()
    return x, state


@functools.lru_cache(maxsize=32)
def _optimize_cached(n_antennas, panel_length, wavelength, b_max, S, T, iterations, seed):
    grid = build_diff_grid(S, T, b_max)
    x, state = sca_apo(
        n_antennas, panel_length, wavelength, grid, iterations, np.random.default_rng(seed)
    )
    x.setflags(write=False)
    return x, state


def optimize_nsa(
    n_antennas: int,
    p: float,
    wavelength: float,
    b_max: float = 0.05,
    S: int = DEFAULT_S,
    T: int = DEFAULT_T,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    panel_length: float | None = None,
) -> tuple[ArrayLayout, OptimizerState]:
    """Optimized NSA on the panel of the equal-count USA with sparsity ``p`` (memoized)."""
    if panel_length is None:
        panel_length = p * (n_antennas - 1) * wavelength / 2
    x, state = _optimize_cached(
        int(n_antennas), float(panel_length), float(wavelength), float(b_max),
        int(S), int(T), int(iterations), int(seed),
    )
    return build_nsa(x, wavelength, panel_length), state


def usa_positions(n_antennas: int, p: float, wavelength: float) -> np.ndarray:
    m = (n_antennas - 1) // 2
    return p * np.arange(-m, m + 1) * wavelength / 2


def expected_correlation_continuous(x, b_max: float, wavelength: float) -> float:
    """Expected squared correlation without quantization.

    The two offset densities are triangles, whose characteristic functions
    are squared sincs, so each antenna pair contributes
    ``sinc^2(2 dx / lambda) * sinc^2(b_max d(x^2) / lambda)``. The grid sum
    ``objective_h`` omits the cell area ``8 b_max / (S T)``, so it tends to
    this value divided by ``8 b_max``.
    """
    x = np.asarray(x, dtype=float)
    dx = x[:, None] - x[None, :]
    dx2 = x[:, None] ** 2 - x[None, :] ** 2
    return float(np.sum(np.sinc(2 * dx / wavelength) ** 2 * np.sinc(b_max * dx2 / wavelength) ** 2))


__all__ = [
    "DiffGrid",
    "OptimizerState",
    "build_diff_grid",
    "objective_h",
    "grad_h",
    "hess_h",
    "project_positions",
    "surrogate_min",
    "sca_apo",
    "optimize_nsa",
    "usa_positions",
]
