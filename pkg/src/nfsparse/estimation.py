"""Sparse channel estimation in the SD-A domain.

Contents: grid dictionaries for uniform and nonuniform sparse arrays, an
on-grid greedy estimator (SDA-OMP), its off-grid refinement by iterative
reweighting (SDA-ISRCE), and the far-field OMP, LS and genie-aided LS
baselines.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import beam
from .channel import SdaPoint, steering_exact
from .geometry import ArrayLayout

log = logging.getLogger(__name__)

NMSE_FLOOR_DB = -120.0
DEFAULT_OVERSAMPLE = 2
_RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Column ``d = s * T + t`` (zero-based) is the simplified steering vector at ``(b[s], theta[t])``."""

    atoms: np.ndarray
    b_grid: np.ndarray
    theta_grid: np.ndarray
    layout: ArrayLayout

    @property
    def shape(self) -> tuple[int, int]:
        return self.b_grid.size, self.theta_grid.size

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    def coords(self, columns):
        """``(b, theta)`` arrays for the given column indices."""
        s, t = np.divmod(np.asarray(columns, dtype=int), self.theta_grid.size)
        return self.b_grid[s], self.theta_grid[t]

    def point(self, column: int) -> SdaPoint:
        b, t = self.coords([column])
        return SdaPoint(float(b[0]), float(t[0]))


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Estimated paths and channel.

    ``b`` and ``theta`` are raw parameter estimates; after off-grid
    refinement they are not clipped to the physical SD-A region.
    """

    support: tuple[int, ...]
    gains: np.ndarray
    b: np.ndarray
    theta: np.ndarray
    channel: np.ndarray
    iterations: int
    flag: str | None = None

    @property
    def n_paths(self) -> int:
        return self.gains.size

    @property
    def paths(self) -> list[tuple[complex, float, float]]:
        return [(complex(g), float(b), float(t)) for g, b, t in zip(self.gains, self.b, self.theta)]


def steering_matrix(x: np.ndarray, wavelength: float, b, theta) -> np.ndarray:
    """N x L matrix of simplified steering vectors."""
    phase = np.multiply.outer(x * x, b) - np.multiply.outer(x, theta)
    return np.exp(2j * np.pi * phase / wavelength)


def usa_angle_grid(T: int, p: float) -> np.ndarray:
    """T cell centres across one grating period ``(-1/p, 1/p)``."""
    return full_angle_grid(T) / p


def full_angle_grid(T: int) -> np.ndarray:
    t = np.arange(T)
    return (1 + 2 * t - T) / T


def minimum_grid(layout: ArrayLayout, b_max: float) -> tuple[int, int]:
    """Smallest ``(S, T)`` whose grid spacing matches the mainlobe extent."""
    if layout.kind in ("USA", "HULA"):
        n = layout.n_antennas
        p = layout.sparsity_factor
        depth = beam.usa_beam_depth(p, n, layout.wavelength, b_max)
        width = beam.usa_beamwidth(p, n)
        return math.ceil(b_max / depth - 1e-9), math.ceil(2 / (p * width) - 1e-9)
    width, depth = beam.measure_mainlobe(layout, b_max)
    return math.ceil(b_max / depth - 1e-9), math.ceil(2 / width - 1e-9)


def build_dictionary(
    layout: ArrayLayout,
    b_max: float,
    S: int | None = None,
    T: int | None = None,
    oversample: int = DEFAULT_OVERSAMPLE,
) -> Dictionary:
    """Grid dictionary; omitted sizes default to ``oversample`` times the minimum.

    Uniform arrays only need one angle period ``[-1/p, 1/p]``; a nonuniform
    array has no replica lobes, so its angle grid covers ``[-1, 1]``.
    """
    if not layout.is_linear:
        raise ValueError("SD-A dictionaries need a linear layout")
    s_min, t_min = minimum_grid(layout, b_max)
    S = oversample * s_min if S is None else int(S)
    T = oversample * t_min if T is None else int(T)
    if S < s_min or T < t_min:
        raise ValueError(
            f"grid {S} x {T} undersamples the mainlobe; need S >= {s_min} and T >= {t_min}"
        )
    b_grid = np.arange(S) * b_max / S
    if layout.kind == "NSA":
        theta_grid = full_angle_grid(T)
    else:
        theta_grid = usa_angle_grid(T, layout.sparsity_factor)
    bb, tt = np.meshgrid(b_grid, theta_grid, indexing="ij")
    atoms = steering_matrix(layout.positions, layout.wavelength, bb.ravel(), tt.ravel())
    return Dictionary(atoms, b_grid, theta_grid, layout)


def farfield_dictionary(layout: ArrayLayout, T: int | None = None, b_max: float = 0.05,
                        oversample: int = DEFAULT_OVERSAMPLE) -> Dictionary:
    """Planar-wave atoms (b = 0) on the same angle grid a near-field dictionary would use."""
    if not layout.is_linear:
        raise ValueError("far-field dictionary needs a linear layout")
    if T is None:
        T = oversample * minimum_grid(layout, b_max)[1]
    if layout.kind == "NSA":
        theta_grid = full_angle_grid(T)
    else:
        theta_grid = usa_angle_grid(T, layout.sparsity_factor)
    b_grid = np.zeros(1)
    atoms = steering_matrix(layout.positions, layout.wavelength, np.zeros(T), theta_grid)
    return Dictionary(atoms, b_grid, theta_grid, layout)


def _least_squares(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        warnings.warn("rank-deficient path matrix; solving with a small ridge", RuntimeWarning, stacklevel=3)
        G = A.conj().T @ A
        G += _RIDGE * max(np.trace(G).real, 1.0) * np.eye(G.shape[0])
        coef = np.linalg.solve(G, A.conj().T @ y)
    return coef


def sda_omp(y: np.ndarray, dictionary: Dictionary, max_paths: int) -> EstimateResult:
    """Greedy on-grid path selection followed by least squares on the chosen atoms."""
    W = dictionary.atoms
    n = W.shape[0]
    if not 1 <= max_paths <= n:
        raise ValueError(f"max_paths must lie in [1, {n}], got {max_paths}")
    y = np.asarray(y, dtype=complex)
    residual = y.copy()
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    for _ in range(max_paths):
        score = np.abs(W.conj().T @ residual)
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        A = W[:, support]
        coef = _least_squares(A, y)
        residual = y - A @ coef
    b, theta = dictionary.coords(support)
    channel = W[:, support] @ coef
    return EstimateResult(tuple(support), coef, b, theta, channel, len(support))


def farfield_omp(y, layout: ArrayLayout, max_paths: int, dictionary: Dictionary | None = None) -> EstimateResult:
    if dictionary is None:
        dictionary = farfield_dictionary(layout)
    return sda_omp(y, dictionary, max_paths)


@dataclass(frozen=True)
class IsrceParams:
    """Tuning for :func:`sda_isrce`.

    ``varpi`` left as None means ``varpi_scale / sigma2``. Paths are pruned
    when their power is at most ``max(rho_abs, rho_rel * max power)``.
    """

    delta: float = 1e-3
    varpi: float | None = None
    varpi_scale: float = 1.0
    rho_rel: float = 1e-2
    rho_abs: float = 0.0
    mu: float = 1e-6
    max_outer: int = 50
    max_inner: int = 50
    armijo: float = 1e-4

    def resolve_varpi(self, sigma2: float) -> float:
        if self.varpi is not None:
            return self.varpi
        if sigma2 <= 0:
            return math.inf
        return self.varpi_scale / sigma2


@dataclass
class _Surrogate:
    """Concentrated surrogate ``-c^H M^{-1} c`` with ``M = D/varpi + A^H A`` and ``c = A^H y``.

    Parameters are held in scaled units ``u = b x_max^2 / lambda`` and
    ``v = theta x_max / lambda`` so both coordinates move the edge phase at
    comparable rates.
    """

    x: np.ndarray
    wavelength: float
    y: np.ndarray
    dw: np.ndarray
    b_scale: float = field(init=False)
    t_scale: float = field(init=False)

    def __post_init__(self):
        xm = float(np.max(np.abs(self.x)))
        self.b_scale = xm * xm / self.wavelength
        self.t_scale = xm / self.wavelength

    def value_grad(self, u, v):
        b = u / self.b_scale
        theta = v / self.t_scale
        A = steering_matrix(self.x, self.wavelength, b, theta)
        M = np.diag(self.dw).astype(complex) + A.conj().T @ A
        c = A.conj().T @ self.y
        z = np.linalg.solve(M, c)
        val = -float(np.real(np.vdot(c, z)))
        res = self.y - A @ z
        k = 2 * np.pi / self.wavelength
        # d a_l / d b = j k x^2 a_l ; d a_l / d theta = -j k x a_l
        proj_b = (1j * k * (self.x * self.x)[:, None] * A).conj().T @ res
        proj_t = (-1j * k * self.x[:, None] * A).conj().T @ res
        gb = -2 * np.real(np.conj(z) * proj_b) / self.b_scale
        gt = -2 * np.real(np.conj(z) * proj_t) / self.t_scale
        return val, gb, gt


def _descend(sur: _Surrogate, u, v, params: IsrceParams):
    val, gu, gv = sur.value_grad(u, v)
    step = None
    for _ in range(params.max_inner):
        g2 = float(gu @ gu + gv @ gv)
        if not math.isfinite(val) or not math.isfinite(g2):
            raise FloatingPointError(f"non-finite surrogate objective (value {val}, |grad|^2 {g2})")
        if g2 == 0.0:
            break
        if step is None:
            step = 0.05 / math.sqrt(g2)
        else:
            step *= 2
        accepted = False
        while step * math.sqrt(g2) > 1e-12:
            nu, nv = u - step * gu, v - step * gv
            nval, ngu, ngv = sur.value_grad(nu, nv)
            if nval <= val - params.armijo * step * g2:
                accepted = True
                break
            step /= 2
        if not accepted:
            break
        u, v, val, gu, gv = nu, nv, nval, ngu, ngv
    return u, v, val


def sda_isrce(
    y: np.ndarray,
    layout: ArrayLayout,
    init: EstimateResult,
    sigma2: float,
    params: IsrceParams | None = None,
) -> EstimateResult:
    """Off-grid refinement of an on-grid estimate by log-sum reweighting.

    Each outer iteration minimizes the concentrated surrogate over the
    continuous path coordinates by Armijo gradient descent, updates the
    gains in closed form and prunes weak paths.
    """
    params = params or IsrceParams()
    if init.n_paths == 0:
        raise ValueError("initial estimate has no paths")
    x = layout.positions
    lam = layout.wavelength
    y = np.asarray(y, dtype=complex)
    varpi = params.resolve_varpi(sigma2)
    b = np.array(init.b, dtype=float)
    theta = np.array(init.theta, dtype=float)
    ups = np.full(b.size, math.sqrt(params.mu), dtype=complex)
    support = list(init.support)
    it = 0
    for it in range(1, params.max_outer + 1):
        dw = 1 / (np.abs(ups) ** 2 + params.delta) / varpi
        sur = _Surrogate(x, lam, y, dw)
        u, v, _ = _descend(sur, b * sur.b_scale, theta * sur.t_scale, params)
        b, theta = u / sur.b_scale, v / sur.t_scale
        A = steering_matrix(x, lam, b, theta)
        M = np.diag(dw).astype(complex) + A.conj().T @ A
        if np.linalg.cond(M) > 1e12:
            M += _RIDGE * np.trace(M).real * np.eye(M.shape[0])
        new = np.linalg.solve(M, A.conj().T @ y)
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("non-finite gain update in off-grid refinement")
        change = float(np.sum(np.abs(new - ups) ** 2))
        power = np.abs(new) ** 2
        keep = power > max(params.rho_abs, params.rho_rel * power.max())
        b, theta, ups = b[keep], theta[keep], new[keep]
        support = [s for s, k in zip(support, keep) if k]
        if ups.size == 0:
            return EstimateResult((), ups, b, theta, np.zeros_like(y), it, flag="all-paths-pruned")
        if change < params.mu:
            break
    channel = steering_matrix(x, lam, b, theta) @ ups
    return EstimateResult(tuple(support), ups, b, theta, channel, it)


def ls_estimate(y) -> np.ndarray:
    """Unstructured LS for a unit pilot: the observation itself."""
    return np.array(y, dtype=complex)


def genie_ls(y, layout: ArrayLayout, true_paths, model: str = "exact") -> EstimateResult:
    """Gains by least squares on the true path locations.

    ``model="exact"`` uses spherical-wave steering vectors, ``"approx"`` the
    simplified ones.
    """
    y = np.asarray(y, dtype=complex)
    paths = list(true_paths)
    if model == "exact":
        A = np.column_stack([steering_exact(layout, pth.distance, pth.theta_physical) for pth in paths])
    elif model == "approx":
        sda = [pth.sda for pth in paths]
        A = steering_matrix(layout.positions, layout.wavelength, [s.b for s in sda], [s.theta for s in sda])
    else:
        raise ValueError(f"unknown steering model {model!r}")
    coef = _least_squares(A, y)
    sda = [pth.sda for pth in paths]
    return EstimateResult(
        tuple(range(len(paths))),
        coef,
        np.array([s.b for s in sda]),
        np.array([s.theta for s in sda]),
        A @ coef,
        1,
    )


def nmse_ratio(estimate, truth) -> float:
    truth = np.asarray(truth)
    return float(np.sum(np.abs(np.asarray(estimate) - truth) ** 2) / np.sum(np.abs(truth) ** 2))


def to_db(ratio: float) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10 * math.log10(ratio), NMSE_FLOOR_DB)


def nmse(estimate, truth) -> float:
    """Normalized squared error in dB, floored at -120 dB."""
    return to_db(nmse_ratio(estimate, truth))


def mean_nmse_db(ratios) -> float:
    """Average linear ratios first, then convert."""
    return to_db(float(np.mean(ratios)))


def write_nmse_csv(path, rows) -> None:
    """``rows`` are ``(snr_db, method, nmse_db, trials)`` tuples."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("snr_db,method,nmse_db,trials\n")
        for snr, method, val, trials in rows:
            fh.write(f"{float(snr)!r},{method},{float(val)!r},{int(trials)}\n")
