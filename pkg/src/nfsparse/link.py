"""Multiuser uplink combining, sum rate and the Monte Carlo harness.

Trials draw user locations and gains once and realize them on every array
under test, so array comparisons within a trial share the same users. Each
trial uses its own generator seeded by ``(seed, sweep index, trial)``.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import estimation as est
from .channel import ChannelConfig, PathParam, realize, sample_paths, snr_to_sigma2, to_sda
from .geometry import ArrayLayout, build_hula, build_uca, build_usa

_RIDGE = 1e-12


def mmse_combiner(H_hat: np.ndarray, sigma2: float) -> np.ndarray:
    """Regularized channel inversion ``H (H^H H + sigma2 I)^-1``, scaled to ``||F||_F^2 = K``.

    ``H_hat`` holds one user channel per column (N x K).
    """
    H_hat = np.asarray(H_hat, dtype=complex)
    K = H_hat.shape[1]
    G = H_hat.conj().T @ H_hat + sigma2 * np.eye(K)
    if sigma2 == 0 and np.linalg.matrix_rank(G) < K:
        G = G + _RIDGE * max(np.trace(G).real, 1.0) * np.eye(K)
    F = H_hat @ np.linalg.inv(G)
    norm = np.linalg.norm(F)
    if norm == 0:
        return F
    return math.sqrt(K) * F / norm


def mrc_combiner(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return h / np.vdot(h, h).real


def sinr_all(H: np.ndarray, F: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-user SINR with true channels ``H`` and combiners ``F`` (both N x K)."""
    P = np.abs(H.conj().T @ F) ** 2  # P[k, i] = |h_k^H f_i|^2
    signal = np.diag(P)
    interference = P.sum(axis=1) - signal
    return signal / (interference + sigma2)


def sinr(H, F, k: int, sigma2: float) -> float:
    return float(sinr_all(np.asarray(H), np.asarray(F), sigma2)[k])


def sum_rate(H, F, sigma2: float) -> float:
    """Sum of ``log2(1 + SINR_k)`` in bit/s/Hz."""
    return float(np.sum(np.log2(1 + sinr_all(np.asarray(H), np.asarray(F), sigma2))))


@dataclass(frozen=True)
class McRow:
    sweep_value: float
    array_kind: str
    metric: str
    mean: float
    stderr: float
    trials: int


@dataclass
class McReport:
    sweep_variable: str
    seed: int
    rows: list[McRow] = field(default_factory=list)

    def get(self, sweep_value, array_kind: str, metric: str | None = None) -> McRow:
        for row in self.rows:
            if (
                math.isclose(row.sweep_value, sweep_value, rel_tol=1e-12, abs_tol=1e-12)
                and row.array_kind == array_kind
                and (metric is None or row.metric == metric)
            ):
                return row
        raise KeyError((sweep_value, array_kind, metric))

    def series(self, array_kind: str, metric: str | None = None):
        rows = [r for r in self.rows if r.array_kind == array_kind and (metric is None or r.metric == metric)]
        return [r.sweep_value for r in rows], [r.mean for r in rows], [r.stderr for r in rows]

    def to_csv_text(self) -> str:
        lines = ["sweep_value,array_kind,metric,mean,stderr,trials"]
        for r in self.rows:
            lines.append(f"{r.sweep_value!r},{r.array_kind},{r.metric},{r.mean!r},{r.stderr!r},{r.trials}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, stderr


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("NFSPARSE_THREADS", "1")))
    except ValueError:
        return 1


def map_trials(fn: Callable[[int], object], trials: int) -> list:
    """``[fn(t) for t in range(trials)]``, optionally on a thread pool; order preserved."""
    workers = min(thread_count(), max(trials, 1))
    if workers == 1:
        return [fn(t) for t in range(trials)]
    with cf.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials)))


# ---------------------------------------------------------------------------
# scenarios


SWEEP_VARIABLES = ("snr_db", "users", "r_max", "p")
ARRAY_KINDS = ("NSA", "USA", "HULA", "UCA")


@dataclass(frozen=True)
class NsaSettings:
    """Position-optimizer settings used whenever an NSA is requested."""

    iterations: int = 100
    S: int = 64
    T: int = 128
    seed: int = 0


@dataclass(frozen=True)
class SumRateConfig:
    kinds: tuple[str, ...] = ARRAY_KINDS
    n_antennas: int = 33
    p: float = 10.0
    wavelength: float = 0.01
    b_max: float = 0.05
    users: int = 28
    snr_db: float = 20.0
    channel: ChannelConfig = ChannelConfig(ricean_db=-20.0)
    sweep_variable: str = "snr_db"
    sweep_values: tuple[float, ...] = (20.0,)
    trials: int = 100
    csi: str = "perfect"
    estimator: str = "sda-omp"
    max_paths: int | None = None
    nsa: NsaSettings = NsaSettings()

    def __post_init__(self):
        errors = []
        if self.sweep_variable not in SWEEP_VARIABLES:
            errors.append(f"sweep_variable: expected one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}")
        bad = [k for k in self.kinds if k not in ARRAY_KINDS]
        if bad or not self.kinds:
            errors.append(f"kinds: unknown or empty {list(self.kinds)!r}")
        if self.trials < 0:
            errors.append("trials: must be nonnegative")
        if self.users < 1:
            errors.append("users: need at least one user")
        if self.csi not in ("perfect", "estimated"):
            errors.append(f"csi: expected 'perfect' or 'estimated', got {self.csi!r}")
        if self.estimator not in ("sda-omp", "sda-isrce", "ls"):
            errors.append(f"estimator: unknown {self.estimator!r}")
        if errors:
            raise ValueError("; ".join(errors))


def build_layout(kind: str, n_antennas: int, p: float, wavelength: float, b_max: float,
                 nsa: NsaSettings = NsaSettings()) -> ArrayLayout:
    from .optimizer import optimize_nsa

    if kind == "USA":
        return build_usa(n_antennas, p, wavelength)
    if kind == "HULA":
        return build_hula(n_antennas, wavelength)
    if kind == "UCA":
        return build_uca(n_antennas, wavelength)
    if kind == "NSA":
        layout, _ = optimize_nsa(n_antennas, p, wavelength, b_max, nsa.S, nsa.T, nsa.iterations, nsa.seed)
        return layout
    raise ValueError(f"unknown array kind {kind!r}")


def _point_config(cfg: SumRateConfig, value) -> SumRateConfig:
    var = cfg.sweep_variable
    if var == "snr_db":
        return replace(cfg, snr_db=float(value))
    if var == "users":
        return replace(cfg, users=int(value))
    if var == "p":
        return replace(cfg, p=float(value))
    lo = cfg.channel.r_range[0]
    return replace(cfg, channel=replace(cfg.channel, r_range=(lo, float(value))))


class _Estimator:
    """Per-layout estimation state (dictionaries are built once)."""

    def __init__(self, layout: ArrayLayout, cfg: SumRateConfig):
        self.layout = layout
        self.cfg = cfg
        self.dictionary = None
        if cfg.estimator != "ls" and layout.is_linear:
            self.dictionary = est.build_dictionary(layout, cfg.b_max)

    def __call__(self, y: np.ndarray, sigma2: float) -> np.ndarray:
        # SD-A estimators need a linear array; the UCA falls back to LS
        if self.dictionary is None:
            return est.ls_estimate(y)
        L = self.cfg.max_paths or 2 * self.cfg.channel.paths
        omp = est.sda_omp(y, self.dictionary, L)
        if self.cfg.estimator == "sda-omp":
            return omp.channel
        return est.sda_isrce(y, self.layout, omp, sigma2).channel


def _trial_rates(cfg: SumRateConfig, layouts, estimators, seed, sweep_idx, trial) -> list[float]:
    rng = np.random.default_rng([seed, sweep_idx, trial])
    users = [sample_paths(rng, cfg.channel) for _ in range(cfg.users)]
    sigma2 = snr_to_sigma2(cfg.snr_db)
    n = cfg.n_antennas
    noise = None
    if cfg.csi == "estimated":
        noise = math.sqrt(sigma2 / 2) * (
            rng.standard_normal((n, cfg.users)) + 1j * rng.standard_normal((n, cfg.users))
        )
    rates = []
    for layout, estimator in zip(layouts, estimators):
        H = np.column_stack([realize(layout, paths).vector for paths in users])
        if noise is None:
            H_hat = H
        else:
            Y = H + noise
            H_hat = np.column_stack([estimator(Y[:, k], sigma2) for k in range(cfg.users)])
        rates.append(sum_rate(H, mmse_combiner(H_hat, sigma2), sigma2))
    return rates


def run_sum_rate_mc(cfg: SumRateConfig, seed: int = 0) -> McReport:
    report = McReport(cfg.sweep_variable, seed)
    if cfg.trials == 0:
        return report
    for sweep_idx, value in enumerate(cfg.sweep_values):
        point = _point_config(cfg, value)
        layouts = [
            build_layout(k, point.n_antennas, point.p, point.wavelength, point.b_max, point.nsa)
            for k in point.kinds
        ]
        estimators = [_Estimator(lay, point) if point.csi == "estimated" else None for lay in layouts]
        results = np.array(
            map_trials(lambda t: _trial_rates(point, layouts, estimators, seed, sweep_idx, t), cfg.trials)
        )
        for j, kind in enumerate(point.kinds):
            mean, se = _mean_stderr(results[:, j])
            report.rows.append(McRow(float(value), kind, "sum_rate", mean, se, cfg.trials))
    return report


# ---------------------------------------------------------------------------
# channel estimation sweep

NMSE_METHODS = ("sda-omp", "sda-isrce", "farfield-omp", "ls", "genie-ls")


@dataclass(frozen=True)
class NmseConfig:
    kind: str = "NSA"
    n_antennas: int = 33
    p: float = 10.0
    wavelength: float = 0.01
    b_max: float = 0.05
    snr_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    channel: ChannelConfig = ChannelConfig(ricean_db=-10.0)
    methods: tuple[str, ...] = NMSE_METHODS
    trials: int = 200
    max_paths: int | None = None
    oversample: int = est.DEFAULT_OVERSAMPLE
    isrce: est.IsrceParams = est.IsrceParams()
    nsa: NsaSettings = NsaSettings()

    def __post_init__(self):
        errors = []
        bad = [m for m in self.methods if m not in NMSE_METHODS]
        if bad or not self.methods:
            errors.append(f"methods: unknown or empty {list(self.methods)!r}")
        if self.kind not in ("NSA", "USA", "HULA"):
            errors.append(f"kind: channel estimation needs a linear array, got {self.kind!r}")
        if self.trials < 0:
            errors.append("trials: must be nonnegative")
        if errors:
            raise ValueError("; ".join(errors))


def _nmse_trial(cfg: NmseConfig, layout, dictionary, ff_dict, sigma2, seed, sweep_idx, trial) -> dict:
    rng = np.random.default_rng([seed, sweep_idx, trial])
    paths = sample_paths(rng, cfg.channel)
    h = realize(layout, paths).vector
    n = h.size
    y = h + math.sqrt(sigma2 / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    L = cfg.max_paths or 2 * cfg.channel.paths
    out = {}
    omp = None
    if "sda-omp" in cfg.methods or "sda-isrce" in cfg.methods:
        omp = est.sda_omp(y, dictionary, L)
    for m in cfg.methods:
        if m == "sda-omp":
            hh = omp.channel
        elif m == "sda-isrce":
            hh = est.sda_isrce(y, layout, omp, sigma2, cfg.isrce).channel
        elif m == "farfield-omp":
            hh = est.sda_omp(y, ff_dict, L).channel
        elif m == "ls":
            hh = est.ls_estimate(y)
        else:
            hh = est.genie_ls(y, layout, paths).channel
        out[m] = est.nmse_ratio(hh, h)
    return out


def run_nmse_mc(cfg: NmseConfig, seed: int = 0) -> McReport:
    """NMSE per method; ``mean`` is in dB (of the mean ratio), ``stderr`` by the delta method."""
    report = McReport("snr_db", seed)
    if cfg.trials == 0:
        return report
    layout = build_layout(cfg.kind, cfg.n_antennas, cfg.p, cfg.wavelength, cfg.b_max, cfg.nsa)
    dictionary = est.build_dictionary(layout, cfg.b_max, oversample=cfg.oversample)
    ff_dict = est.farfield_dictionary(layout, b_max=cfg.b_max, oversample=cfg.oversample)
    for sweep_idx, snr in enumerate(cfg.snr_db):
        sigma2 = snr_to_sigma2(snr)
        results = map_trials(
            lambda t: _nmse_trial(cfg, layout, dictionary, ff_dict, sigma2, seed, sweep_idx, t), cfg.trials
        )
        for m in cfg.methods:
            ratios = np.array([r[m] for r in results])
            mean, se = _mean_stderr(ratios)
            mean_db = est.to_db(mean)
            se_db = 10 / math.log(10) * se / mean if mean > 0 else 0.0
            report.rows.append(McRow(float(snr), m, "nmse_db", mean_db, se_db, cfg.trials))
    return report


def nmse_rows(report: McReport):
    """Rows for the ``snr_db,method,nmse_db,trials`` table."""
    return [(r.sweep_value, r.array_kind, r.mean, r.trials) for r in report.rows]


# ---------------------------------------------------------------------------
# two-user angle sweep


def two_user_paths(theta2: float, r1: float = 100.0) -> tuple[tuple[PathParam], tuple[PathParam]]:
    """LoS-only users with unit gain: user 1 broadside at ``r1``, user 2 at angle Theta with the same b."""
    b = to_sda(r1, 0.0).b
    u1 = (PathParam(1.0 + 0j, r1, 0.0),)
    r2 = (1 - theta2**2) / (2 * b)
    u2 = (PathParam(1.0 + 0j, r2, math.asin(theta2)),)
    return u1, u2


def two_user_sum_rate(layout: ArrayLayout, theta2: float, snr_db: float = 20.0, r1: float = 100.0) -> float:
    sigma2 = snr_to_sigma2(snr_db)
    u1, u2 = two_user_paths(theta2, r1)
    H = np.column_stack([realize(layout, u1).vector, realize(layout, u2).vector])
    return sum_rate(H, mmse_combiner(H, sigma2), sigma2)


def run_two_user_sweep(layouts: dict[str, ArrayLayout], thetas: Sequence[float], snr_db: float = 20.0,
                       r1: float = 100.0, seed: int = 0) -> McReport:
    """Deterministic sweep (no randomness); ``trials`` is reported as 1."""
    report = McReport("theta", seed)
    for th in thetas:
        if not abs(th) < 1:
            raise ValueError(f"angle Theta must lie strictly inside (-1, 1), got {th}")
        for kind, layout in layouts.items():
            report.rows.append(McRow(float(th), kind, "sum_rate", two_user_sum_rate(layout, th, snr_db, r1), 0.0, 1))
    return report
