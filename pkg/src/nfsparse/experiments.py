"""Experiment configs, validation and artifact writing for the command-line tool."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, beam, kernels, link
from . import estimation as est
from .channel import ChannelConfig, SdaPoint
from .geometry import KINDS, build_nsa, build_usa, near_field_bound, rayleigh_distance
from .optimizer import build_diff_grid, objective_h, sca_apo, usa_positions

log = logging.getLogger(__name__)

# experiment name -> figure it mirrors
EXPERIMENTS = {
    "beam-map": "Fig. 2",
    "beam-cross-section": "Fig. 3",
    "optimize-positions": "Fig. 3 (NSA beam map)",
    "nmse-sweep": "Fig. 4",
    "sumrate-snr": "Fig. 5",
    "sumrate-users": "Fig. 7",
    "sumrate-distance": "Fig. 8",
    "two-user-angle-sweep": "Fig. 9",
    "sumrate-spacing": "Fig. 10",
}

DEFAULT_TRIALS = {"nmse-sweep": 200}
SUMRATE_TRIALS = 100

_SWEEP_VARIABLE = {
    "sumrate-snr": "snr_db",
    "sumrate-users": "users",
    "sumrate-distance": "r_max",
    "sumrate-spacing": "p",
}
_DEFAULT_SWEEP = {
    "sumrate-snr": [-30, -20, -10, 0, 10, 20],
    "sumrate-users": [5, 10, 15, 20, 25, 28, 30, 35, 40],
    "sumrate-distance": [100, 200, 400, 600, 800],
    "sumrate-spacing": [1, 2, 5, 10],
    "nmse-sweep": [-10, -5, 0, 5, 10, 15, 20],
}


class ConfigError(ValueError):
    """Raised with every field-level problem found in a config."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  {p}" for p in self.problems))


@dataclass(frozen=True)
class ArrayParams:
    kind: str
    kinds: tuple[str, ...]
    n_antennas: int
    p: float
    wavelength: float
    panel_length: float


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    trials: int
    array: ArrayParams
    r_min: float
    channel: ChannelConfig
    sweep: tuple[float, ...]
    raw: dict

    @property
    def b_max(self) -> float:
        return 1 / (2 * self.r_min)

    @property
    def figure(self) -> str:
        return EXPERIMENTS[self.experiment]


class _Checker:
    def __init__(self, data: dict):
        self.data = data
        self.problems: list[str] = []

    def get(self, path: str, default, kind=float, positive=False, nonneg=False, section=None):
        src = self.data if section is None else self.data.get(section, {})
        name = path if section is None else f"{section}.{path}"
        if not isinstance(src, dict):
            self.problems.append(f"{section}: expected an object")
            return default
        if path not in src:
            return default
        val = src[path]
        try:
            if kind is int:
                if isinstance(val, bool) or float(val) != int(val):
                    raise ValueError
                val = int(val)
            elif kind is float:
                if isinstance(val, bool):
                    raise ValueError
                val = float(val)
                if not math.isfinite(val):
                    raise ValueError
            elif kind is str:
                if not isinstance(val, str):
                    raise ValueError
        except (TypeError, ValueError):
            self.problems.append(f"{name}: expected {kind.__name__}, got {val!r}")
            return default
        if positive and not val > 0:
            self.problems.append(f"{name}: must be positive, got {val!r}")
        if nonneg and val < 0:
            self.problems.append(f"{name}: must be nonnegative, got {val!r}")
        return val


def load_config(source, *, seed=None, trials=None) -> ExperimentConfig:
    """Parse and validate a config given as a path or an already-loaded dict."""
    if isinstance(source, dict):
        data = source
    else:
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<file>: not valid JSON ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    chk = _Checker(data)
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        chk.problems.append(f"experiment: expected one of {sorted(EXPERIMENTS)}, got {exp!r}")

    if seed is None:
        if "seed" not in data:
            warnings.warn("config has no seed; using 0", stacklevel=2)
        seed = chk.get("seed", 0, int, nonneg=True)
    default_trials = DEFAULT_TRIALS.get(exp, SUMRATE_TRIALS)
    if trials is None:
        trials = chk.get("trials", default_trials, int, nonneg=True)
    elif trials < 0:
        chk.problems.append("trials: must be nonnegative")

    n = chk.get("n_antennas", 33, int, section="array")
    lam = chk.get("wavelength", 0.01, float, positive=True, section="array")
    p = chk.get("p", 10.0, float, section="array")
    kind = chk.get("kind", "USA", str, section="array")
    kinds = tuple(data.get("array", {}).get("kinds", link.ARRAY_KINDS)) if isinstance(data.get("array", {}), dict) else ()
    if n < 3 or n % 2 == 0:
        chk.problems.append(f"array.n_antennas: need an odd count >= 3, got {n}")
    if p < 1:
        chk.problems.append(f"array.p: sparsity factor must be >= 1, got {p}")
    if kind not in KINDS:
        chk.problems.append(f"array.kind: expected one of {KINDS}, got {kind!r}")
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        chk.problems.append(f"array.kinds: unknown or empty {list(kinds)!r}")
    panel = chk.get("panel_length", None, float, positive=True, section="array")
    if panel is None:
        panel = p * (n - 1) * lam / 2
    elif lam > 0 and n >= 2:
        need = (n - 1) * lam / 2
        if need > panel:
            chk.problems.append(
                f"array.panel_length: {n} antennas at half-wavelength spacing need {need:.6g} m, "
                f"panel is {panel:.6g} m (infeasible)"
            )
        else:
            p = 2 * panel / ((n - 1) * lam)

    r_min = chk.get("r_min", 10.0, float, positive=True)

    ch = data.get("channel", {})
    default_kappa = -10.0 if exp == "nmse-sweep" else -20.0
    try:
        channel = ChannelConfig.from_dict({"ricean_db": default_kappa, **ch}) if isinstance(ch, dict) else None
        if channel is None:
            chk.problems.append("channel: expected an object")
    except (TypeError, ValueError) as exc:
        chk.problems.append(f"channel: {exc}")
        channel = None

    sweep_raw = data.get("sweep", {})
    values = sweep_raw.get("values") if isinstance(sweep_raw, dict) else None
    if values is None:
        values = _DEFAULT_SWEEP.get(exp, [])
    try:
        sweep = tuple(float(v) for v in values)
        if not all(math.isfinite(v) for v in sweep):
            raise ValueError
    except (TypeError, ValueError):
        chk.problems.append(f"sweep.values: expected a list of numbers, got {values!r}")
        sweep = ()
    if exp == "sumrate-users" and any(v < 1 or v != int(v) for v in sweep):
        chk.problems.append("sweep.values: user counts must be positive integers")
    if exp == "sumrate-spacing" and any(v < 1 for v in sweep):
        chk.problems.append("sweep.values: sparsity factors must be >= 1")
    if exp == "sumrate-distance" and channel is not None and any(v <= channel.r_range[0] for v in sweep):
        chk.problems.append("sweep.values: maximum distances must exceed the minimum of channel.r_range")

    for key in ("users",):
        chk.get(key, 28, int, positive=True)
    chk.get("snr_db", 20.0, float)
    if data.get("csi", "perfect") not in ("perfect", "estimated"):
        chk.problems.append(f"csi: expected 'perfect' or 'estimated', got {data.get('csi')!r}")
    if data.get("estimator", "sda-omp") not in ("sda-omp", "sda-isrce", "ls"):
        chk.problems.append(f"estimator: unknown {data.get('estimator')!r}")
    for key in ("iterations", "S", "T", "seed"):
        chk.get(key, 1, int, nonneg=True, section="optimizer")
    if exp == "nmse-sweep":
        methods = data.get("methods", list(link.NMSE_METHODS))
        if not isinstance(methods, list) or any(m not in link.NMSE_METHODS for m in methods) or not methods:
            chk.problems.append(f"methods: expected a subset of {list(link.NMSE_METHODS)}, got {methods!r}")
        if kind == "UCA":
            chk.problems.append("array.kind: channel estimation needs a linear array")
    if exp in ("beam-map", "beam-cross-section"):
        if kind == "UCA":
            chk.problems.append("array.kind: beam maps need a linear array")
        chk.get("b", r_min and 1 / (2 * r_min), float, nonneg=True, section="focus")
        chk.get("theta", 0.0, float, section="focus")
        grid = data.get("grid", {})
        if not isinstance(grid, dict):
            chk.problems.append("grid: expected an object")
        else:
            for axis in ("b", "theta"):
                axis_cfg = grid.get(axis)
                if axis_cfg is None:
                    continue
                if not (isinstance(axis_cfg, list) and len(axis_cfg) == 3) or int(axis_cfg[2]) < 1:
                    chk.problems.append(f"grid.{axis}: expected [start, stop, count], got {axis_cfg!r}")

    if chk.problems:
        raise ConfigError(chk.problems)
    array = ArrayParams(kind, kinds, n, p, lam, panel)
    return ExperimentConfig(exp, seed, trials, array, r_min, channel, sweep, data)


# ---------------------------------------------------------------------------


def _nsa_settings(cfg: ExperimentConfig) -> link.NsaSettings:
    o = cfg.raw.get("optimizer", {})
    base = link.NsaSettings()
    return link.NsaSettings(
        iterations=int(o.get("iterations", base.iterations)),
        S=int(o.get("S", base.S)),
        T=int(o.get("T", base.T)),
        seed=int(o.get("seed", base.seed)),
    )


def _layout(cfg: ExperimentConfig, kind: str | None = None, p: float | None = None):
    a = cfg.array
    return link.build_layout(kind or a.kind, a.n_antennas, a.p if p is None else p, a.wavelength, cfg.b_max,
                             _nsa_settings(cfg))


def _axis(cfg, name, default):
    lo, hi, count = cfg.raw.get("grid", {}).get(name, default)
    return np.linspace(float(lo), float(hi), int(count))


def _focus(cfg) -> SdaPoint:
    f = cfg.raw.get("focus", {})
    return SdaPoint(float(f.get("b", cfg.b_max)), float(f.get("theta", 0.0)))


def _run_beam_map(cfg, out: Path) -> list[str]:
    layout = _layout(cfg)
    focus = _focus(cfg)
    b = _axis(cfg, "b", [0.0, 2 * cfg.b_max, 201])
    theta = _axis(cfg, "theta", [-1.0, 1.0, 401])
    gains = beam.beam_gain_grid(layout, focus, b, theta)
    beam.write_beam_map_csv(out / "beam_map.csv", b, theta, gains)
    return ["beam_map.csv"]


def _run_cross_section(cfg, out: Path) -> list[str]:
    layout = _layout(cfg)
    focus = _focus(cfg)
    b = _axis(cfg, "b", [0.0, 4 * cfg.b_max, 401])
    exact = np.abs(beam.beam_gain_grid(layout, focus, b, [focus.theta])[:, 0])
    approx = beam.distance_cross_section(layout.sparsity_factor, layout.n_antennas, layout.wavelength, focus, b)
    with open(out / "cross_section.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("b,exact_abs_gain,fresnel_abs_gain\n")
        for row in zip(b, exact, np.atleast_1d(approx)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return ["cross_section.csv"]


def _run_optimize(cfg, out: Path) -> list[str]:
    a = cfg.array
    s = _nsa_settings(cfg)
    grid = build_diff_grid(s.S, s.T, cfg.b_max)
    rng = np.random.default_rng([cfg.seed, s.seed])
    x, state = sca_apo(a.n_antennas, a.panel_length, a.wavelength, grid, s.iterations, rng)
    layout = build_nsa(x, a.wavelength, a.panel_length)
    (out / "layout.json").write_text(layout.to_json() + "\n", encoding="utf-8")
    state.write_run_log(out / "run_log.csv")
    files = ["layout.json", "run_log.csv"]
    h_usa = objective_h(usa_positions(a.n_antennas, a.p, a.wavelength), grid, a.wavelength)
    focus = _focus(cfg)
    b = _axis(cfg, "b", [0.0, 2 * cfg.b_max, 201])
    theta = _axis(cfg, "theta", [-1.0, 1.0, 401])
    beam.write_beam_map_csv(out / "beam_map.csv", b, theta, beam.beam_gain_grid(layout, focus, b, theta))
    files.append("beam_map.csv")
    log.info("objective %.6g -> %.6g (USA %.6g)", state.objective_history[0], state.objective_history[-1], h_usa)
    return files


def _run_nmse(cfg, out: Path) -> list[str]:
    a = cfg.array
    raw = cfg.raw
    isrce = est.IsrceParams(**raw.get("isrce", {}))
    nc = link.NmseConfig(
        kind=a.kind, n_antennas=a.n_antennas, p=a.p, wavelength=a.wavelength, b_max=cfg.b_max,
        snr_db=cfg.sweep, channel=cfg.channel, methods=tuple(raw.get("methods", link.NMSE_METHODS)),
        trials=cfg.trials, max_paths=raw.get("max_paths"), isrce=isrce, nsa=_nsa_settings(cfg),
        oversample=int(raw.get("oversample", est.DEFAULT_OVERSAMPLE)),
    )
    report = link.run_nmse_mc(nc, cfg.seed)
    est.write_nmse_csv(out / "nmse.csv", link.nmse_rows(report))
    return ["nmse.csv"]


def _run_sumrate(cfg, out: Path) -> list[str]:
    a = cfg.array
    raw = cfg.raw
    sc = link.SumRateConfig(
        kinds=tuple(a.kinds), n_antennas=a.n_antennas, p=a.p, wavelength=a.wavelength, b_max=cfg.b_max,
        users=int(raw.get("users", 28 if cfg.experiment != "sumrate-spacing" else 20)),
        snr_db=float(raw.get("snr_db", 20.0)), channel=cfg.channel,
        sweep_variable=_SWEEP_VARIABLE[cfg.experiment], sweep_values=cfg.sweep, trials=cfg.trials,
        csi=raw.get("csi", "perfect"), estimator=raw.get("estimator", "sda-omp"),
        max_paths=raw.get("max_paths"), nsa=_nsa_settings(cfg),
    )
    link.run_sum_rate_mc(sc, cfg.seed).write_csv(out / "report.csv")
    return ["report.csv"]


def _run_two_user(cfg, out: Path) -> list[str]:
    thetas = cfg.raw.get("sweep", {}).get("values")
    if thetas is None:
        thetas = np.linspace(-0.86, 0.86, 345)
    layouts = {k: _layout(cfg, k) for k in cfg.array.kinds}
    rep = link.run_two_user_sweep(layouts, [float(t) for t in thetas], float(cfg.raw.get("snr_db", 20.0)),
                                  float(cfg.raw.get("r1", 100.0)), cfg.seed)
    rep.write_csv(out / "report.csv")
    return ["report.csv"]


_RUNNERS = {
    "beam-map": _run_beam_map,
    "beam-cross-section": _run_cross_section,
    "optimize-positions": _run_optimize,
    "nmse-sweep": _run_nmse,
    "sumrate-snr": _run_sumrate,
    "sumrate-users": _run_sumrate,
    "sumrate-distance": _run_sumrate,
    "sumrate-spacing": _run_sumrate,
    "two-user-angle-sweep": _run_two_user,
}


def config_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir) -> Path:
    """Run into a staging directory and move the artifacts into ``out_dir`` only on success."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        files = _RUNNERS[cfg.experiment](cfg, stage)
        manifest = {
            "experiment": cfg.experiment,
            "figure": cfg.figure,
            "config_sha256": config_digest(cfg.raw),
            "seed": cfg.seed,
            "trials": cfg.trials,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "files": files,
        }
        (stage / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for name in files + ["manifest.json"]:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return out / "manifest.json"


def describe(cfg: ExperimentConfig) -> dict:
    """Derived quantities for a dry run (no optimization or simulation)."""
    a = cfg.array
    info = {
        "experiment": cfg.experiment,
        "figure": cfg.figure,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "panel_length_m": a.panel_length,
        "sparsity_factor": a.p,
        "b_max_per_m": cfg.b_max,
        "rayleigh_distance_m": rayleigh_distance(a.panel_length, a.wavelength),
        "near_field_bound_m": near_field_bound(a.panel_length, a.wavelength),
    }
    usa = build_usa(a.n_antennas, a.p, a.wavelength)
    s_min, t_min = est.minimum_grid(usa, cfg.b_max)
    info["usa_dictionary_min_S_T"] = [s_min, t_min]
    info["usa_dictionary_atoms"] = est.DEFAULT_OVERSAMPLE**2 * s_min * t_min
    return info
