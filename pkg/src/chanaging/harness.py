"""Scenario files, parameter sweeps, required-power search and the CLI."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .channel_model import LargeScaleProfile, SystemConfig, dbm_to_watt, draw_large_scale
from .detequiv import de_gammas
from .errors import ChanagingError, ConfigError, NumericError
from .precoding_mc import (
    PRECODER_KINDS,
    ergodic_rate,
    hex_layout,
    mc_sinr_slots,
    multicell_mc_sinr,
)

__all__ = [
    "CSV_COLUMNS",
    "SWEEP_AXES",
    "ENGINES",
    "Scenario",
    "SweepRow",
    "PowerPoint",
    "ValidationCase",
    "load_scenario",
    "parse_scenario",
    "build_config",
    "build_profile",
    "run_sweep",
    "write_csv",
    "rows_to_csv",
    "required_power",
    "validate_de_mc",
    "main",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_axis", "sweep_value", "engine", "precoder", "user_index", "rate_bps_hz",
               "gamma_mean", "mc_de_gap_rel", "seed", "n_mc", "note")
SWEEP_AXES = ("M", "fD_Ts", "sigma_deg", "p_d")
ENGINES = ("mc", "de", "both")
GAP_TOL = 0.05
POWER_CAP_DBM = 60.0
POWER_FLOOR_DBM = -150.0
RATE_TOL = 1e-4

# section.key -> (parser, default); defaults follow the single-cell baseline
_SCHEMA = {
    "system.M": (int, 60),
    "system.K": (int, 10),
    "system.tau": (int, None),
    "system.T_c": (int, 196),
    "system.fD_Ts": (float, 0.0),
    "system.p_u_dbm": (float, 46.0),
    "system.p_d_dbm": (float, 46.0),
    "system.noise_dbm_hz": (float, -174.0),
    "system.bandwidth_hz": (float, 20e6),
    "system.sigma_phi_deg": (float, 0.0),
    "system.sigma_varphi_deg": (float, 0.0),
    "system.oscillator_mode": (str, "SLO_identical"),
    "system.rzf_alpha": (float, None),
    "system.rzf_z": (float, 0.0),
    "geometry.cell_radius": (float, 1000.0),
    "geometry.guard_radius": (float, 100.0),
    "geometry.pathloss_exp": (float, 3.8),
    "geometry.shadow_sigma_db": (float, 8.0),
    "geometry.cells": (int, 1),
    "geometry.estimator": (str, "as_written"),
    "sweep.axis": (str, None),
    "sweep.values": ("floats", None),
    "run.engine": (str, "both"),
    "run.n_mc": (int, 2000),
    "run.seed": (int, 0),
    "run.profile_seed": (int, 0),
    "run.precoders": ("strs", ("mrt", "rzf")),
    "run.slot_stride": (int, 1),
    "run.output": (str, None),
}


@dataclass(frozen=True)
class Scenario:
    """Validated experiment description.

    ``params`` holds the engineering-unit arguments of
    :meth:`SystemConfig.build`; the configuration is rebuilt per sweep point
    so that derived defaults (``tau``, ``rzf_alpha``) follow ``M`` and
    ``p_d``.
    """

    params: Dict[str, object]
    geometry: Dict[str, object]
    sweep_axis: Optional[str]
    sweep_values: Tuple[float, ...]
    engine: str = "both"
    N_mc: int = 2000
    seed: int = 0
    profile_seed: int = 0
    precoders: Tuple[str, ...] = ("mrt", "rzf")
    slot_stride: int = 1
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"run.engine must be one of {ENGINES}, got {self.engine!r}")
        if self.engine != "de" and self.N_mc < 2:
            raise ConfigError("run.n_mc must be >= 2 when the MC engine runs")
        if self.sweep_axis is not None and self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        vals = tuple(float(v) for v in self.sweep_values)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if (self.sweep_axis is None) != (len(vals) == 0):
            raise ConfigError("sweep.axis and sweep.values must be given together")
        object.__setattr__(self, "sweep_values", vals)
        for p in self.precoders:
            if p not in PRECODER_KINDS:
                raise ConfigError(f"run.precoders entries must be in {PRECODER_KINDS}, got {p!r}")
        if self.slot_stride < 1:
            raise ConfigError("run.slot_stride must be >= 1")
        cells = self.geometry.get("cells", 1)
        if not 1 <= cells <= 7:
            raise ConfigError("geometry.cells must be in [1, 7]")
        if self.geometry.get("estimator", "as_written") not in ("as_written", "standard"):
            raise ConfigError("geometry.estimator must be 'as_written' or 'standard'")
        build_config(self)

    @property
    def cfg(self) -> SystemConfig:
        return build_config(self)

    def points(self) -> List[Tuple[Optional[float], "Scenario"]]:
        """One scenario per sweep value with the swept parameter applied."""
        if self.sweep_axis is None:
            return [(None, self)]
        return [(v, _apply_axis(self, v)) for v in self.sweep_values]


@dataclass(frozen=True)
class SweepRow:
    sweep_axis: str
    sweep_value: float
    engine: str
    precoder: str
    user_index: str
    rate_bps_hz: float
    gamma_mean: float
    mc_de_gap_rel: float
    seed: int
    n_mc: int
    note: str = ""

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass(frozen=True)
class PowerPoint:
    """Required downlink power at one sweep point."""

    sweep_value: Optional[float]
    p_d_watt: float
    p_d_dbm: float
    rate_per_user: float
    saturated: bool


@dataclass(frozen=True)
class ValidationCase:
    """One DE-vs-MC comparison (max over users of the relative SINR gap)."""

    M: int
    fD_Ts: float
    sigma_deg: float
    precoder: str
    slot: int
    max_rel_gap: float
    passed: bool
    gap_per_user: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def _parse_value(key, raw, kind):
    try:
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if kind == "strs":
            return tuple(x.strip().lower() for x in raw.replace(",", " ").split())
        if kind is int:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind is str:
            return raw.strip()
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_scenario(text: str) -> Scenario:
    """Parse INI text (``[section]`` then ``key = value``) into a Scenario."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from None
    lower = {k.lower(): k for k in _SCHEMA}
    values = {k: d for k, (_, d) in _SCHEMA.items()}
    for section in parser.sections():
        for key, raw in parser.items(section):
            dotted = f"{section}.{key}"
            canon = lower.get(dotted.lower())
            if canon is None:
                raise ConfigError(f"unknown key {dotted!r}")
            values[canon] = _parse_value(canon, raw, _SCHEMA[canon][0])
    params = dict(
        M=values["system.M"], K=values["system.K"], tau=values["system.tau"],
        T_c=values["system.T_c"], fD_Ts=values["system.fD_Ts"],
        p_u_dbm=values["system.p_u_dbm"], p_d_dbm=values["system.p_d_dbm"],
        noise_dbm_hz=values["system.noise_dbm_hz"], bandwidth_hz=values["system.bandwidth_hz"],
        sigma_phi_deg=values["system.sigma_phi_deg"],
        sigma_varphi_deg=values["system.sigma_varphi_deg"],
        oscillator_mode=values["system.oscillator_mode"], rzf_alpha=values["system.rzf_alpha"],
        rzf_Z=values["system.rzf_z"],
    )
    geometry = dict(
        cell_radius=values["geometry.cell_radius"], guard_radius=values["geometry.guard_radius"],
        pathloss_exp=values["geometry.pathloss_exp"],
        shadow_sigma_dB=values["geometry.shadow_sigma_db"], cells=values["geometry.cells"],
        estimator=values["geometry.estimator"],
    )
    return Scenario(
        params=params, geometry=geometry, sweep_axis=values["sweep.axis"],
        sweep_values=values["sweep.values"] or (), engine=values["run.engine"].lower(),
        N_mc=values["run.n_mc"], seed=values["run.seed"], profile_seed=values["run.profile_seed"],
        precoders=tuple(values["run.precoders"]), slot_stride=values["run.slot_stride"],
        output_path=values["run.output"],
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; an empty file gives the defaults."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    return parse_scenario(p.read_text(encoding="utf-8"))


def build_config(scenario: Scenario) -> SystemConfig:
    return SystemConfig.build(**scenario.params)


def build_profile(scenario: Scenario, M: Optional[int] = None) -> LargeScaleProfile:
    """Own-cell large-scale profile drawn from ``profile_seed``.

    The same users are kept across every sweep point, including ``M``.
    """
    g = scenario.geometry
    rng = np.random.default_rng(scenario.profile_seed)
    M = scenario.params["M"] if M is None else M
    return draw_large_scale(g["cell_radius"], g["guard_radius"], g["pathloss_exp"],
                            g["shadow_sigma_dB"], scenario.params["K"], rng, M)


def _apply_axis(scenario: Scenario, value: float) -> Scenario:
    params = dict(scenario.params)
    if scenario.sweep_axis == "M":
        if value != int(value) or value < 1:
            raise ConfigError("M sweep values must be positive integers")
        params["M"] = int(value)
    elif scenario.sweep_axis == "fD_Ts":
        params["fD_Ts"] = value
    elif scenario.sweep_axis == "sigma_deg":
        params["sigma_phi_deg"] = value
        params["sigma_varphi_deg"] = value
    elif scenario.sweep_axis == "p_d":
        params["p_d_dbm"] = value
    return replace(scenario, params=params, sweep_axis=None, sweep_values=())


def _slots(cfg: SystemConfig, stride: int) -> Tuple[int, ...]:
    return tuple(range(1, cfg.n_data + 1, stride))


def _rates(gamma: np.ndarray, cfg: SystemConfig, stride: int) -> np.ndarray:
    """Per-user rate from per-slot SINR, rescaled when slots are strided."""
    if stride == 1:
        return ergodic_rate(gamma, cfg.T_c, cfg.tau).per_user_rate
    return np.log2(1.0 + gamma).mean(axis=0) * cfg.n_data / cfg.T_c


def _point_seed(seed: int, index: int) -> int:
    return int(seed) + int(index)


def _mc_gammas(point: Scenario, cfg, profile, slots, seed):
    cells = point.geometry["cells"]
    if cells == 1:
        res = mc_sinr_slots(cfg, profile, point.precoders, slots, point.N_mc, seed)
    else:
        g = point.geometry
        layout = hex_layout(cells, cfg.K, np.random.default_rng(point.profile_seed),
                            g["cell_radius"], g["guard_radius"], g["pathloss_exp"],
                            g["shadow_sigma_dB"])
        res = multicell_mc_sinr(cfg, cells, layout, point.precoders, slots, point.N_mc, seed,
                                g["estimator"])
    return {k: v.gamma for k, v in res.items()}


def _point_rows(axis, value, point: Scenario, seed: int) -> List[SweepRow]:
    cfg = point.cfg
    profile = build_profile(point, cfg.M)
    slots = _slots(cfg, point.slot_stride)
    engines = ("mc", "de") if point.engine == "both" else (point.engine,)
    gam: Dict[str, Dict[str, np.ndarray]] = {}
    errors: Dict[str, str] = {}
    for eng in engines:
        try:
            if eng == "mc":
                gam[eng] = _mc_gammas(point, cfg, profile, slots, seed)
            else:
                if point.geometry["cells"] != 1:
                    raise ConfigError("the DE engine covers the single-cell system only")
                gam[eng] = {k: de_gammas(cfg, profile, k, slots) for k in point.precoders}
        except ChanagingError as exc:
            errors[eng] = f"{type(exc).__name__}: {exc}"
            log.warning("engine %s failed at %s=%s: %s", eng, axis, value, exc)
    rows = []
    sv = float("nan") if value is None else float(value)
    ax = axis or "none"
    n_mc = point.N_mc if "mc" in engines else 0
    for eng in engines:
        for kind in point.precoders:
            if eng in errors:
                rows.append(SweepRow(ax, sv, eng, kind, "sum", float("nan"), float("nan"),
                                     float("nan"), seed, n_mc, errors[eng]))
                continue
            g = gam[eng][kind]
            rates = _rates(g, cfg, point.slot_stride)
            if "mc" in gam and "de" in gam:
                ref = gam["mc"][kind]
                with np.errstate(divide="ignore", invalid="ignore"):
                    rel = np.abs(gam["de"][kind] - ref) / ref
                gap_user = np.max(rel, axis=0)
            else:
                gap_user = np.full(cfg.K, np.nan)
            for k in range(cfg.K):
                gap = float(gap_user[k])
                note = "gap>5%" if gap > GAP_TOL else ""
                rows.append(SweepRow(ax, sv, eng, kind, str(k), float(rates[k]),
                                     float(np.mean(g[:, k])), gap, seed, n_mc, note))
            gap = float(np.max(gap_user))
            rows.append(SweepRow(ax, sv, eng, kind, "sum", float(rates.sum()), float(np.mean(g)),
                                 gap, seed, n_mc, "gap>5%" if gap > GAP_TOL else ""))
    return rows


def run_sweep(scenario: Scenario) -> List[SweepRow]:
    """Evaluate every sweep point with the configured engines.

    Sweep point ``i`` uses seed ``run.seed + i`` for all of its Monte-Carlo
    runs, so MRT and RZF see the same channel draws. Engine failures are
    recorded in the row ``note`` and the sweep continues.
    """
    rows: List[SweepRow] = []
    for i, (value, point) in enumerate(scenario.points()):
        rows.extend(_point_rows(scenario.sweep_axis, value, point, _point_seed(scenario.seed, i)))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(v) for v in r.as_tuple()])
    return buf.getvalue()


def write_csv(rows: Sequence[SweepRow], path) -> None:
    Path(path).write_text(rows_to_csv(rows), encoding="utf-8")


def _mean_rate_de(point: Scenario, profile, kind, p_dbm, stride):
    params = dict(point.params, p_d_dbm=p_dbm, p_u_dbm=p_dbm)
    cfg = SystemConfig.build(**params)
    g = de_gammas(cfg, profile, kind, _slots(cfg, stride))
    return float(np.mean(_rates(g, cfg, stride)))


def required_power(scenario: Scenario, target_rate_per_user: float, kind: str = "mrt",
                   cap_dbm: float = POWER_CAP_DBM, floor_dbm: float = POWER_FLOOR_DBM,
                   ) -> List[PowerPoint]:
    """Smallest ``p_d`` whose mean per-user DE rate reaches the target.

    The uplink power is tied to ``p_d`` (``p_u = p_d``), and the search runs
    in dBm with Brent's method to a rate accuracy of 1e-4 bits/s/Hz. A
    target not met at ``cap_dbm`` returns the cap with ``saturated=True``.

    Raises
    ------
    NumericError
        If the rate is found decreasing in ``p_d`` at the sampled points.
    """
    if kind not in PRECODER_KINDS:
        raise ConfigError(f"unknown precoder kind {kind!r}")
    if not target_rate_per_user > 0:
        raise ConfigError("target rate must be > 0")
    out = []
    for value, point in scenario.points():
        profile = build_profile(point, point.params["M"])

        def f(x):
            return _mean_rate_de(point, profile, kind, x, point.slot_stride) - target_rate_per_user

        lo, hi = f(floor_dbm), f(cap_dbm)
        if hi < lo:
            raise NumericError("rate decreases with p_d")
        if hi < 0:
            out.append(PowerPoint(value, dbm_to_watt(cap_dbm), cap_dbm, hi + target_rate_per_user, True))
            continue
        if lo >= 0:
            x = floor_dbm
        else:
            x = brentq(f, floor_dbm, cap_dbm, xtol=1e-9, rtol=1e-12, maxiter=200)
        r = f(x)
        if not (lo - 1e-12 <= r <= hi + 1e-12):
            raise NumericError("rate is not monotone in p_d")
        if abs(r) > RATE_TOL and lo < 0:
            raise NumericError(f"power search missed the target by {r:.2e}")
        out.append(PowerPoint(value, dbm_to_watt(x), float(x), r + target_rate_per_user, False))
    return out


def validate_de_mc(scenario: Scenario, Ms=(30, 60, 120), fds=(0.0, 0.05), sigmas=(0.0, 2.0),
                   slots=(1, 5), tol: float = GAP_TOL) -> List[ValidationCase]:
    """Per-user DE SINR against Monte-Carlo over a grid of cases.

    Both precoders share the trials of each case; the profile comes from
    ``run.profile_seed`` and each case gets seed ``run.seed + case index``.
    """
    from .detequiv import de_sinr_mrt, de_sinr_rzf

    fns = {"mrt": de_sinr_mrt, "rzf": de_sinr_rzf}
    cases = []
    idx = 0
    for M in Ms:
        for fd in fds:
            for sd in sigmas:
                params = dict(scenario.params, M=M, fD_Ts=fd, sigma_phi_deg=sd, sigma_varphi_deg=sd)
                cfg = SystemConfig.build(**params)
                profile = build_profile(scenario, M)
                res = mc_sinr_slots(cfg, profile, scenario.precoders, slots, scenario.N_mc,
                                    _point_seed(scenario.seed, idx))
                idx += 1
                for kind in scenario.precoders:
                    for si, n in enumerate(slots):
                        de = fns[kind](cfg, profile, n).gamma_bar
                        mc = res[kind].gamma[si]
                        gap = np.abs(de - mc) / mc
                        worst = float(np.max(gap))
                        cases.append(ValidationCase(M, fd, sd, kind, n, worst, worst <= tol, gap))
    return cases


def _cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.engine is not None:
        sc = replace(sc, engine=args.engine)
    rows = run_sweep(sc)
    text = rows_to_csv(rows)
    out = args.out or sc.output_path
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_power(args) -> int:
    sc = load_scenario(args.scenario)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("sweep_axis", "sweep_value", "precoder", "p_d_watt", "p_d_dbm",
                "rate_per_user", "saturated"))
    for p in required_power(sc, args.target_rate, args.precoder):
        sv = float("nan") if p.sweep_value is None else p.sweep_value
        w.writerow((sc.sweep_axis or "none", repr(float(sv)), args.precoder, repr(p.p_d_watt),
                    repr(p.p_d_dbm), repr(p.rate_per_user), str(p.saturated).lower()))
    return 0


def _cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    cases = validate_de_mc(sc)
    for c in cases:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} M={c.M} fD_Ts={c.fD_Ts} sigma_deg={c.sigma_deg} {c.precoder} "
              f"n={c.slot} max_rel_gap={c.max_rel_gap:.4f}")
    return 0 if all(c.passed for c in cases) else 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanaging", description="Channel-aging massive MIMO experiments")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="run a sweep and write CSV")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--engine", choices=ENGINES)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_simulate)
    w = sub.add_parser("power", help="required p_d for a per-user target rate")
    w.add_argument("scenario")
    w.add_argument("--target-rate", type=float, required=True)
    w.add_argument("--precoder", choices=PRECODER_KINDS, default="mrt")
    w.set_defaults(func=_cmd_power)
    v = sub.add_parser("validate", help="compare DE against Monte-Carlo")
    v.add_argument("scenario")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except ChanagingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
