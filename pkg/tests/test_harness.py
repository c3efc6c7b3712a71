import csv
import io

import numpy as np
import pytest

from chanaging.channel_model import dbm_to_watt
from chanaging.errors import ConfigError
from chanaging.harness import (
    CSV_COLUMNS,
    load_scenario,
    main,
    parse_scenario,
    required_power,
    rows_to_csv,
    run_sweep,
)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.ini"
    p.write_text("")
    sc = load_scenario(p)
    cfg = sc.cfg
    assert (cfg.M, cfg.K, cfg.tau, cfg.T_c) == (60, 10, 10, 196)
    assert cfg.p_u == pytest.approx(dbm_to_watt(46.0)) and cfg.p_d == pytest.approx(dbm_to_watt(46.0))
    assert sc.geometry["cell_radius"] == 1000.0 and sc.geometry["pathloss_exp"] == 3.8
    assert sc.geometry["shadow_sigma_dB"] == 8.0


def test_overrides_only_touch_given_fields():
    base = parse_scenario("")
    sc = parse_scenario("[system]\nM = 30\nK = 5\n")
    assert sc.params["M"] == 30 and sc.params["K"] == 5
    changed = {k for k in base.params if base.params[k] != sc.params[k]}
    assert changed == {"M", "K"}


@pytest.mark.parametrize("text, msg", [
    ("[sweep]\naxis = M\nvalues = 3 1 2\n", "sweep values must be strictly increasing"),
    ("[system]\nMM = 3\n", "unknown key"),
    ("[other]\nx = 1\n", "unknown key"),
    ("[system]\nM = abc\n", "system.M"),
    ("[sweep]\naxis = speed\nvalues = 1 2\n", "sweep.axis"),
    ("[run]\nengine = both\nn_mc = 1\n", "n_mc"),
    ("[system]\ntau = 3\n", "tau"),
    ("no section = 1\n", "malformed"),
])
def test_invalid_scenarios(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_scenario(text)


def small(text=""):
    return parse_scenario("[run]\nn_mc = 60\nslot_stride = 31\n" + text)


def test_sweep_rows_and_gap_column():
    sc = small("[sweep]\naxis = M\nvalues = 30 60 120\n")
    rows = run_sweep(sc)
    sums = [r for r in rows if r.user_index == "sum"]
    # one sum row per (point, engine, precoder)
    assert len(sums) == 3 * 2 * 2
    assert all(np.isfinite(r.mc_de_gap_rel) for r in rows)
    assert {r.engine for r in rows} == {"mc", "de"}
    assert [r.seed for r in sums[::4]] == [0, 1, 2]


def test_csv_is_byte_identical_and_round_trips():
    sc = small("[sweep]\naxis = fD_Ts\nvalues = 0 0.05\n")
    a = rows_to_csv(run_sweep(sc))
    b = rows_to_csv(run_sweep(sc))
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert tuple(rows[0]) == CSV_COLUMNS
    orig = run_sweep(sc)
    assert float(rows[1][5]) == orig[0].rate_bps_hz


def test_rate_decreases_with_phase_noise():
    sc = parse_scenario("[sweep]\naxis = sigma_deg\nvalues = 0 2\n[run]\nengine = de\n")
    rows = [r for r in run_sweep(sc) if r.user_index == "sum"]
    for kind in ("mrt", "rzf"):
        v = [r.rate_bps_hz for r in rows if r.precoder == kind]
        assert v[1] < v[0]


def test_rate_decreases_with_doppler_and_noise_curves_converge():
    sc = parse_scenario("[sweep]\naxis = fD_Ts\nvalues = 0 0.05 0.1 0.2\n[run]\nengine = de\n")
    noisy = parse_scenario("[system]\nsigma_phi_deg = 2\nsigma_varphi_deg = 2\n"
                           "[sweep]\naxis = fD_Ts\nvalues = 0 0.05 0.1 0.2\n[run]\nengine = de\n")
    for kind in ("mrt", "rzf"):
        a = np.array([r.rate_bps_hz for r in run_sweep(sc) if r.user_index == "sum" and r.precoder == kind])
        b = np.array([r.rate_bps_hz for r in run_sweep(noisy) if r.user_index == "sum" and r.precoder == kind])
        assert np.all(np.diff(a) < 0) and np.all(np.diff(b) < 0)
        gap = np.abs(a - b)
        assert gap[-1] < gap[0]


def test_engine_failure_is_annotated():
    sc = parse_scenario("[geometry]\ncells = 3\n[run]\nengine = de\n")
    rows = run_sweep(sc)
    assert all("ConfigError" in r.note for r in rows)
    assert all(np.isnan(r.rate_bps_hz) for r in rows)


def test_multicell_mc_sweep_runs():
    sc = parse_scenario("[geometry]\ncells = 3\n[run]\nengine = mc\nn_mc = 20\nslot_stride = 60\n")
    rows = run_sweep(sc)
    assert rows and all(r.engine == "mc" for r in rows)


def test_required_power_monotone_and_accurate():
    sc = parse_scenario("[sweep]\naxis = fD_Ts\nvalues = 0 0.01 0.02\n[run]\nslot_stride = 5\n")
    pts = required_power(sc, 1.0, "mrt")
    p = [x.p_d_dbm for x in pts]
    assert np.all(np.diff(p) >= 0)
    for x in pts:
        assert x.saturated or abs(x.rate_per_user - 1.0) <= 1e-4


def test_required_power_saturates():
    sc = parse_scenario("[system]\nfD_Ts = 0.2\n[run]\nslot_stride = 5\n")
    (pt,) = required_power(sc, 5.0, "mrt")
    assert pt.saturated and pt.p_d_dbm == 60.0


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[system]\nfoo = 1\n")
    assert main(["simulate", str(bad)]) == 2
    assert main(["simulate", str(tmp_path / "missing.ini")]) == 2
    good = tmp_path / "good.ini"
    good.write_text("[run]\nn_mc = 20\nslot_stride = 60\nengine = mc\n")
    out = tmp_path / "out.csv"
    assert main(["simulate", str(good), "--out", str(out), "--seed", "3"]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert main(["power", str(good), "--target-rate", "1"]) == 0
    assert "saturated" in capsys.readouterr().out
