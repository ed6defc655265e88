import csv
import dataclasses
import math

import numpy as np
import pytest

from dtnlab.bessel import KAPPA1
from dtnlab.dtn_map import gamma_volume
from dtnlab.forward_solver import SolverConfig
from dtnlab.harmonics import op_norm_s_to_minus_s
from dtnlab.instability_lab import (
    CSV_COLUMNS,
    EmitError,
    ExperimentRecord,
    ScanConfig,
    apply_fit,
    emit_outputs,
    low_frequency_bound,
    merged_envelope,
    fit_envelope,
    read_csv,
    run_scan,
    scan_gates,
    suppression_ratios,
    write_csv,
)
from dtnlab.potentials import ParameterError, build_discrete_family

SMALL = ScanConfig(
    thetas=(1e-2, 1e-3),
    kappa2s=(0.3, 3.0),
    n_bumps=2,
    M=8,
    solver=SolverConfig(M_trunc=12, N_rad=12),
    trunc_extra=4,
)


def _synthetic(C_R, c0, noise, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    i = 0
    for th in (1e-2, 1e-3, 1e-4):
        for k2 in np.geomspace(0.05, 50.0, 12):
            reg = "low" if k2 <= KAPPA1 / 4 else "high"
            env = float(merged_envelope(th, k2, 1.0, C_R, c0))
            factor = math.exp(-abs(rng.normal(0.0, noise))) if noise else 1.0
            out.append(ExperimentRecord(i, reg, 1.0, th, float(k2), 0.0, 8, 64, min_svd_distance=env * factor))
            i += 1
    return out


def test_fit_recovers_synthetic_constants():
    recs = _synthetic(2e-3, 0.4, 0.0)
    fit = fit_envelope(recs)
    assert fit.C_R == pytest.approx(2e-3, rel=1e-6)
    assert fit.c0 == pytest.approx(0.4, rel=1e-4)
    assert fit.one_sided and not fit.degenerate and not fit.c0_at_bound
    noisy = _synthetic(2e-3, 0.4, 0.01, seed=1)
    fit = fit_envelope(noisy)
    assert fit.C_R == pytest.approx(2e-3, rel=0.05)
    assert fit.c0 == pytest.approx(0.4, rel=0.05)
    assert fit.one_sided


def test_fit_degenerate_and_errors():
    zeros = [dataclasses.replace(r, min_svd_distance=0.0) for r in _synthetic(1.0, 1.0, 0.0)]
    assert fit_envelope(zeros).degenerate
    recs = _synthetic(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        fit_envelope(recs[:7])
    with pytest.raises(ValueError):
        fit_envelope([r for r in recs if r.regime == "high"])


def test_fit_flags_violations():
    recs = _synthetic(2e-3, 0.4, 0.0)
    fit = fit_envelope(recs)
    assert all(
        r.min_svd_distance <= e * (1 + 1e-9)
        for r, e in zip(recs, merged_envelope(np.array([r.theta for r in recs]), np.array([r.kappa2 for r in recs]), 1.0, fit.C_R, fit.c0))
    )


def test_csv_round_trip_and_refit(tmp_path):
    recs = apply_fit(_synthetic(3e-4, 0.2, 0.02, seed=4), fit_envelope(_synthetic(3e-4, 0.2, 0.02, seed=4)))
    path = write_csv(recs, tmp_path / "r.csv")
    back = read_csv(path)
    assert [r.row() for r in back] == [r.row() for r in recs]  # rows compare NaN fields as text
    assert fit_envelope(back) == fit_envelope(recs)


def test_emit_outputs(tmp_path):
    with pytest.raises(ValueError):
        emit_outputs([], tmp_path / "none")
    assert not (tmp_path / "none").exists()
    rec = _synthetic(1.0, 1.0, 0.0)[:1]
    files = emit_outputs(rec, tmp_path / "one", plots=False)
    with open(files[0], newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 2


def test_emit_error_lists_partial_outputs(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(EmitError) as info:
        emit_outputs(_synthetic(1.0, 1.0, 0.0)[:1], blocker)
    assert info.value.manifest == []
    out = tmp_path / "out"
    out.mkdir()
    (out / "scan.json").mkdir()  # the JSON write fails after the CSV
    with pytest.raises(EmitError) as info:
        emit_outputs(_synthetic(1.0, 1.0, 0.0)[:1], out, plots=False)
    assert [p.name for p in info.value.manifest] == ["scan.csv"]


def test_single_bump_scan_equals_gamma_norm():
    cfg = dataclasses.replace(SMALL, n_bumps=1, thetas=(1e-2,), trunc_extra=0)
    recs = run_scan(cfg)
    fam = build_discrete_family(1e-2, 1.0, 0.5, 1, regime=None)
    for r in recs:
        g = gamma_volume(fam.member(1), r.q_ref_shift, r.kappa2, cfg.solver, M=cfg.M)
        assert r.n_members == 2
        assert r.min_svd_distance == pytest.approx(op_norm_s_to_minus_s(g.entries, cfg.s), rel=1e-9)
        assert r.separation == 1e-2 and r.separation_ok


def test_scan_records_and_gates():
    recs = run_scan(SMALL)
    assert [r.index for r in recs] == list(range(4))
    assert [r.regime for r in recs] == ["low", "low", "high", "high"]
    assert [r.q_ref_shift for r in recs] == [0.0, 0.0, 1.0, 1.0]
    for r in recs:
        assert r.sandwich_ok and r.min_svd_distance <= r.xs_bound
        assert r.trunc_rel_change < 1e-2
        assert r.low_freq_bound == pytest.approx(low_frequency_bound(r.theta, r.kappa2, 1.0))
    gates = scan_gates(recs, None)
    assert all(gates.values())
    ratios = suppression_ratios(recs)
    assert set(ratios) == {1e-2, 1e-3}


def test_scan_is_deterministic(tmp_path):
    a = write_csv(run_scan(SMALL), tmp_path / "a.csv").read_bytes()
    b = write_csv(run_scan(SMALL), tmp_path / "b.csv").read_bytes()
    c = write_csv(run_scan(SMALL, threads=2), tmp_path / "c.csv").read_bytes()
    assert a == b == c


def test_progress_file(tmp_path):
    run_scan(SMALL, progress=tmp_path / "p.jsonl")
    assert len((tmp_path / "p.jsonl").read_text().splitlines()) == 4


def test_config_from_mapping_and_validation():
    cfg = ScanConfig.from_mapping(
        {"scan": {"thetas": [1e-3], "kappa2_range": [0.1, 10.0, 5], "M": 12}, "solver": {"M_trunc": 20, "N_rad": 12}}
    )
    assert cfg.kappa2s[0] == pytest.approx(0.1) and len(cfg.kappa2s) == 5
    assert cfg.solver.M_trunc == 20
    cfg.validate()
    assert cfg.digest() == dataclasses.replace(cfg, out_dir="elsewhere").digest()
    assert cfg.digest() != dataclasses.replace(cfg, M=10).digest()
    with pytest.raises(ParameterError):
        ScanConfig.from_mapping({"scan": {"bogus": 1}})
    with pytest.raises(ParameterError):
        dataclasses.replace(SMALL, thetas=(0.1,)).validate()
    with pytest.raises(ParameterError):
        dataclasses.replace(SMALL, regime="low", kappa2s=(3.0,)).validate()
    with pytest.raises(ParameterError):
        dataclasses.replace(SMALL, M=40).validate()


def test_regime_switch():
    cfg = ScanConfig()
    assert cfg.regime_for(KAPPA1 / 4) == "low"
    assert cfg.regime_for(KAPPA1 / 4 * 1.0001) == "high"
    assert cfg.shift_for(0.1) == 0.0 and cfg.shift_for(10.0) == 1.0
