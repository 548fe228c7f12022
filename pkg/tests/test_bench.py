"""Experiment harness: K selection by split stability, the benchmark grid,
the parameter sweeps, and reproducible CSV emission.

Covers:
    - K selection: singleton candidate, report invariants, tie handling,
      true-K recovery on strong signal, argument validation
    - benchmark grid: byte-identical reruns, summary recomputation, the
      large-cell recovery band
    - sweeps: unknown-name rejection, misleading-tier columns, standardized
      heavy-tail agreement with the Gaussian reference
    - CSV layout: wall-clock column excluded from replicate rows
"""

import json

import numpy as np
import pytest

from hbcm.bench import (
    CvReport,
    _derive_seed,
    _uniform_block_system,
    bench_sweep,
    bench_table1,
    rows_to_csv,
    select_k_cv,
    summarize,
    summary_to_csv,
)
from hbcm.model import ValidationError
from hbcm.simulate import generate_dataset


def _strong_cv_data():
    sys_ = _uniform_block_system(240, 3, 1.0, 1.0, 0.5, _derive_seed(4200, "sys"))
    data, _ = generate_dataset(300, sys_, seed=_derive_seed(4200, "data"))
    return data


# -- K selection ----------------------------------------------------------------

def test_cv_singleton_candidate_wins_by_default():
    data = _strong_cv_data()
    report = select_k_cv(data, [4], 2, method="spectral", seed=1)
    assert report.best_k == 4
    assert report.k_values == (4,)
    assert report.per_split_ari.shape == (2, 1)


def test_cv_report_invariants_hold_exactly():
    data = _strong_cv_data()
    report = select_k_cv(data, [2, 3, 4], 3, method="spectral", seed=2)
    assert report.per_split_ari.shape == (3, 3)
    # column-mean invariant, NaN cells excluded
    for ki in range(3):
        col = report.per_split_ari[:, ki]
        good = col[~np.isnan(col)]
        if good.size:
            assert report.mean_ari[ki] == good.mean()
        else:
            assert np.isnan(report.mean_ari[ki])
    # best_k attains the max, ties to the smallest candidate
    best = None
    best_val = -np.inf
    for k, v in zip(report.k_values, report.mean_ari):
        if not np.isnan(v) and (v > best_val or (v == best_val and k < best)):
            best, best_val = k, v
    assert report.best_k == best
    doc = json.loads(report.to_json())
    assert set(doc) == {"k_values", "mean_ari", "best_k", "per_split_ari"}
    assert isinstance(report, CvReport)


def test_cv_tie_prefers_smaller_k():
    # four features in two exact pairs: K=2 splits them perfectly and K=4
    # shatters them into singletons, so both score 1.0 on every split
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(40,)), rng.normal(size=(40,))
    x = np.column_stack([a, a + 1e-6 * rng.normal(size=40),
                         b, b + 1e-6 * rng.normal(size=40)])
    report = select_k_cv(x, [4, 2], 3, method="spectral", seed=4)
    np.testing.assert_array_equal(report.mean_ari, [1.0, 1.0])
    assert report.best_k == 2


def test_cv_recovers_true_k_on_strong_signal():
    report = select_k_cv(_strong_cv_data(), [2, 3, 4], 5, seed=4200)
    assert report.best_k == 3
    assert report.mean_ari[1] > 0.9


def test_cv_argument_validation():
    data = _strong_cv_data()
    with pytest.raises(ValidationError, match="at least 2"):
        select_k_cv(data, [1, 3], 2, seed=0)
    with pytest.raises(ValidationError, match="at least 4 rows"):
        select_k_cv(np.ones((3, 5)), [2], 2, seed=0)
    with pytest.raises(ValidationError, match="at least one split"):
        select_k_cv(data, [2], 0, seed=0)


def test_cv_raises_when_every_cell_fails():
    data = _strong_cv_data()
    with pytest.warns(UserWarning, match="cv split failed"):
        with pytest.raises(RuntimeError, match="every cross-validation cell failed"):
            select_k_cv(data, [2], 2, method="bogus", seed=0)


# -- benchmark grid -------------------------------------------------------------

def test_replicate_csv_bytes_are_reproducible(tmp_path):
    cells = [(80, 60, 2)]
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    rows_to_csv(bench_table1(cells, reps=1, seed=7), pa)
    rows_to_csv(bench_table1(cells, reps=1, seed=7), pb)
    assert pa.read_bytes() == pb.read_bytes()
    rows_to_csv(bench_table1(cells, reps=1, seed=8), pa)
    assert pa.read_bytes() != pb.read_bytes()


def test_summary_matches_direct_recompute(tmp_path):
    rows = bench_table1([(80, 60, 2), (80, 40, 2)], reps=3, seed=9)
    summary = summarize(rows)
    assert len(summary) == 4  # two cells x two methods
    for entry in summary:
        vals = [r.ari for r in rows
                if r.scenario == entry["scenario"] and r.method == entry["method"]]
        assert entry["reps"] == 3
        assert entry["mean_ari"] == np.mean(vals)
        assert abs(entry["sd_ari"] - np.std(vals, ddof=1)) < 1e-15
    out = tmp_path / "summary.csv"
    summary_to_csv(summary, out)
    header = out.read_text().splitlines()[0]
    assert header == "scenario,n,p,k,method,reps,mean_ari,sd_ari"


def test_replicate_rows_and_csv_exclude_wall_times(tmp_path):
    rows = bench_table1([(80, 60, 2)], reps=1, seed=10)
    assert all(r.ari >= -1.0 and r.ari <= 1.0 for r in rows)
    assert all(r.wall_ms >= 0.0 for r in rows)
    out = tmp_path / "rows.csv"
    rows_to_csv(rows, out)
    header = out.read_text().splitlines()[0]
    assert header == "scenario,n,p,k,method,rep,seed,ari,iterations"


def test_large_cell_recovery_band():
    rows = bench_table1([(1000, 1500, 3)], reps=20, seed=20240501)
    means = {s["method"]: s["mean_ari"] for s in summarize(rows)}
    assert 0.45 <= means["hbcm"] <= 0.75
    assert means["hbcm"] > means["spectral"]


# -- sweeps ---------------------------------------------------------------------

def test_unknown_sweep_name_is_rejected():
    with pytest.raises(ValidationError, match="unknown sweep"):
        bench_sweep("bogus", reps=1, seed=0)


def test_misleading_sweep_scores_tier_agreement():
    rows = bench_sweep("mislead", reps=1, seed=5, n=200, grid=[4.0])
    assert len(rows) == 2
    assert all(r.ari_alt is not None for r in rows)
    assert all(r.p == 1000 and r.k == 3 for r in rows)


def test_plain_sweeps_leave_tier_column_empty(tmp_path):
    rows = bench_sweep("sigma", reps=1, seed=6, n=120, p=90, k=2, grid=[2.0])
    assert all(r.ari_alt is None for r in rows)
    out = tmp_path / "sweep.csv"
    rows_to_csv(rows, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "sweep,n,p,k,value,method,rep,seed,ari,ari_alt,iterations"
    assert all(line.split(",")[9] == "" for line in lines[1:])


def test_standardized_heavy_tails_match_gaussian_reference():
    rows = bench_sweep("t_dof_standardized", reps=10, seed=4300,
                       n=500, p=400, k=3, grid=[20.0, np.inf])
    hb = [r for r in rows if r.method == "hbcm"]
    at20 = np.mean([r.ari for r in hb if r.value == 20.0])
    gaussian = np.mean([r.ari for r in hb if np.isinf(r.value)])
    assert abs(at20 - gaussian) < 0.08
