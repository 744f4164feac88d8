import numpy as np
import pytest

from sftl.bench import (BenchPlan, BenchRow, diagnostics, fit_r2, median_by_value, point_inputs,
                        run_point, write_csv)


def test_plan_validation_and_points():
    with pytest.raises(ValueError):
        BenchPlan("width", [1, 2])
    with pytest.raises(ValueError):
        BenchPlan("samples", [10, 10])
    with pytest.raises(ValueError):
        BenchPlan("d", [])
    assert BenchPlan("samples", [10]).point(10) == (10, 10, 10, 32)
    assert BenchPlan("overlap", [50], samples=20).point(50) == (50, 50, 10, 32)
    assert BenchPlan("t_features", [7]).point(7) == (100, 100, 7, 32)
    assert BenchPlan("d", [5]).point(5)[3] == 5


def test_point_inputs_shape():
    sp, net_S, net_T = point_inputs(BenchPlan("samples", [30], p_s=3, p_t=2, d=4), 30)
    assert len(sp.source.overlap) == 30 and len(sp.source.y_lab) == 15
    assert net_S.sizes == [3, 4] and net_T.sizes == [2, 4]
    sp, _, _ = point_inputs(BenchPlan("overlap", [10], samples=40), 10)
    assert len(sp.source.overlap) == 10 and sp.source.X.shape[0] == 40


def test_fit_r2():
    x = np.arange(1, 6)
    coef, r2 = fit_r2(x, 3 * x + 1)
    assert np.allclose(coef, [3, 1]) and r2 == pytest.approx(1.0)
    coef, r2 = fit_r2(x, x**2, 2)
    assert coef[0] == pytest.approx(1.0) and r2 == pytest.approx(1.0)
    assert fit_r2(x, np.ones(5))[1] == 1.0


def _row(value, ms, nbytes):
    return BenchRow("samples", value, "sh", 0, 1, 1, 0, ms, 0, ms, nbytes, nbytes, 1, 0, nbytes)


def test_median_and_diagnostics(tmp_path):
    rows = [_row(v, m, 100 * v) for v, m in ((1, 1.0), (1, 3.0), (2, 4.0), (3, 9.0))]
    assert median_by_value(rows, "total_ms") == ([1, 2, 3], [2.0, 4.0, 9.0])
    diag = diagnostics(rows)
    assert diag["bytes_sent"]["r2_linear"] == pytest.approx(1.0)
    assert diag["total_ms"]["quadratic_coef"] > 0
    assert diagnostics(rows[:2]) == {}
    write_csv(rows, tmp_path / "b.csv")
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5


@pytest.mark.parametrize("engine", ["sh", "mal"])
def test_run_point_bytes_match_cost_model(engine):
    row = run_point(BenchPlan("samples", [12], engine=engine, p_s=3, p_t=3, d=3), 12)
    assert row.bytes_sent == row.model_bytes and row.rounds > 0
    assert row.total_ms == pytest.approx(row.init_ms + row.compute_ms + row.reveal_ms)
