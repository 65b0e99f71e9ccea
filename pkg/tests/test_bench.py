import pandas as pd
import pytest

from tools.bench_report import main as report_main
from tractconn.bench import REPORT_COLUMNS, check_resolutions, run_bench, summarize
from tractconn.errors import InvalidArgumentError


def _report(trad, prop, n=(8, 64, 512), res=(2.0, 1.0, 0.5)):
    rows = []
    for r, voxels, t, p in zip(res, n, trad, prop):
        for algo, seconds in (("traditional", t), ("proposed", p)):
            row = dict.fromkeys(REPORT_COLUMNS, 0)
            row.update(phantom="slab", resolution_mm=r, algorithm=algo, n_source_voxels=voxels, wall_time_s=seconds)
            rows.append(row)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def test_tiny_run_has_fixed_columns():
    report = run_bench("slab", (2.0, 1.0), k=2, k_star=20)
    assert list(report.columns) == REPORT_COLUMNS
    assert len(report) == 4
    assert report.groupby("resolution_mm")["n_source_voxels"].first().to_dict() == {1.0: 64, 2.0: 8}
    proposed = report[report["algorithm"] == "proposed"]
    assert (proposed["streamlines_generated"] == 20).all()


def test_resolutions_must_descend():
    assert check_resolutions(["2", 1]) == [2.0, 1.0]
    for bad in ([], [1.0, 2.0], [2.0, 2.0], [2.0, -1.0]):
        with pytest.raises(InvalidArgumentError):
            check_resolutions(bad)


def test_summary_of_a_good_sweep():
    summary = summarize(_report(trad=[1.0, 8.0, 64.0], prop=[2.0, 2.2, 2.5]))
    assert summary.table["resolution_mm"].tolist() == [2.0, 1.0, 0.5]
    assert summary.table["speedup"].tolist() == pytest.approx([0.5, 8.0 / 2.2, 25.6])
    assert summary.n_growth == [8.0, 8.0]
    assert summary.passed


def test_summary_flags_bad_trends():
    flat = summarize(_report(trad=[1.0, 1.5, 2.0], prop=[1.0, 1.0, 1.0]))
    assert not flat.traditional_ok
    assert not flat.passed
    slow = summarize(_report(trad=[1.0, 8.0, 64.0], prop=[1.0, 3.0, 9.0]))
    assert slow.traditional_ok
    assert not slow.proposed_ok


def test_summary_needs_both_algorithms():
    report = _report(trad=[1.0, 8.0, 64.0], prop=[1.0, 1.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        summarize(report[report["algorithm"] == "proposed"])


def test_report_tool(tmp_path, capsys):
    good = tmp_path / "good.csv"
    _report(trad=[1.0, 8.0, 64.0], prop=[2.0, 2.2, 2.5]).to_csv(good, index=False)
    assert report_main(["--in", str(good), "--strict"]) == 0
    assert "speedup strictly increasing: ok" in capsys.readouterr().out

    bad = tmp_path / "bad.csv"
    _report(trad=[1.0, 1.0, 1.0], prop=[1.0, 1.0, 1.0]).to_csv(bad, index=False)
    assert report_main(["--in", str(bad)]) == 0
    assert report_main(["--in", str(bad), "--strict"]) == 1


@pytest.mark.slow
def test_scaling_trends_on_slab():
    summary = summarize(run_bench("slab", (2.0, 1.0, 0.5), k=20, k_star=2000, repeat=3))
    assert summary.traditional_ok
    assert summary.proposed_ok
    assert summary.speedup_increasing
