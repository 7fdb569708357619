import json

import numpy as np
import pandas as pd

from src import logs
from src.report import ReportGenerator, save_json, to_jsonable
from src.verify import TailCheck, TrialReport


def test_to_jsonable_converts_numpy():
    data = {"a": np.float64(1.5), "b": np.arange(3), "c": [np.int64(2), float("inf")], 4: np.bool_(True)}
    assert to_jsonable(data) == {"a": 1.5, "b": [0, 1, 2], "c": [2, None], "4": True}


def test_save_json_creates_directory(tmp_path):
    path = save_json({"sigma": np.array([2.0, 1.0])}, str(tmp_path / "nested" / "out.json"))
    with open(path, 'r', encoding='utf-8') as f:
        assert json.load(f) == {"sigma": [2.0, 1.0]}


def test_summary_frame_mixes_report_types(tmp_path):
    reports = [
        TrialReport(suite="shuffle", trials=5, successes=5, measured=10.0, bound_value=20.0, slack=1.0,
                    passed=True, rule="r"),
        TailCheck(delta=0.5, alpha=20.0, empirical_upper_tail=0.01, empirical_lower_tail=0.02,
                  chernoff_upper=0.11, chernoff_lower=0.08, trials=100, slack_upper=0.03, passed=True),
    ]
    df = ReportGenerator.save_summary_csv(reports, str(tmp_path / "summary.csv"))
    assert list(df.columns) == ReportGenerator.SUMMARY_COLUMNS
    assert df["status"].tolist() == ["PASS", "PASS"]
    assert df.loc[1, "measured"] == 0.02
    assert pd.read_csv(tmp_path / "summary.csv")["suite"].tolist() == ["shuffle", "chernoff"]


def test_quiet_silences_console_reports(capsys):
    logs.set_verbosity("quiet")
    ReportGenerator.print_effective_config("run", {"gamma": 1.0})
    ReportGenerator.print_suite_report(TrialReport(suite="x", skipped=True))
    logs.info("hidden")
    logs.warn("shown")
    captured = capsys.readouterr()
    assert captured.out == ""
    assert "[WARN] shown" in captured.err


def test_suite_report_prints_status(capsys):
    ReportGenerator.print_suite_report(TrialReport(suite="lowerbound", trials=1, successes=1, measured=6.0,
                                                   passed=True, details={"pairs": list(range(12))}))
    out = capsys.readouterr().out
    assert "SUITE: lowerbound" in out
    assert "Status: PASS" in out
    assert "(12 values)" in out


def test_debug_messages_need_debug_level(capsys):
    logs.debug("not yet")
    logs.set_verbosity("debug")
    logs.debug("now")
    out = capsys.readouterr().out
    assert "not yet" not in out
    assert "[DEBUG] now" in out
    assert logs.get_verbosity() == "debug"
