import functools
import json
import math
import os

import numpy as np
import pandas as pd

from src import logs


def to_jsonable(value):
    """numpy scalars and arrays to plain Python; NaN and inf become None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def save_json(data, path):
    """Write a JSON hand-off file, creating the directory if needed."""
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(directory):
        os.makedirs(directory)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=4)
    return path


def _console(func):
    """Console reports are silenced by --quiet; files are still written."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        if logs.get_verbosity() == "quiet":
            return None
        return func(*args, **kwargs)
    return wrapper


# -----------------------------------------------------------------------------
# REPORT GENERATOR
# -----------------------------------------------------------------------------
class ReportGenerator:
    SUMMARY_COLUMNS = ["suite", "status", "trials", "successes", "measured", "bound_value", "slack", "rule"]

    @staticmethod
    @_console
    def print_effective_config(command, config):
        """Echo every resolved setting so the run can be reproduced."""
        print("\n" + "=" * 80)
        print(f"⚙️  EFFECTIVE CONFIG: {command}")
        print("=" * 80)
        for key, value in config.items():
            print(f"  {key}: {value}")
        print("=" * 80)

    @staticmethod
    @_console
    def print_matrix_summary(summary, source):
        print("\n📐 MATRIX:")
        print("-" * 80)
        print(f"  Source: {source}")
        for key in ("m", "n", "L", "nnz", "H"):
            print(f"  {key}: {summary[key]}")

    @staticmethod
    @_console
    def print_run_stats(stats):
        print("\n🚚 MAPREDUCE STATS:")
        print("-" * 80)
        for key, value in stats.to_dict().items():
            if key == "wall_time_s":
                value = f"{value:.3f}"
            print(f"  {key.replace('_', ' ').title()}: {value}")

    @staticmethod
    @_console
    def print_singular_values(sigma, limit=10):
        print("\n📈 SINGULAR VALUES:")
        print("-" * 80)
        for k, value in enumerate(sigma[:limit]):
            print(f"  sigma_{k + 1}: {value:.10g}")
        if len(sigma) > limit:
            print(f"  ... ({len(sigma) - limit} more)")

    @staticmethod
    @_console
    def print_suite_report(report):
        """Print one verification suite in the console report format."""
        data = report.to_dict()
        print("\n" + "=" * 80)
        print(f"🧪 SUITE: {data['suite']}")
        print("=" * 80)
        print(f"  Rule: {data.get('rule') or 'n/a'}")
        for key in ("trials", "successes", "measured", "bound_value", "slack", "statistic_mean",
                    "statistic_var", "empirical_upper_tail", "chernoff_upper", "empirical_lower_tail",
                    "chernoff_lower"):
            if key in data and data[key] is not None:
                print(f"  {key.replace('_', ' ').title()}: {data[key]}")

        details = data.get("details") or {}
        if details:
            print("\n  📋 DETAILS:")
            for key, value in details.items():
                if isinstance(value, list) and len(value) > 8:
                    value = f"{value[:8]} ... ({len(value)} values)"
                print(f"    • {key}: {value}")

        if data.get("notes"):
            print("\n  ⚠️  NOTES:")
            for note in data["notes"]:
                print(f"    • {note}")

        status = data["status"]
        icon = {"PASS": "✅", "SKIPPED": "⏭️ ", "FAIL": "❌"}[status]
        print(f"\n  {icon} Status: {status}")
        print("=" * 80 + "\n")

    @classmethod
    def summary_frame(cls, reports):
        rows = []
        for report in reports:
            data = report.to_dict()
            if data.get("measured") is None and "empirical_upper_tail" in data:
                data["measured"] = max(data["empirical_upper_tail"], data["empirical_lower_tail"])
                data["bound_value"] = data["chernoff_upper"]
                data["slack"] = data["slack_upper"]
            data.setdefault("successes", None)
            rows.append({col: data.get(col) for col in cls.SUMMARY_COLUMNS})
        return pd.DataFrame(rows, columns=cls.SUMMARY_COLUMNS)

    @classmethod
    def save_summary_csv(cls, reports, path):
        df = cls.summary_frame(reports)
        df.to_csv(path, index=False, encoding='utf-8')
        logs.info(f"Summary saved to: {path}")
        return df
