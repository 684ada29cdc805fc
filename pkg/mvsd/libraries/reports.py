import csv
import io
import logging
import os

from mvsd.libraries.acoustics import MetricReport
from mvsd.libraries.helpers import atomic_write, write_json

logger = logging.getLogger(__name__)


def _csv_text(rows, fieldnames) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: "" if row.get(key) is None else row[key] for key in fieldnames})
    return buffer.getvalue()


def write_csv(path, rows, fieldnames=None):
    rows = list(rows)
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            fieldnames += [key for key in row if key not in fieldnames]
    atomic_write(path, _csv_text(rows, fieldnames), mode="w")


def metric_report_to_json(report: MetricReport) -> dict:
    return {
        "stft_distance": report.stft_distance,
        "rte": report.rte,
        "rte_failures": report.rte_failures,
        "items": [item._asdict() for item in report.items],
    }


def write_metric_report(report: MetricReport, out_dir, stem="metrics"):
    """<stem>.json with the aggregate and items, <stem>.csv with one row per item."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{stem}.json")
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    write_json(json_path, metric_report_to_json(report))
    write_csv(csv_path, [item._asdict() for item in report.items], ["item_id", "stft_distance", "rte"])
    return json_path, csv_path


def run_report_to_json(report) -> dict:
    payload = report._asdict()
    payload.pop("metric_report", None)
    return payload


def write_run_report(report, out_dir, stem=None):
    """
    <task>_<predictor>.json holds the whole report (config echo, checkpoint digest, timestamps);
    <task>_<predictor>.csv holds the per-item rows. Reports that carry a metric summary also get
    <task>_<predictor>.metrics.json and .metrics.csv.
    """
    stem = stem or f"{report.task}_{report.predictor}"
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{stem}.json")
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    write_json(json_path, run_report_to_json(report))
    write_csv(csv_path, report.items)
    if report.metric_report is not None:
        write_metric_report(report.metric_report, out_dir, stem=f"{stem}.metrics")
    logger.info("Wrote %s report to %s", report.task, json_path)
    return json_path, csv_path
