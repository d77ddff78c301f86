# src/service/report_service.py
import logging
import math
import os
from typing import Dict, List, Mapping, Optional, Sequence

import pandas as pd

from src.domain.models import (EvalReport, LossRecord, OodCurve, ShapeBiasResult, SharpnessSummary, SpectrumReport,
                               TableSummary)
from src.util.paths import get_report_file_path

logger = logging.getLogger(__name__)

ZEROSHOT_COLUMNS = ["dataset", "model", "top1", "count"]
OOD_COLUMNS = ["kind", "level", "accuracy", "count"]
SPECTRUM_COLUMNS = ["batch_index", "rank", "eigenvalue", "converged"]
HISTOGRAM_COLUMNS = ["bin_low", "bin_high", "count"]
LOSS_COLUMNS = ["step", "loss", "lr", "logit_scale"]


def _structured_text(title: str, fields: Mapping[str, object]) -> str:
    lines = [f"[{title}]"]
    lines.extend(f"{key}: {value}" for key, value in fields.items())
    return "\n".join(lines) + "\n"


class ReportService:
    """Writes every command's CSV and structured-text artifacts under one output directory."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def _path(self, filename: str) -> str:
        return get_report_file_path(self.out_dir, filename)

    def _write_text(self, filename: str, text: str) -> str:
        path = self._path(filename)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def _write_csv(self, filename: str, rows: List[dict], columns: Sequence[str], append: bool = False) -> str:
        path = self._path(filename)
        frame = pd.DataFrame(rows, columns=list(columns))
        if append and os.path.exists(path):
            frame.to_csv(path, mode="a", header=False, index=False)
        else:
            frame.to_csv(path, index=False)
        logger.info(f"Wrote {len(frame)} rows to {path}")
        return path

    def write_loss_log(self, losses: Sequence[LossRecord], filename: str = "loss.csv") -> str:
        rows = [{"step": r.step, "loss": r.loss, "lr": r.learning_rate, "logit_scale": r.logit_scale}
                for r in losses]
        return self._write_csv(filename, rows, LOSS_COLUMNS)

    def write_zeroshot(self, report: EvalReport) -> Dict[str, str]:
        """zeroshot_<dataset>.txt plus one appended row of zeroshot.csv."""
        fields = {
            "dataset": report.dataset,
            "model": report.model_id,
            "top1": f"{report.overall_accuracy:.6f}",
            "count": report.sample_count,
        }
        for name, accuracy in zip(report.class_names, report.per_class_accuracy):
            fields[f"class.{name}"] = "n/a" if math.isnan(accuracy) else f"{accuracy:.6f}"
        fields["confusion"] = ";".join(",".join(str(c) for c in row) for row in report.confusion)
        safe_name = report.dataset.replace(os.sep, "_").replace(" ", "_")
        text_path = self._write_text(f"zeroshot_{safe_name}.txt", _structured_text("zeroshot", fields))
        row = {"dataset": report.dataset, "model": report.model_id, "top1": report.overall_accuracy,
               "count": report.sample_count}
        csv_path = self._write_csv("zeroshot.csv", [row], ZEROSHOT_COLUMNS, append=True)
        return {"text": text_path, "csv": csv_path}

    def write_ood_curves(self, curves: Sequence[OodCurve], filename: str = "ood.csv",
                         overall: Optional[float] = None) -> str:
        rows = []
        for curve in curves:
            counts = curve.counts or [0] * len(curve.points)
            for (level, accuracy), count in zip(curve.points, counts):
                rows.append({"kind": curve.kind, "level": level, "accuracy": accuracy, "count": count})
        path = self._write_csv(filename, rows, OOD_COLUMNS)
        if overall is not None:
            self._write_text("ood_summary.txt", _structured_text("ood", {
                "model": curves[0].model_id if curves else "",
                "conditions": len(curves),
                "overall_accuracy": f"{overall:.6f}",
            }))
        return path

    def write_stimulus(self, dataset: str, model_id: str, accuracy: float, count: int) -> str:
        row = {"dataset": dataset, "model": model_id, "top1": accuracy, "count": count}
        return self._write_csv("stimulus.csv", [row], ZEROSHOT_COLUMNS, append=True)

    def write_shape_bias(self, result: ShapeBiasResult, model_id: str) -> str:
        bias = result.shape_bias
        return self._write_text("shape_bias.txt", _structured_text("shape-bias", {
            "model": model_id,
            "shape_decisions": result.shape_count,
            "texture_decisions": result.texture_count,
            "neither": result.neither_count,
            "shape_bias": "undefined" if bias is None else f"{bias:.6f}",
        }))

    def write_spectrum(self, report: SpectrumReport, filename: str = "hessian.csv") -> str:
        rows = []
        for batch_index, (values, flags) in enumerate(zip(report.eigenvalues, report.converged)):
            for rank, (value, flag) in enumerate(zip(values, flags)):
                rows.append({"batch_index": batch_index, "rank": rank, "eigenvalue": value, "converged": flag})
        return self._write_csv(filename, rows, SPECTRUM_COLUMNS)

    def write_sharpness(self, summary: SharpnessSummary, model_id: str, prefix: str = "sharpness") -> Dict[str, str]:
        rows = [{"bin_low": low, "bin_high": high, "count": count} for low, high, count in summary.histogram]
        csv_path = self._write_csv(f"{prefix}_histogram.csv", rows, HISTOGRAM_COLUMNS)
        text_path = self._write_text(f"{prefix}.txt", _structured_text("sharpness", {
            "model": model_id,
            "eigenvalues": summary.total,
            "negative_count": summary.negative_count,
            "negative_fraction": f"{summary.negative_fraction:.6f}",
            "max_abs_eigenvalue": f"{summary.max_abs_eigenvalue:.6e}",
        }))
        return {"csv": csv_path, "text": text_path}

    def write_table_summary(self, summaries: Sequence[TableSummary], wins: Mapping[str, int],
                            excel: bool = True) -> Dict[str, str]:
        """summary.csv and summary.txt, plus summary.xlsx with a second sheet of win counts."""
        rows = [{"dataset": s.dataset, "best_models": "+".join(s.best_models), "best_accuracy": s.best_accuracy,
                 "margin": s.margin} for s in summaries]
        table = pd.DataFrame(rows, columns=["dataset", "best_models", "best_accuracy", "margin"])
        win_table = pd.DataFrame([{"model": m, "wins": w} for m, w in wins.items()], columns=["model", "wins"])
        paths = {"csv": self._path("summary.csv")}
        table.to_csv(paths["csv"], index=False)
        paths["text"] = self._write_text("summary.txt", _structured_text(
            "summary", {**{f"best.{r['dataset']}": f"{r['best_models']} {r['best_accuracy']} (+{r['margin']})"
                           for r in rows},
                        **{f"wins.{m}": w for m, w in wins.items()}}))
        if excel:
            paths["xlsx"] = self._path("summary.xlsx")
            with pd.ExcelWriter(paths["xlsx"], engine="openpyxl") as writer:
                table.to_excel(writer, sheet_name="best", index=False)
                win_table.to_excel(writer, sheet_name="wins", index=False)
        logger.info(f"Created summary report with {len(rows)} datasets in {self.out_dir}")
        return paths
