"""Writers for report payloads, run metadata and tabular artifacts."""
import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from app.schemas.report import ExperimentReport, RunMetadata

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def jsonable(value):
    """Plain JSON types from numpy scalars, arrays, complex numbers and frames."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, pd.DataFrame):
        return jsonable(value.to_dict(orient="records"))
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [jsonable(value.real), jsonable(value.imag)]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return str(value)
        return value
    return value


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug("Wrote %d rows to %s", len(frame), path)
    return path


def write_report(report: ExperimentReport, metadata: RunMetadata, output_dir: Path, fmt: str = "json") -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "metadata.json").write_text(dumps(metadata.model_dump(mode="json")))
    if fmt == "json":
        path = output_dir / "report.json"
        path.write_text(dumps(report.model_dump(mode="json")))
    elif fmt == "csv":
        rows = [
            {
                "id": check.id,
                "op": check.op,
                "residual": check.residual,
                "budget": check.budget,
                "tolerance": check.tolerance,
                "passed": check.passed,
                "error": check.error or "",
                "inputs_digest": check.inputs_digest,
            }
            for check in report.checks
        ]
        columns = ["id", "op", "residual", "budget", "tolerance", "passed", "error", "inputs_digest"]
        path = write_frame(pd.DataFrame(rows, columns=columns), output_dir / "report.csv")
    else:
        raise ValueError(f"Unknown report format {fmt!r}")
    logger.info("Report for %s written to %s", report.scenario, path)
    return path
