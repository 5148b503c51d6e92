"""
Output emission

Command results are plain dicts. They are rounded to the configured number of
significant digits and written as JSON (sorted keys, so equal inputs and seed
give identical bytes), CSV or a text table. Longer runs can also leave a text
summary under outputs/reports.
"""

import io
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .settings import get_config, setting

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "table")


def round_sig(x: float, precision: Optional[int] = None) -> float:
    precision = precision or setting('run', 'precision')
    if not np.isfinite(x) or x == 0:
        return float(x)
    return float(f"{x:.{precision}g}")


def rounded(obj: Any, precision: Optional[int] = None) -> Any:
    """Recursively round floats; infinities become the strings "inf" / "-inf" so JSON stays valid"""
    precision = precision or setting('run', 'precision')
    if isinstance(obj, dict):
        return {str(k): rounded(v, precision) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v, precision) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist(), precision)
    if isinstance(obj, pd.DataFrame):
        return {'labels': list(obj.index), 'values': rounded(obj.values, precision)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return None
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return round_sig(x, precision)
    return obj


def header(command: str, version: str) -> Dict:
    """Run header: command, seed and the tolerances in force"""
    cfg = get_config()
    return {
        'command': command,
        'version': version,
        'seed': cfg['run']['seed'],
        'tolerances': dict(cfg['tolerances']),
        'dc_gap': cfg['dc']['gap'],
        'lp_method': cfg['lp']['method'],
    }


def _frame(payload: Dict) -> pd.DataFrame:
    """The tabular part of a result: an explicit 'table', a bound matrix, or the flattened record"""
    result = payload.get('result', payload)
    if isinstance(result, dict) and 'table' in result:
        return pd.DataFrame(result['table'])
    if isinstance(result, dict) and 'bounds' in result and 'labels' in result:
        labels = result['labels']
        return pd.DataFrame(result['bounds'], index=labels, columns=labels)
    flat = pd.json_normalize(result if isinstance(result, dict) else {'value': result}, sep='.')
    return flat.T.rename(columns={0: 'value'})


def render(payload: Dict, fmt: Optional[str] = None, precision: Optional[int] = None) -> str:
    fmt = fmt or setting('run', 'format')
    data = rounded(payload, precision)
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    frame = _frame(data)
    if fmt == "csv":
        buf = io.StringIO()
        frame.to_csv(buf)
        return buf.getvalue()
    if fmt == "table":
        return frame.to_string() + "\n"
    raise ValueError(f"Unknown output format: {fmt}")


def emit(payload: Dict, fmt: Optional[str] = None, output: Optional[str] = None,
         precision: Optional[int] = None) -> str:
    """Render and write to ``output`` (a path) or return the text for stdout"""
    text = render(payload, fmt, precision)
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            f.write(text)
        logger.info(f"✓ Output written: {path}")
    return text


Section = Tuple[str, List[Tuple[str, bool, str]]]


def summary_report(title: str, meta: Dict, sections: Sequence[Section]) -> str:
    """Text report: banner, run metadata, then one block of ✓ / ✗ lines per section"""
    lines = ["=" * 70, title.upper(), "=" * 70, ""]
    for key, value in meta.items():
        lines.append(f"{key}: {value}")
    total = sum(len(checks) for _, checks in sections)
    passed = sum(ok for _, checks in sections for _, ok, _ in checks)
    lines.append(f"Checks passed: {passed}/{total}")
    lines.append("")
    for name, checks in sections:
        lines += ["-" * 70, name.upper(), "-" * 70]
        for label, ok, detail in checks:
            lines.append(f"  {'✓' if ok else '✗'} {label}" + (f"  ({detail})" if detail else ""))
        lines.append("")
    return "\n".join(lines)


def save_results(payload: Dict, name: str, directory: Optional[str] = None) -> Path:
    """Keep the rounded JSON payload of a run under outputs/logs"""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    out_dir = Path(directory or setting('outputs', 'logs_dir'))
    out_dir.mkdir(parents=True, exist_ok=True)
    results_file = out_dir / f"{name}_results_{timestamp}.json"
    with open(results_file, 'w') as f:
        json.dump(rounded(payload), f, indent=2, sort_keys=True, ensure_ascii=False)
    logger.info(f"✓ Results saved: {results_file}")
    return results_file


def save_report(text: str, name: str, directory: Optional[str] = None) -> Path:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    out_dir = Path(directory or setting('outputs', 'reports_dir'))
    out_dir.mkdir(parents=True, exist_ok=True)
    report_file = out_dir / f"{name}_{timestamp}.txt"
    with open(report_file, 'w') as f:
        f.write(text)
    logger.info(f"✓ Report saved: {report_file}")
    return report_file
