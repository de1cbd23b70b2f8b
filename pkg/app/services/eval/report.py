# app/services/eval/report.py
"""
Escritura y lectura de informes de barrido

CSV: columnas n_ds,policy,ter,params,speedup; floats con 6 decimales y punto
decimal. La fila de referencia va primero con policy "reference".
Markdown: una fila por profundidad, como las tablas de TER/Params/Speed-up.
"""
import csv
import io
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from app.core.exceptions import ArtifactFormatError, ConfigurationError
from app.schemas.sweep import REFERENCE_POLICY, EpochSweepTable, SweepReport, SweepRow

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("n_ds", "policy", "ter", "params", "speedup")
MISSING = "n/a"


def _csv_row(row: SweepRow) -> List[str]:
    return [str(row.n_ds), row.policy, f"{row.ter:.6f}", str(row.params), f"{row.speedup:.6f}"]


def render_csv(report: SweepReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    if report.reference is not None:
        writer.writerow(_csv_row(report.reference))
    for row in report.rows:
        writer.writerow(_csv_row(row))
    return buffer.getvalue()


def _millions(params: int) -> str:
    return f"{params / 1e6:.2f}"


def _percent(ter: Optional[float]) -> str:
    return MISSING if ter is None else f"{100.0 * ter:.2f}"


def render_markdown(report: SweepReport) -> str:
    """Tabla markdown de un barrido: n_DS, TER (%), Params (M), Speed-up"""
    policy = report.rows[0].policy if report.rows else REFERENCE_POLICY
    lines = [
        f"Política de compuertas: `{policy}`",
        "",
        "| n_DS | TER (%) | Params (M) | Speed-up |",
        "|---|---|---|---|",
    ]
    if report.reference is not None:
        ref = report.reference
        lines.append(f"| ref ({ref.n_ds}) | {_percent(ref.ter)} | {_millions(ref.params)} | {ref.speedup:.2f}x |")
    for row in report.rows:
        lines.append(f"| {row.n_ds} | {_percent(row.ter)} | {_millions(row.params)} | {row.speedup:.2f}x |")
    return "\n".join(lines) + "\n"


def _write_text(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
    except OSError as e:
        raise OSError(e.errno, f"No se pudo escribir el informe ({e.strerror})", str(path)) from e
    return path


def emit_report(report: SweepReport, format: str, path: Union[str, Path]) -> Path:  # noqa: A002
    """
    Escribe el informe de un barrido

    Args:
        report: Barrido a escribir
        format: csv, md o markdown
        path: Fichero de destino

    Returns:
        Ruta escrita
    """
    if format == "csv":
        text = render_csv(report)
    elif format in ("md", "markdown"):
        text = render_markdown(report)
    else:
        raise ConfigurationError(f"Formato '{format}' desconocido; válidos: csv, md")
    written = _write_text(text, path)
    logger.info("Informe %s escrito en %s", format, written)
    return written


def parse_sweep_csv(path: Union[str, Path]) -> SweepReport:
    """Lee un CSV escrito por emit_report"""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ArtifactFormatError(f"{path}: cabecera inválida {header}")
        reference, rows = None, []
        for number, record in enumerate(reader, start=2):
            if not record:
                continue
            try:
                n_ds, policy, ter, params, factor = record
                row = SweepRow(n_ds=int(n_ds), policy=policy, ter=float(ter), params=int(params), speedup=float(factor))
            except ValueError as e:
                raise ArtifactFormatError(f"{path}:{number}: fila inválida {record} ({e})") from e
            if row.policy == REFERENCE_POLICY:
                reference = row
            else:
                rows.append(row)
    try:
        return SweepReport(rows=rows, reference=reference)
    except ValueError as e:
        raise ArtifactFormatError(f"{path}: {e}") from e


def render_epoch_table(table: EpochSweepTable) -> str:
    """TER (%) por profundidad (filas) y época (columnas); huecos como n/a"""
    header = "| n_DS | " + " | ".join(f"época {epoch}" for epoch in table.epochs) + " |"
    lines = [
        f"Política de compuertas: `{table.policy}`",
        "",
        header,
        "|---|" + "---|" * len(table.epochs),
    ]
    for depth in table.depths:
        cells = [_percent(table.values.get((depth, epoch))) for epoch in table.epochs]
        lines.append(f"| {depth} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_comparison(columns: Sequence[Tuple[str, SweepReport]]) -> str:
    """
    Tabla comparativa, una columna por ejecución en el orden dado

    Las filas son las profundidades (de mayor a menor); el mejor TER de cada
    fila va en negrita (todos los empatados).

    Args:
        columns: Pares (nombre de la ejecución, barrido)

    Returns:
        Markdown de la tabla
    """
    if not columns:
        raise ConfigurationError("render_comparison necesita al menos una ejecución")
    depths = sorted({row.n_ds for _, report in columns for row in report.rows}, reverse=True)
    lookup = [{row.n_ds: row for row in report.rows} for _, report in columns]
    lines = [
        "| n_DS | Params (M) | " + " | ".join(name for name, _ in columns) + " |",
        "|---|---|" + "---|" * len(columns),
    ]
    for depth in depths:
        rows = [by_depth.get(depth) for by_depth in lookup]
        present = [row.ter for row in rows if row is not None]
        best = min(present) if present else None
        params = next(row.params for row in rows if row is not None)
        cells = []
        for row in rows:
            if row is None:
                cells.append(MISSING)
            elif row.ter == best:
                cells.append(f"**{_percent(row.ter)}**")
            else:
                cells.append(_percent(row.ter))
        lines.append(f"| {depth} | {_millions(params)} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_markdown(text: str, path: Union[str, Path]) -> Path:
    written = _write_text(text, path)
    logger.info("Tabla escrita en %s", written)
    return written
