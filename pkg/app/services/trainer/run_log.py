# app/services/trainer/run_log.py
import csv
from pathlib import Path
from typing import List, Union

from app.schemas.training import EpochLog

LOG_COLUMNS = ("step", "epoch", "lr", "l_kld", "l_ctc", "total", "test_ter_full_depth")


def write_epoch_log(history: List[EpochLog], path: Union[str, Path]) -> Path:
    """
    CSV de entrenamiento, una fila por época

    Los floats se escriben con repr para que la lectura recupere el valor exacto.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in history:
            writer.writerow([row.step, row.epoch] + [repr(float(getattr(row, c))) for c in LOG_COLUMNS[2:]])
    return path


def read_epoch_log(path: Union[str, Path]) -> List[EpochLog]:
    with open(path, newline="", encoding="utf-8") as stream:
        return [EpochLog(**row) for row in csv.DictReader(stream)]
