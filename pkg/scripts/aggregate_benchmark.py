#!/usr/bin/env python
"""
Agregación del benchmark multi-semilla.

Lee <root>/seed_<s>/{ref,dld,rd_sc,rd_ld}/sweep.csv y train_log.csv, promedia el
TER por profundidad y comprueba:
1. TER medio de DLD <= TER medio de RD desde cero en cada profundidad
2. |TER DLD a profundidad completa − TER de la referencia| <= 0.03
3. En la mayoría de semillas, DLD alcanza el TER final de RD desde cero a
   profundidad completa antes de la mitad de las épocas de RD
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

# Agregar el directorio raíz al path para importación relativa
root_dir = Path(__file__).resolve().parent.parent
sys.path.append(str(root_dir))

import numpy as np

from app.core.config import settings
from app.services.eval.eval_service import overtaking_epoch
from app.services.eval.report import parse_sweep_csv
from app.services.trainer.run_log import read_epoch_log

RUNS = ("ref", "dld", "rd_sc", "rd_ld")
FULL_DEPTH_TOLERANCE = 0.03


def load_runs(root: Path, seeds: List[int]) -> Dict[str, List]:
    return {
        run: [parse_sweep_csv(root / f"seed_{seed}" / run / settings.SWEEP_FILENAME) for seed in seeds]
        for run in RUNS
    }


def mean_by_depth(reports) -> Dict[int, float]:
    depths = sorted({row.n_ds for report in reports for row in report.rows}, reverse=True)
    return {
        depth: float(np.mean([row.ter for report in reports for row in report.rows if row.n_ds == depth]))
        for depth in depths
    }


def seed_overtaking(root: Path, seed: int) -> Optional[int]:
    """Época en la que DLD alcanza el TER final de RD desde cero, dentro de la mitad de su presupuesto"""
    seed_dir = root / f"seed_{seed}"
    dld = read_epoch_log(seed_dir / "dld" / settings.LOG_FILENAME)
    rd = read_epoch_log(seed_dir / "rd_sc" / settings.LOG_FILENAME)
    if not dld or not rd:
        return None
    return overtaking_epoch(dld, rd[-1].test_ter_full_depth, rd[-1].epoch // 2)


def aggregate(root: Path, seeds: List[int]) -> bool:
    """Imprime la tabla agregada y devuelve si se cumplen todas las comprobaciones"""
    print("=" * 60)
    print(f"Agregando benchmark en {root} (semillas {seeds})")
    print("=" * 60)

    runs = load_runs(root, seeds)
    dld = mean_by_depth(runs["dld"])
    rd = mean_by_depth(runs["rd_sc"])
    rd_ld = mean_by_depth(runs["rd_ld"])
    reference_full = float(np.mean([report.reference.ter for report in runs["ref"]]))

    print(f"\n{'n_DS':>5} {'RD_sc':>10} {'RD_LD':>10} {'DLD':>10}")
    ok = True
    for depth, dld_ter in dld.items():
        rd_ter = rd[depth]
        mark = "✅" if dld_ter <= rd_ter else "❌"
        ok = ok and dld_ter <= rd_ter
        print(f"{depth:>5} {rd_ter:>10.4f} {rd_ld.get(depth, float('nan')):>10.4f} {dld_ter:>10.4f} {mark}")

    dld_full = dld[max(dld)]
    gap = abs(dld_full - reference_full)
    print(f"\nReferencia a profundidad completa: {reference_full:.4f}")
    print(f"DLD a profundidad completa:        {dld_full:.4f} (diferencia {gap:.4f})")
    if gap > FULL_DEPTH_TOLERANCE:
        print(f"❌ La diferencia supera {FULL_DEPTH_TOLERANCE}")
        ok = False

    print("\nÉpoca en la que DLD alcanza a RD desde cero:")
    overtaken = 0
    for seed in seeds:
        epoch = seed_overtaking(root, seed)
        overtaken += epoch is not None
        print(f"  semilla {seed}: {'✅ época ' + str(epoch) if epoch is not None else '❌ no lo alcanza'}")
    if 2 * overtaken <= len(seeds):
        print("❌ DLD no alcanza a RD antes de la mitad de sus épocas en la mayoría de semillas")
        ok = False

    print("\n" + "=" * 60)
    print("🚀 Comprobaciones superadas" if ok else "❌ Alguna comprobación falló")
    print("=" * 60)
    return ok


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Agrega los barridos del benchmark multi-semilla")
    parser.add_argument("--root", default="bench")
    parser.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3])
    args = parser.parse_args()
    try:
        success = aggregate(Path(args.root), args.seeds)
    except OSError as e:
        print(f"\n❌ Error leyendo los resultados: {e}")
        sys.exit(3)
    sys.exit(0 if success else 1)
