import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from pydantic import ValidationError

from app.core.config import ExperimentConfig, settings
from app.core.exceptions import ConfigurationError, DLDError
from app.services.data.dataset_io import load_dataset, save_dataset
from app.services.data.synth import generate_dataset, summarize_dataset
from app.services.eval.eval_service import depth_sweep, epoch_sweep
from app.services.eval.report import emit_report, parse_sweep_csv, render_comparison, render_epoch_table, write_markdown
from app.services.trainer.checkpoint import load_checkpoint
from app.services.trainer.trainer_service import TrainerService
from app.utils.validation_utils import parse_int_list

logger = logging.getLogger(__name__)

# Campos con nombre de flag propio
FLAG_NAMES = {"gate_policy": "--policy", "report_format": "--format"}
NOT_FLAGS = {"config_file", "output_dir"}


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("experimento")
    group.add_argument("--config", dest="config_file", default=argparse.SUPPRESS, help="Fichero key=value")
    for name, field in ExperimentConfig.model_fields.items():
        if name in NOT_FLAGS:
            continue
        flag = FLAG_NAMES.get(name, "--" + name.replace("_", "-"))
        group.add_argument(flag, dest=name, default=argparse.SUPPRESS, help=field.description)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dld",
        description="Descarte de capas con destilación para codificadores CTC",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="Genera el corpus sintético (DLDS)")
    gen.add_argument("--out", required=True, help="Fichero de dataset a escribir")

    for command, text in (
        ("train-ref", "Entrena el modelo estático de referencia"),
        ("train-dld", "Entrena el estudiante dinámico con destilación"),
        ("train-rd", "Entrena la línea base de descarte aleatorio"),
    ):
        train = commands.add_parser(command, help=text)
        train.add_argument("--data", required=True, help="Fichero DLDS")
        train.add_argument("--out", required=True, help="Directorio de la ejecución")
        if command != "train-ref":
            train.add_argument("--ref-ckpt", default=None, help="Checkpoint de la referencia")

    sweep = commands.add_parser("sweep", help="Barrido de profundidades sobre un checkpoint")
    sweep.add_argument("--ckpt", required=True)
    sweep.add_argument("--data", required=True)
    sweep.add_argument("--ref-ckpt", default=None, help="Modelo de la fila de referencia")
    sweep.add_argument("--out", required=True)

    by_epoch = commands.add_parser("epoch-sweep", help="TER por profundidad y época de una ejecución")
    by_epoch.add_argument("--run-dir", required=True)
    by_epoch.add_argument("--data", required=True)
    by_epoch.add_argument("--at-epochs", default=None, help="Épocas separadas por comas")
    by_epoch.add_argument("--out", required=True)

    report = commands.add_parser("report", help="Tabla comparativa de varias ejecuciones")
    report.add_argument("--runs", nargs="+", required=True, help="Directorios con sweep.csv")
    report.add_argument("--out", required=True)

    for sub in commands.choices.values():
        _add_experiment_flags(sub)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        name: value for name, value in vars(args).items()
        if name in ExperimentConfig.model_fields
    }
    return ExperimentConfig(**overrides)


# ========== Comandos ==========

def cmd_gen_data(args: argparse.Namespace, config: ExperimentConfig) -> int:
    dataset = generate_dataset(config.dataset_config())
    path = save_dataset(dataset, args.out)
    summary = summarize_dataset(dataset)
    print(f"Dataset escrito en {path}")
    print(f"  train={summary['num_train']} test={summary['num_test']} "
          f"T medio={summary['mean_frames']:.2f} vocabulario={summary['vocab_size']}")
    return 0


def _train(args: argparse.Namespace, config: ExperimentConfig, mode: str) -> int:
    reference_path = getattr(args, "ref_ckpt", None)
    if mode == "dld-student" and not reference_path:
        raise ConfigurationError("train-dld requiere --ref-ckpt")
    dataset = load_dataset(args.data)
    encoder_config = config.encoder_config(dataset.config)
    train_config = config.train_config(mode)
    reference = load_checkpoint(reference_path) if reference_path else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / settings.CONFIG_FILENAME).write_text(config.render_config(), encoding="utf-8")

    service = TrainerService(dataset, encoder_config, train_config, output_dir=out)
    if mode == "reference":
        result = service.train_reference()
    elif mode == "dld-student":
        result = service.train_student_dld(reference)
    else:
        result = service.train_student_rd(reference)

    print(f"Checkpoint final: {out / settings.FINAL_CHECKPOINT}")
    print(f"Log de entrenamiento: {out / settings.LOG_FILENAME}")
    if result.history:
        print(f"TER de test a profundidad completa: {result.history[-1].test_ter_full_depth:.4f}")
    return 0


def cmd_train_ref(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return _train(args, config, "reference")


def cmd_train_dld(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return _train(args, config, "dld-student")


def cmd_train_rd(args: argparse.Namespace, config: ExperimentConfig) -> int:
    return _train(args, config, "rd-student")


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    checkpoint = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    reference = load_checkpoint(args.ref_ckpt) if args.ref_ckpt else None
    depths = config.sweep_depths(checkpoint.encoder_config.num_blocks)
    report = depth_sweep(checkpoint, dataset.test, depths, config.gate_policy,
                         reference=reference, max_workers=config.max_workers)
    path = emit_report(report, config.report_format, args.out)
    print(f"Barrido escrito en {path} ({len(report.rows)} filas + referencia)")
    return 0


def cmd_epoch_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    run_dir = Path(args.run_dir)
    dataset = load_dataset(args.data)
    final = run_dir / settings.FINAL_CHECKPOINT
    num_blocks = load_checkpoint(final).encoder_config.num_blocks if final.exists() else config.num_blocks
    epochs = parse_int_list(args.at_epochs) if args.at_epochs else None
    table = epoch_sweep(run_dir, dataset.test, config.sweep_depths(num_blocks), config.gate_policy, epochs)
    path = write_markdown(render_epoch_table(table), args.out)
    print(f"Tabla por épocas escrita en {path}")
    return 0


def cmd_report(args: argparse.Namespace, config: ExperimentConfig) -> int:
    columns = []
    for run in args.runs:
        run_path = Path(run)
        csv_path = run_path if run_path.is_file() else run_path / settings.SWEEP_FILENAME
        name = run_path.name if run_path.is_dir() else run_path.stem
        columns.append((name, parse_sweep_csv(csv_path)))
    path = write_markdown(render_comparison(columns), args.out)
    print(f"Comparativa escrita en {path}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, ExperimentConfig], int]] = {
    "gen-data": cmd_gen_data,
    "train-ref": cmd_train_ref,
    "train-dld": cmd_train_dld,
    "train-rd": cmd_train_rd,
    "sweep": cmd_sweep,
    "epoch-sweep": cmd_epoch_sweep,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Punto de entrada de la CLI

    Códigos de salida: 0 éxito, 2 configuración/uso, 3 E/S o formato, 4 fallo numérico.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)

    try:
        config = resolve_config(args)
        print(f"# {settings.APP_NAME} {args.command}: configuración resuelta")
        print(config.render_config(), end="")
        return COMMANDS[args.command](args, config)
    except DLDError as e:
        print(f"Error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"Configuración inválida:\n{e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"Error de E/S: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
