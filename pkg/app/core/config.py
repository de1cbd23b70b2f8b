from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type

from pydantic import Field
from pydantic.fields import FieldInfo
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from app.core.exceptions import ConfigurationError
from app.schemas.data import DatasetConfig
from app.schemas.encoder import EncoderConfig, GatePolicy
from app.schemas.training import TrainConfig, TrainMode
from app.utils.validation_utils import parse_int_list, validate_depths


class Settings(BaseSettings):
    # Aplicación
    APP_NAME: str = "DLD"

    # Entorno
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Artefactos de una ejecución
    CHECKPOINT_PREFIX: str = "ckpt_epoch_"
    FINAL_CHECKPOINT: str = "final.dldc"
    LOG_FILENAME: str = "train_log.csv"
    CONFIG_FILENAME: str = "config.txt"
    SWEEP_FILENAME: str = "sweep.csv"

    model_config = {
        "env_file": ".env",
        "case_sensitive": True,
        "extra": "ignore"
    }


# Instancia de configuración global
settings = Settings()


ReportFormat = Literal["csv", "md", "markdown"]


def parse_config_file(path: Path) -> Dict[str, str]:
    """
    Lee un fichero plano key=value

    Las líneas vacías y las que empiezan por # se ignoran.

    Args:
        path: Ruta del fichero

    Returns:
        Valores crudos por clave
    """
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as stream:
        for number, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"{path}:{number}: se esperaba key=value, recibido '{line}'")
            values[key.strip()] = value.strip()
    return values


class KeyValueFileSource(PydanticBaseSettingsSource):
    """Fuente de configuración a partir del fichero de --config"""

    def __init__(self, settings_cls: Type[BaseSettings], path: Optional[str]):
        super().__init__(settings_cls)
        self.path = Path(path) if path else None
        self.values = parse_config_file(self.path) if self.path else {}
        unknown = sorted(set(self.values) - set(settings_cls.model_fields))
        if unknown:
            raise ConfigurationError(f"{self.path}: claves desconocidas {unknown}")

    def get_field_value(self, field: FieldInfo, field_name: str) -> Tuple[Any, str, bool]:
        return self.values.get(field_name), field_name, False

    def __call__(self) -> Dict[str, Any]:
        return {name: value for name, value in self.values.items() if value != ""}


class ExperimentConfig(BaseSettings):
    """
    Configuración plana de un experimento

    Precedencia: flags (kwargs) > variables DLD_* > fichero --config > valores por defecto.
    """

    # Corpus sintético
    vocab_size: int = Field(default=8, ge=2, description="Tokens reales, sin contar el blank")
    feature_dim: int = Field(default=16, ge=1)
    min_frames_per_token: int = Field(default=2, ge=2)
    max_frames_per_token: int = Field(default=4, ge=2)
    min_tokens: int = Field(default=3, ge=1)
    max_tokens: int = Field(default=8, ge=1)
    noise_sigma: float = Field(default=0.3, ge=0)
    num_train: int = Field(default=2000, ge=0)
    num_test: int = Field(default=400, ge=0)

    # Codificador
    num_blocks: int = Field(default=6, ge=1)
    model_dim: int = Field(default=32, ge=1)
    ffn_dim: int = Field(default=64, ge=1)
    max_frames: int = Field(default=64, ge=1)
    layer_norm_eps: float = Field(default=1e-5, gt=0)

    # Entrenamiento
    epochs: int = Field(default=40, ge=0)
    batch_size: int = Field(default=16, ge=1)
    peak_lr: float = Field(default=2e-3, gt=0)
    warmup_steps: int = Field(default=200, ge=1)
    decay_rate: Optional[float] = Field(default=None, gt=0, le=1)
    drop_prob: float = Field(default=0.5, ge=0, le=1)
    weight_decay: float = Field(default=5e-4, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.98, ge=0, lt=1)
    adam_eps: float = Field(default=1e-9, gt=0)
    kld_weight: float = Field(default=1.0, ge=0)
    max_grad_norm: Optional[float] = Field(default=None, gt=0)
    init_from_reference: bool = True
    ckpt_every: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=7, ge=0)

    # Barridos e informes
    depths: Optional[str] = Field(default=None, description="Lista separada por comas; por defecto N..1")
    gate_policy: GatePolicy = "evenly-spaced"
    report_format: ReportFormat = "csv"
    max_workers: int = Field(default=1, ge=1)

    output_dir: Optional[str] = None
    config_file: Optional[str] = None

    model_config = SettingsConfigDict(env_prefix="DLD_", case_sensitive=False, extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        config_file = init_settings.init_kwargs.get("config_file")
        return init_settings, env_settings, KeyValueFileSource(settings_cls, config_file)

    # ========== Sub-configuraciones ==========

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(**self.model_dump(include=set(DatasetConfig.model_fields)))

    def encoder_config(self, dataset: DatasetConfig) -> EncoderConfig:
        """
        Arquitectura para un corpus dado

        El vocabulario del codificador añade el blank; input_dim sale del corpus.
        """
        if self.max_frames < dataset.max_sample_frames:
            raise ConfigurationError(
                f"max_frames={self.max_frames} es menor que la muestra más larga posible "
                f"({dataset.max_sample_frames} tramas)"
            )
        return EncoderConfig(
            num_blocks=self.num_blocks,
            model_dim=self.model_dim,
            ffn_dim=self.ffn_dim,
            vocab_size=dataset.vocab_size + 1,
            input_dim=dataset.feature_dim,
            max_frames=self.max_frames,
            layer_norm_eps=self.layer_norm_eps,
        )

    def train_config(self, mode: TrainMode) -> TrainConfig:
        fields = set(TrainConfig.model_fields) - {"mode"}
        return TrainConfig(mode=mode, **self.model_dump(include=fields))

    def sweep_depths(self, num_blocks: int) -> List[int]:
        if self.depths is None:
            return list(range(num_blocks, 0, -1))
        return validate_depths(parse_int_list(self.depths), num_blocks)

    def render_config(self) -> str:
        """Configuración resuelta en formato key=value, reutilizable con --config"""
        lines = []
        for name, value in self.model_dump(exclude={"config_file"}).items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"
