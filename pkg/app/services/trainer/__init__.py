# app/services/trainer/__init__.py
# Exportar explícitamente el servicio de entrenamiento
from app.services.trainer.trainer_service import TrainerService, TrainingResult
