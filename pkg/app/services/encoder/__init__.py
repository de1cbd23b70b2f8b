# app/services/encoder/__init__.py
from app.services.encoder.encoder import ModelParams, encoder_forward, init_model_params, sample_gates, select_gates
