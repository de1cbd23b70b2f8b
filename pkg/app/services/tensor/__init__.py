# app/services/tensor/__init__.py
from app.services.tensor.tensor import Tape, Tensor, backward, current_tape, no_grad
