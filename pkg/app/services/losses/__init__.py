# app/services/losses/__init__.py
from app.services.losses.losses import BLANK, ctc_loss, greedy_ctc_decode, kld_loss, total_loss
