from .cells import gru_step, lstm_step, rnn_step, sigmoid
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import (TemporalModel, TemporalModelConfig, attention, backward, backward_batch,
                    batch_loss, dropout_masks, forward, forward_batch, loss, softmax)
from .optim import adam_init, adam_step
from .train import EpochLog, NumericalError, TrainConfig, accuracy, as_arrays, train, write_log

__all__ = [
    "CheckpointError", "EpochLog", "NumericalError", "TemporalModel", "TemporalModelConfig",
    "TrainConfig", "accuracy", "adam_init", "adam_step", "as_arrays", "attention", "backward",
    "backward_batch", "batch_loss", "dropout_masks", "forward", "forward_batch", "gru_step",
    "load_checkpoint", "loss", "lstm_step", "rnn_step", "save_checkpoint", "sigmoid", "softmax",
    "train", "write_log",
]
