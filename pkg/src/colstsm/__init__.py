"""Concurrence-aware long short-term sub-memories for paired-sequence classification.

A numpy implementation of the Co-LSTSM recurrent unit, LSTM/RNN/pooled
baselines, hand-derived BPTT (exact and truncated), synthetic paired-stream
data and the observation-ratio prediction protocol.
"""

from .bptt import (GradCheckReport, backward_full, backward_truncated, finite_diff_grad,
                   grad_check, loss_and_grads)
from .cells import (FAMILIES, Model, SequencePair, colstsm_step, forward_sequence, init_params,
                    lstm_step, nll_loss, pooled_baseline, rnn_output, rnn_step, sequence_loss,
                    softmax)
from .evaluator import Metrics, PredictionCurve, evaluate, observation_curve, predict
from .numkernel import Prng, affine, prng_next, sigmoid, tanh_act
from .persist import load_checkpoint, save_checkpoint
from .synthdata import Dataset, GenConfig, generate_dataset, read_dataset, write_dataset
from .trainer import OptState, TrainConfig, TrainHistory, lr_schedule, sgd_step, train

__version__ = "0.1.0"
