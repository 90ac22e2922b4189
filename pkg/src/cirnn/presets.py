"""Named training configurations for the benchmark engine subsets.

One row per tuned model: the cell type, whether sensors get per-regime
(contextual) normalization, whether the op-settings are also appended to
the primary inputs ("CxF"), and the tuned hyperparameters (hidden units,
sequence length, batch size, learning rate, optimizer). This table is
the single source of truth the CLI and tests read.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Preset:
    name: str
    dataset: str
    model: str              # "gru" | "cirnn"
    contextual_norm: bool   # per-regime sensor normalization
    context_features: bool  # context fed to the model (as z, or appended for gru)
    hidden_units: int
    sequence_length: int
    batch_size: int
    learning_rate: float
    optimizer: str


def _p(name, dataset, model, cxn, cxf, hidden, seq, batch, lr, opt):
    return Preset(name, dataset, model, cxn, cxf, hidden, seq, batch, lr, opt)


PRESETS = {p.name: p for p in [
    _p("CiRNN_D1",       "FD001", "cirnn", False, True,  15, 20, 64,  1e-2, "adam"),
    _p("GRU_D1_CxF",     "FD001", "gru",   False, True,  25, 20, 128, 5e-3, "adam"),
    _p("GRU_D1",         "FD001", "gru",   False, False, 10, 15, 64,  9e-3, "adam"),
    _p("CiRNN_D2",       "FD002", "cirnn", True,  True,  20, 15, 64,  5e-3, "rmsprop"),
    _p("CiRNN_D2_CxF",   "FD002", "cirnn", False, True,  15, 20, 128, 5e-3, "rmsprop"),
    _p("GRU_D2",         "FD002", "gru",   False, False, 25, 15, 128, 1e-2, "adam"),
    _p("GRU_D2_CxF",     "FD002", "gru",   False, True,  30, 15, 128, 5e-3, "adam"),
    _p("GRU_D2_CxN",     "FD002", "gru",   True,  False, 20, 10, 64,  8e-3, "rmsprop"),
    _p("GRU_D2_CxN_CxF", "FD002", "gru",   True,  True,  15, 10, 64,  9e-3, "rmsprop"),
    _p("CiRNN_D3",       "FD003", "cirnn", False, True,  30, 10, 64,  8e-3, "rmsprop"),
    _p("GRU_D3_CxF",     "FD003", "gru",   False, True,  15, 10, 64,  2e-3, "rmsprop"),
    _p("GRU_D3",         "FD003", "gru",   False, False, 20, 10, 64,  5e-3, "rmsprop"),
    _p("CiRNN_D4",       "FD004", "cirnn", True,  True,  15, 10, 128, 8e-3, "rmsprop"),
    _p("CiRNN_D4_CxF",   "FD004", "cirnn", False, True,  25, 20, 128, 9e-3, "adam"),
    _p("GRU_D4",         "FD004", "gru",   False, False, 25, 20, 128, 8e-3, "adam"),
    _p("GRU_D4_CxF",     "FD004", "gru",   False, True,  25, 15, 256, 5e-3, "adam"),
    _p("GRU_D4_CxN",     "FD004", "gru",   True,  False, 20, 15, 256, 1e-2, "rmsprop"),
    _p("GRU_D4_CxN_CxF", "FD004", "gru",   True,  True,  15, 15, 256, 9e-3, "adam"),
]}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        known = ", ".join(PRESETS)
        raise KeyError(f"unknown preset {name!r}; known presets: {known}")
    return PRESETS[name]
