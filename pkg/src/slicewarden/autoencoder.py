"""LSTM-Autoencoder: architecture, exact BPTT gradients, Adam training loop.

The encoder stacks LSTM layers and exposes the final hidden state of its last
layer as the code; the decoder mirrors the encoder and feeds the code,
repeated along the sequence axis, through its own LSTM stack into a linear
per-step output. ReLU (the hidden activation) and dropout act on the
projections between stacked LSTM layers during training; the code itself is
the raw final hidden state, so it keeps the bounded tanh geometry the
clustering stage relies on. Inference runs with dropout disabled and is
deterministic.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .lstm import DenseLayer, LstmLayer, relu


class TrainingError(RuntimeError):
    """Raised when optimization cannot continue (e.g. non-finite loss)."""


@dataclass(frozen=True)
class AutoencoderArch:
    """Layer widths; decoder must mirror the encoder."""

    input_dim: int
    encoder_units: tuple[int, ...] = (100, 50)
    decoder_units: tuple[int, ...] = (50, 100)
    lookback: int = 1
    cell_activation: str = "relu"

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.lookback < 1:
            raise ValueError("input_dim and lookback must be >= 1")
        if not self.encoder_units or any(u < 1 for u in self.encoder_units + self.decoder_units):
            raise ValueError("layer widths must be positive")
        if tuple(reversed(self.encoder_units)) != tuple(self.decoder_units):
            raise ValueError("decoder must mirror the encoder architecture")

    @property
    def code_dim(self) -> int:
        return self.encoder_units[-1]

    @property
    def widths(self) -> tuple[int, ...]:
        """The {enc..., code, ...dec} width summary, e.g. (100, 50, 50, 50, 100)."""
        return (*self.encoder_units, self.code_dim, *self.decoder_units)

    def to_json_obj(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "encoder_units": list(self.encoder_units),
            "decoder_units": list(self.decoder_units),
            "lookback": self.lookback,
            "cell_activation": self.cell_activation,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AutoencoderArch":
        return cls(
            input_dim=int(obj["input_dim"]),
            encoder_units=tuple(obj["encoder_units"]),
            decoder_units=tuple(obj["decoder_units"]),
            lookback=int(obj["lookback"]),
            cell_activation=str(obj.get("cell_activation", "tanh")),
        )


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for the reconstruction objective."""

    batch_size: int = 32
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout: float = 0.2
    max_epochs: int = 50
    patience: int = 5
    min_delta_rel: float = 0.01  # relative val-loss improvement that resets patience
    k_folds: int = 5
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.min_delta_rel < 0:
            raise ValueError("min_delta_rel must be non-negative")


class AutoencoderModel:
    """A trained (or freshly initialized) LSTM-Autoencoder."""

    def __init__(
        self,
        arch: AutoencoderArch,
        encoder: list[LstmLayer],
        decoder: list[LstmLayer],
        output: DenseLayer,
        history: Optional[dict] = None,
    ) -> None:
        self.arch = arch
        self.encoder = encoder
        self.decoder = decoder
        self.output = output
        self.history = history or {}

    @classmethod
    def initialize(cls, arch: AutoencoderArch, rng: np.random.Generator) -> "AutoencoderModel":
        encoder, in_dim = [], arch.input_dim
        for units in arch.encoder_units:
            encoder.append(LstmLayer(in_dim, units, rng, arch.cell_activation))
            in_dim = units
        decoder, in_dim = [], arch.code_dim
        for units in arch.decoder_units:
            decoder.append(LstmLayer(in_dim, units, rng, arch.cell_activation))
            in_dim = units
        output = DenseLayer(arch.decoder_units[-1], arch.input_dim, rng)
        return cls(arch, encoder, decoder, output)

    # -- parameter plumbing ------------------------------------------------

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        named = []
        for i, layer in enumerate(self.encoder):
            named.extend((f"enc{i}.{n}", a) for n, a in layer.parameters())
        for i, layer in enumerate(self.decoder):
            named.extend((f"dec{i}.{n}", a) for n, a in layer.parameters())
        named.extend((f"out.{n}", a) for n, a in self.output.parameters())
        return named

    def copy_parameters(self) -> list[np.ndarray]:
        return [arr.copy() for _, arr in self.parameters()]

    def load_parameters(self, arrays: list[np.ndarray]) -> None:
        for (_, dst), src in zip(self.parameters(), arrays):
            dst[...] = src

    # -- forward / backward -------------------------------------------------

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 3 or x.shape[1] != self.arch.lookback or x.shape[2] != self.arch.input_dim:
            raise ValueError(
                f"expected (n, {self.arch.lookback}, {self.arch.input_dim}) sequences, got {x.shape}"
            )

    def _forward(self, x: np.ndarray, dropout: float = 0.0, rng: Optional[np.random.Generator] = None):
        """Full pass; returns reconstruction and the caches backward needs."""
        self._check_input(x)
        batch, steps, _ = x.shape
        training = dropout > 0.0 and rng is not None
        caches = {"enc": [], "dec": [], "masks_enc": [], "masks_dec": []}

        def mask_like(arr: np.ndarray) -> np.ndarray:
            if not training:
                return np.ones_like(arr)
            keep = rng.random(arr.shape) >= dropout
            return keep / (1.0 - dropout)

        # Dropout regularizes every LSTM layer's output (including the code);
        # ReLU, the hidden activation, applies between stacked layers only so
        # the code keeps its natural bounded geometry.
        seq = x
        for i, layer in enumerate(self.encoder):
            hs, cache = layer.forward(seq)
            use_relu = i < len(self.encoder) - 1
            mask = mask_like(hs)
            caches["enc"].append((cache, hs, mask, use_relu))
            seq = (relu(hs) if use_relu else hs) * mask

        code = seq[:, -1, :]
        caches["code_full"] = seq
        dec_seq = np.repeat(code[:, None, :], steps, axis=1)

        for i, layer in enumerate(self.decoder):
            hs, cache = layer.forward(dec_seq)
            use_relu = i < len(self.decoder) - 1
            mask = mask_like(hs) if use_relu else None  # dense input stays undropped
            caches["dec"].append((cache, hs, mask, use_relu))
            dec_seq = relu(hs) if use_relu else hs
            if mask is not None:
                dec_seq = dec_seq * mask

        recon, out_cache = self.output.forward(dec_seq)
        caches["out"] = out_cache
        return recon, caches

    def loss(self, x: np.ndarray) -> float:
        recon, _ = self._forward(x)
        return float(np.mean((recon - x) ** 2))

    def loss_gradients(
        self,
        x: np.ndarray,
        dropout: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[float, list[tuple[str, np.ndarray]]]:
        """Mean-squared reconstruction loss and exact gradients via BPTT."""
        recon, caches = self._forward(x, dropout, rng)
        diff = recon - x
        loss = float(np.mean(diff**2))
        d_recon = 2.0 * diff / diff.size

        grads: dict[str, np.ndarray] = {}
        out_grads, d_seq = self.output.backward(caches["out"], d_recon)
        for n, g in out_grads.items():
            grads[f"out.{n}"] = g

        for i in range(len(self.decoder) - 1, -1, -1):
            cache, hs, mask, use_relu = caches["dec"][i]
            d_hs = d_seq
            if mask is not None:
                d_hs = d_hs * mask
            if use_relu:
                d_hs = d_hs * (hs > 0)
            layer_grads, d_seq = self.decoder[i].backward(cache, d_hs)
            for n, g in layer_grads.items():
                grads[f"dec{i}.{n}"] = g

        # Decoder input was the code repeated over every step.
        d_code = d_seq.sum(axis=1)
        d_seq = np.zeros_like(caches["code_full"])
        d_seq[:, -1, :] = d_code

        for i in range(len(self.encoder) - 1, -1, -1):
            cache, hs, mask, use_relu = caches["enc"][i]
            d_hs = d_seq * mask
            if use_relu:
                d_hs = d_hs * (hs > 0)
            layer_grads, d_seq = self.encoder[i].backward(cache, d_hs)
            for n, g in layer_grads.items():
                grads[f"enc{i}.{n}"] = g

        ordered = [(name, grads[name]) for name, _ in self.parameters()]
        return loss, ordered

    # -- inference ------------------------------------------------------------

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Latent code (n, code_dim); deterministic (dropout disabled)."""
        self._check_input(x)
        seq = x
        for i, layer in enumerate(self.encoder):
            hs, _ = layer.forward(seq)
            seq = relu(hs) if i < len(self.encoder) - 1 else hs
        return seq[:, -1, :]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        recon, _ = self._forward(x)
        return recon

    def reconstruction_errors(self, x: np.ndarray) -> np.ndarray:
        """Per-sequence mean squared reconstruction error."""
        recon, _ = self._forward(x)
        return np.mean((recon - x) ** 2, axis=(1, 2))

    # -- serialization ----------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "arch": self.arch.to_json_obj(),
            "params": {name: arr.tolist() for name, arr in self.parameters()},
            "history": self.history,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "AutoencoderModel":
        arch = AutoencoderArch.from_json_obj(obj["arch"])
        model = cls.initialize(arch, np.random.default_rng(0))
        for name, arr in model.parameters():
            arr[...] = np.asarray(obj["params"][name], dtype=float)
        model.history = obj.get("history", {})
        return model


class _Adam:
    def __init__(self, params: list[tuple[str, np.ndarray]], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for _, a in params]
        self.v = [np.zeros_like(a) for _, a in params]
        self.t = 0

    def step(self, params: list[tuple[str, np.ndarray]], grads: list[tuple[str, np.ndarray]]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for idx, ((_, arr), (_, grad)) in enumerate(zip(params, grads)):
            self.m[idx] = cfg.beta1 * self.m[idx] + (1.0 - cfg.beta1) * grad
            self.v[idx] = cfg.beta2 * self.v[idx] + (1.0 - cfg.beta2) * grad**2
            m_hat = self.m[idx] / bc1
            v_hat = self.v[idx] / bc2
            arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def train_autoencoder(
    sequences: np.ndarray,
    arch: Optional[AutoencoderArch] = None,
    config: TrainConfig = TrainConfig(),
) -> AutoencoderModel:
    """Fit the autoencoder on all rows; 20% held out for early stopping.

    Returns the parameters with the best validation loss. Raises
    TrainingError if the loss goes non-finite.
    """
    if sequences.ndim != 3 or sequences.shape[0] < 1:
        raise ValueError("sequences must be a non-empty (n, lookback, features) array")
    n, lookback, dim = sequences.shape
    if arch is None:
        arch = AutoencoderArch(input_dim=dim, lookback=lookback)
    rng = np.random.default_rng(config.seed)
    model = AutoencoderModel.initialize(arch, rng)

    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    if n_val >= n:  # tiny datasets validate on the training rows
        train_idx, val_idx = perm, perm
    else:
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, x_val = sequences[train_idx], sequences[val_idx]

    optimizer = _Adam(model.parameters(), config)
    best_val = np.inf
    threshold_val = np.inf
    best_params = model.copy_parameters()
    best_epoch = 0
    wait = 0
    train_losses, val_losses = [], []

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = x_train[order[lo : lo + config.batch_size]]
            loss, grads = model.loss_gradients(batch, dropout=config.dropout, rng=rng)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch offset {lo} "
                    f"(lr={config.learning_rate}, batch_size={config.batch_size})"
                )
            optimizer.step(model.parameters(), grads)
            epoch_loss += loss * len(batch)
        train_losses.append(epoch_loss / len(x_train))

        val_loss = float(np.mean(model.reconstruction_errors(x_val)))
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_params = model.copy_parameters()
            best_epoch = epoch
        # Patience resets only on a material improvement; hairline gains count
        # as a plateau so training stops once learning has levelled off.
        if val_loss < threshold_val * (1.0 - config.min_delta_rel):
            threshold_val = val_loss
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    model.load_parameters(best_params)
    model.history = {
        "train_losses": train_losses,
        "val_losses": val_losses,
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
        "epochs_run": len(val_losses),
    }
    return model


def kfold_validation(
    sequences: np.ndarray,
    arch: Optional[AutoencoderArch] = None,
    config: TrainConfig = TrainConfig(),
) -> list[float]:
    """Hyperparameter audit: per-fold validation losses over k folds.

    Separate from the main training path, which uses the 80/20 split.
    """
    n = sequences.shape[0]
    k = config.k_folds
    if n < k:
        raise ValueError(f"need at least {k} rows for {k}-fold validation")
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)
    losses = []
    for i, fold in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        fold_cfg = TrainConfig(**{**asdict(config), "seed": config.seed + i})
        model = train_autoencoder(sequences[train_idx], arch, fold_cfg)
        losses.append(float(np.mean(model.reconstruction_errors(sequences[fold]))))
    return losses
