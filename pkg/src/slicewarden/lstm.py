"""Minimal LSTM and dense layers with exact backpropagation through time.

Gate order in the fused weight matrices is (input, forget, candidate, output).
Everything runs in float64 numpy so analytic gradients can be validated with
central finite differences.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LstmLayer:
    """One LSTM layer over (batch, steps, input_dim) sequences.

    cell_activation names the nonlinearity on the candidate and the cell
    output ("tanh" or "relu"); gate activations stay sigmoid.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        rng: np.random.Generator | None = None,
        cell_activation: str = "tanh",
    ):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        if cell_activation not in ("tanh", "relu"):
            raise ValueError(f"unsupported cell activation: {cell_activation}")
        self.cell_activation = cell_activation
        if rng is None:
            self.w = np.zeros((input_dim, 4 * hidden_dim))
            self.u = np.zeros((hidden_dim, 4 * hidden_dim))
        else:
            self.w = _uniform_init(rng, input_dim, (input_dim, 4 * hidden_dim))
            self.u = _uniform_init(rng, hidden_dim, (hidden_dim, 4 * hidden_dim))
        self.b = np.zeros(4 * hidden_dim)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("w", self.w), ("u", self.u), ("b", self.b)]

    def _act(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x) if self.cell_activation == "tanh" else relu(x)

    def _act_grad_from_output(self, out: np.ndarray) -> np.ndarray:
        # Derivative expressed through the activation's stored output.
        return 1.0 - out * out if self.cell_activation == "tanh" else (out > 0).astype(float)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Returns the hidden-state sequence (B, L, H) and the BPTT cache."""
        batch, steps, _ = x.shape
        h = np.zeros((batch, self.hidden_dim))
        c = np.zeros((batch, self.hidden_dim))
        hs = np.zeros((batch, steps, self.hidden_dim))
        cache = {"x": x, "i": [], "f": [], "g": [], "o": [], "c": [], "c_prev": [], "h_prev": [], "act_c": []}
        hd = self.hidden_dim
        for t in range(steps):
            z = x[:, t, :] @ self.w + h @ self.u + self.b
            i = sigmoid(z[:, :hd])
            f = sigmoid(z[:, hd : 2 * hd])
            g = self._act(z[:, 2 * hd : 3 * hd])
            o = sigmoid(z[:, 3 * hd :])
            cache["c_prev"].append(c)
            cache["h_prev"].append(h)
            c = f * c + i * g
            ac = self._act(c)
            h = o * ac
            hs[:, t, :] = h
            for key, val in (("i", i), ("f", f), ("g", g), ("o", o), ("c", c), ("act_c", ac)):
                cache[key].append(val)
        return hs, cache

    def backward(self, cache: dict, d_hs: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Gradients for (w, u, b) and the input sequence, given d(loss)/d(hs)."""
        x = cache["x"]
        batch, steps, _ = x.shape
        dw = np.zeros_like(self.w)
        du = np.zeros_like(self.u)
        db = np.zeros_like(self.b)
        dx = np.zeros_like(x)
        dh_next = np.zeros((batch, self.hidden_dim))
        dc_next = np.zeros((batch, self.hidden_dim))
        for t in range(steps - 1, -1, -1):
            i, f, g, o = cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t]
            ac = cache["act_c"][t]
            c_prev = cache["c_prev"][t]
            h_prev = cache["h_prev"][t]
            dh = d_hs[:, t, :] + dh_next
            do = dh * ac
            dc = dh * o * self._act_grad_from_output(ac) + dc_next
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * self._act_grad_from_output(g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dw += x[:, t, :].T @ dz
            du += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, t, :] = dz @ self.w.T
            dh_next = dz @ self.u.T
        return {"w": dw, "u": du, "b": db}, dx


class DenseLayer:
    """Linear projection applied per time step."""

    def __init__(self, input_dim: int, output_dim: int, rng: np.random.Generator | None = None):
        self.input_dim = input_dim
        self.output_dim = output_dim
        if rng is None:
            self.w = np.zeros((input_dim, output_dim))
        else:
            self.w = _uniform_init(rng, input_dim, (input_dim, output_dim))
        self.b = np.zeros(output_dim)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [("w", self.w), ("b", self.b)]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        return x @ self.w + self.b, {"x": x}

    def backward(self, cache: dict, d_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        x = cache["x"]
        flat_x = x.reshape(-1, self.input_dim)
        flat_d = d_out.reshape(-1, self.output_dim)
        grads = {"w": flat_x.T @ flat_d, "b": flat_d.sum(axis=0)}
        return grads, d_out @ self.w.T


def lstm_forward(layer: LstmLayer, sequence: np.ndarray) -> np.ndarray:
    """Final hidden state (B, H) of one layer over (B, L, D) input."""
    if sequence.ndim != 3 or sequence.shape[2] != layer.input_dim:
        raise ValueError(f"expected (batch, steps, {layer.input_dim}) input, got {sequence.shape}")
    hs, _ = layer.forward(sequence)
    return hs[:, -1, :]


def lstm_backward(layer: LstmLayer, sequence: np.ndarray, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients for a loss whose gradient at the hidden sequence is d_out."""
    if d_out.shape != (sequence.shape[0], sequence.shape[1], layer.hidden_dim):
        raise ValueError(f"gradient shape {d_out.shape} does not match hidden sequence")
    _, cache = layer.forward(sequence)
    grads, _ = layer.backward(cache, d_out)
    return grads
