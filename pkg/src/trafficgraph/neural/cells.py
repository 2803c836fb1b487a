"""Recurrent cells (GRU, LSTM, vanilla RNN) with hand-written BPTT.

Weights follow the ``W x + U h`` convention: input kernels are (H, D),
recurrent kernels (H, H). Layer functions operate on batches shaped
(B, T, D). ``mask`` is an optional (B, H) recurrent-dropout mask, applied to
the previous hidden state wherever it enters a recurrent kernel.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid

GATES = {
    "gru": ("z", "r", "h"),
    "lstm": ("i", "f", "o", "c"),
    "rnn": ("h",),
}


def param_names(cell: str) -> list[str]:
    gates = GATES[cell]
    return [f"W_{g}" for g in gates] + [f"U_{g}" for g in gates] + [f"b_{g}" for g in gates]


def _flat(a):
    return a.reshape(-1, a.shape[-1])


def _tdot(a, b):
    """Sum over batch and time of outer products: (B,T,H) x (B,T,D) -> (H, D)."""
    return _flat(a).T @ _flat(b)


# ---------------------------------------------------------------------------
# single steps


def gru_step(x_t, h_prev, p):
    z = sigmoid(x_t @ p["W_z"].T + h_prev @ p["U_z"].T + p["b_z"])
    r = sigmoid(x_t @ p["W_r"].T + h_prev @ p["U_r"].T + p["b_r"])
    h_cand = np.tanh(x_t @ p["W_h"].T + r * (h_prev @ p["U_h"].T) + p["b_h"])
    return z * h_cand + (1.0 - z) * h_prev


def lstm_step(x_t, state_prev, p):
    """One LSTM step; ``state_prev`` and the result are ``(h, c)`` pairs."""
    h_prev, c_prev = state_prev
    i = sigmoid(x_t @ p["W_i"].T + h_prev @ p["U_i"].T + p["b_i"])
    f = sigmoid(x_t @ p["W_f"].T + h_prev @ p["U_f"].T + p["b_f"])
    o = sigmoid(x_t @ p["W_o"].T + h_prev @ p["U_o"].T + p["b_o"])
    g = np.tanh(x_t @ p["W_c"].T + h_prev @ p["U_c"].T + p["b_c"])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def rnn_step(x_t, h_prev, p):
    return np.tanh(x_t @ p["W_h"].T + h_prev @ p["U_h"].T + p["b_h"])


# ---------------------------------------------------------------------------
# GRU layer


def gru_forward(p, X, mask=None):
    B, T, _ = X.shape
    H = p["U_h"].shape[0]
    xz = X @ p["W_z"].T + p["b_z"]
    xr = X @ p["W_r"].T + p["b_r"]
    xh = X @ p["W_h"].T + p["b_h"]
    U = np.concatenate([p["U_z"], p["U_r"], p["U_h"]]).T  # one recurrent product per step
    out = np.empty((B, T, H))
    hprev, hd_all = np.empty((B, T, H)), np.empty((B, T, H))
    z_all, r_all, uh_all, hc_all = (np.empty((B, T, H)) for _ in range(4))
    h = np.zeros((B, H))
    for t in range(T):
        hd = h if mask is None else h * mask
        rec = hd @ U
        z = sigmoid(xz[:, t] + rec[:, :H])
        r = sigmoid(xr[:, t] + rec[:, H:2 * H])
        uh = rec[:, 2 * H:]
        hc = np.tanh(xh[:, t] + r * uh)
        hprev[:, t], hd_all[:, t] = h, hd
        z_all[:, t], r_all[:, t], uh_all[:, t], hc_all[:, t] = z, r, uh, hc
        h = z * hc + (1.0 - z) * h
        out[:, t] = h
    cache = (X, mask, hprev, hd_all, z_all, r_all, uh_all, hc_all)
    return out, cache


def gru_backward(p, cache, dout):
    X, mask, hprev, hd_all, z_all, r_all, uh_all, hc_all = cache
    B, T, H = dout.shape
    daz, dar, dah, duh = (np.empty((B, T, H)) for _ in range(4))
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        dh = dout[:, t] + dh_next
        z, r, uh, hc = z_all[:, t], r_all[:, t], uh_all[:, t], hc_all[:, t]
        a_h = dh * z * (1.0 - hc * hc)
        a_z = dh * (hc - hprev[:, t]) * z * (1.0 - z)
        a_r = a_h * uh * r * (1.0 - r)
        d_uh = a_h * r
        daz[:, t], dar[:, t], dah[:, t], duh[:, t] = a_z, a_r, a_h, d_uh
        dhd = a_z @ p["U_z"] + a_r @ p["U_r"] + d_uh @ p["U_h"]
        dh_next = dh * (1.0 - z) + (dhd if mask is None else dhd * mask)
    grads = {
        "W_z": _tdot(daz, X), "W_r": _tdot(dar, X), "W_h": _tdot(dah, X),
        "U_z": _tdot(daz, hd_all), "U_r": _tdot(dar, hd_all), "U_h": _tdot(duh, hd_all),
        "b_z": daz.sum(axis=(0, 1)), "b_r": dar.sum(axis=(0, 1)), "b_h": dah.sum(axis=(0, 1)),
    }
    dX = daz @ p["W_z"] + dar @ p["W_r"] + dah @ p["W_h"]
    return dX, grads


# ---------------------------------------------------------------------------
# LSTM layer


def lstm_forward(p, X, mask=None):
    B, T, _ = X.shape
    H = p["U_i"].shape[0]
    xs = {g: X @ p[f"W_{g}"].T + p[f"b_{g}"] for g in "ifoc"}
    U = np.concatenate([p["U_i"], p["U_f"], p["U_o"], p["U_c"]]).T
    out = np.empty((B, T, H))
    store = {k: np.empty((B, T, H)) for k in ("hd", "cprev", "i", "f", "o", "g", "tc")}
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        hd = h if mask is None else h * mask
        rec = hd @ U
        i = sigmoid(xs["i"][:, t] + rec[:, :H])
        f = sigmoid(xs["f"][:, t] + rec[:, H:2 * H])
        o = sigmoid(xs["o"][:, t] + rec[:, 2 * H:3 * H])
        g = np.tanh(xs["c"][:, t] + rec[:, 3 * H:])
        store["hd"][:, t], store["cprev"][:, t] = hd, c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        for k, v in (("i", i), ("f", f), ("o", o), ("g", g), ("tc", tc)):
            store[k][:, t] = v
        out[:, t] = h
    return out, (X, mask, store)


def lstm_backward(p, cache, dout):
    X, mask, s = cache
    B, T, H = dout.shape
    da = {g: np.empty((B, T, H)) for g in "ifoc"}
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        i, f, o, g, tc = (s[k][:, t] for k in ("i", "f", "o", "g", "tc"))
        dh = dout[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da["o"][:, t] = dh * tc * o * (1.0 - o)
        da["i"][:, t] = dc * g * i * (1.0 - i)
        da["f"][:, t] = dc * s["cprev"][:, t] * f * (1.0 - f)
        da["c"][:, t] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dhd = sum(da[k][:, t] @ p[f"U_{k}"] for k in "ifoc")
        dh_next = dhd if mask is None else dhd * mask
    grads = {}
    for k in "ifoc":
        grads[f"W_{k}"] = _tdot(da[k], X)
        grads[f"U_{k}"] = _tdot(da[k], s["hd"])
        grads[f"b_{k}"] = da[k].sum(axis=(0, 1))
    dX = sum(da[k] @ p[f"W_{k}"] for k in "ifoc")
    return dX, grads


# ---------------------------------------------------------------------------
# vanilla RNN layer


def rnn_forward(p, X, mask=None):
    B, T, _ = X.shape
    H = p["U_h"].shape[0]
    xh = X @ p["W_h"].T + p["b_h"]
    out = np.empty((B, T, H))
    hd_all = np.empty((B, T, H))
    h = np.zeros((B, H))
    for t in range(T):
        hd = h if mask is None else h * mask
        h = np.tanh(xh[:, t] + hd @ p["U_h"].T)
        hd_all[:, t] = hd
        out[:, t] = h
    return out, (X, mask, hd_all, out)


def rnn_backward(p, cache, dout):
    X, mask, hd_all, out = cache
    B, T, H = dout.shape
    da = np.empty((B, T, H))
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        h = out[:, t]
        a = (dout[:, t] + dh_next) * (1.0 - h * h)
        da[:, t] = a
        dhd = a @ p["U_h"]
        dh_next = dhd if mask is None else dhd * mask
    grads = {"W_h": _tdot(da, X), "U_h": _tdot(da, hd_all), "b_h": da.sum(axis=(0, 1))}
    return da @ p["W_h"], grads


LAYERS = {
    "gru": (gru_forward, gru_backward),
    "lstm": (lstm_forward, lstm_backward),
    "rnn": (rnn_forward, rnn_backward),
}
