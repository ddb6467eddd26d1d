"""Differentiable building blocks with hand-derived backward passes.

Each forward returns whatever the matching backward needs as a cache.
Gradients w.r.t. embedding tables are reported as (row, vector) pairs so
callers can update touched rows sparsely.
"""

import numpy as np

from .errors import DataError
from .mathcore import (
    matmul,
    relu,
    relu_grad,
    sigmoid,
    sigmoid_grad_from_output,
    softmax,
    tanh,
    tanh_grad_from_output,
)


# -- embedding windows --------------------------------------------------

def window_indices(tokens: np.ndarray, t: int, half: int, pad_left: int, pad_right: int) -> list:
    """Token indices for the symmetric window t-half..t+half, padded at edges."""
    n = len(tokens)
    out = []
    for j in range(t - half, t + half + 1):
        if j < 0:
            out.append(pad_left)
        elif j >= n:
            out.append(pad_right)
        else:
            out.append(int(tokens[j]))
    return out


def label_context_indices(history: list, t: int, d_l: int, bol: int) -> list:
    """Indices of the d_l previous labels; slots before the sentence hold BOL.

    history[k] is the label at position k < t in processing order. The
    rightmost slot holds the most recent label y_{t-1}.
    """
    out = []
    for j in range(t - d_l, t):
        out.append(int(history[j]) if j >= 0 else bol)
    return out


def embed_concat(table: np.ndarray, indices: list) -> np.ndarray:
    """Concatenate table rows in order; length len(indices) * table.shape[1]."""
    return table[indices].ravel()


def embed_concat_backward(dvec: np.ndarray, indices: list, dim: int):
    """Split a gradient over a concatenation back into (row, vector) pairs."""
    return [(idx, dvec[k * dim : (k + 1) * dim]) for k, idx in enumerate(indices)]


# -- relu hidden layer ---------------------------------------------------

def relu_hidden_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray):
    pre = matmul(W, x) + b
    return relu(pre), pre


def relu_hidden_backward(W: np.ndarray, x: np.ndarray, pre: np.ndarray, dh: np.ndarray):
    """Returns (dW, db, dx) for h = relu(W x + b)."""
    dpre = dh * relu_grad(pre)
    dW = np.outer(dpre, x)
    dx = W.T @ dpre
    return dW, dpre, dx


# -- GRU hidden layer -----------------------------------------------------

def gru_forward(params: dict, x: np.ndarray, h_prev: np.ndarray):
    """One GRU step; update/reset gates are sigmoid, candidate is tanh.

    z = sig(W_z h_prev + U_z x + b_z)
    r = sig(W_r h_prev + U_r x + b_r)
    hc = tanh(W_h (r * h_prev) + U_h x + b_c)
    h = (1 - z) * h_prev + z * hc
    """
    z = sigmoid(matmul(params["W_z"], h_prev) + matmul(params["U_z"], x) + params["b_z"])
    r = sigmoid(matmul(params["W_r"], h_prev) + matmul(params["U_r"], x) + params["b_r"])
    hc = tanh(matmul(params["W_h"], r * h_prev) + matmul(params["U_h"], x) + params["b_c"])
    h = (1.0 - z) * h_prev + z * hc
    cache = {"x": x, "h_prev": h_prev, "z": z, "r": r, "hc": hc}
    return h, cache


def gru_backward(params: dict, cache: dict, dh: np.ndarray):
    """Backward through one GRU step.

    Returns (grads, dx, dh_prev); grads keys mirror the parameter dict.
    """
    x, h_prev = cache["x"], cache["h_prev"]
    z, r, hc = cache["z"], cache["r"], cache["hc"]

    dz = dh * (hc - h_prev)
    dhc = dh * z
    dh_prev = dh * (1.0 - z)

    da_c = dhc * tanh_grad_from_output(hc)
    rh = r * h_prev
    drh = params["W_h"].T @ da_c
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r

    da_z = dz * sigmoid_grad_from_output(z)
    da_r = dr * sigmoid_grad_from_output(r)

    grads = {
        "W_z": np.outer(da_z, h_prev),
        "U_z": np.outer(da_z, x),
        "b_z": da_z,
        "W_r": np.outer(da_r, h_prev),
        "U_r": np.outer(da_r, x),
        "b_r": da_r,
        "W_h": np.outer(da_c, rh),
        "U_h": np.outer(da_c, x),
        "b_c": da_c,
    }
    dx = params["U_z"].T @ da_z + params["U_r"].T @ da_r + params["U_h"].T @ da_c
    dh_prev = dh_prev + params["W_z"].T @ da_z + params["W_r"].T @ da_r
    return grads, dx, dh_prev


# -- character convolution + max-pooling ----------------------------------

def char_conv_forward(char_ids: np.ndarray, E_ch: np.ndarray, W: np.ndarray,
                      b: np.ndarray, d_c: int, pad_id: int):
    """Sliding linear map over character embeddings, then element-wise max.

    Output size is W.shape[0] regardless of word length. The cache records
    per-output argmax columns for routing the gradient back.
    """
    m = len(char_ids)
    if m < 1:
        raise DataError("char convolution requires a non-empty word")
    dim = E_ch.shape[1]
    windows = []
    cols = np.empty((m, W.shape[0]))
    for i in range(m):
        idxs = window_indices(char_ids, i, d_c, pad_id, pad_id)
        x = embed_concat(E_ch, idxs)
        cols[i] = matmul(W, x) + b
        windows.append((idxs, x))
    best = np.argmax(cols, axis=0)  # first maximum wins on ties
    out = cols[best, np.arange(W.shape[0])]
    cache = {"windows": windows, "best": best, "dim": dim, "d_c": d_c}
    return out, cache


def char_conv_backward(cache: dict, W: np.ndarray, dout: np.ndarray):
    """Returns (dW, db, embedding row grads); gradient flows only through
    the argmax column of each output coordinate."""
    dW = np.zeros_like(W)
    rows = []
    dim = cache["dim"]
    for i in np.unique(cache["best"]):
        mask = cache["best"] == i
        idxs, x = cache["windows"][i]
        dW[mask] += np.outer(dout[mask], x)
        dx = W[mask].T @ dout[mask]
        rows.extend(embed_concat_backward(dx, idxs, dim))
    return dW, dout.copy(), rows


# -- softmax output layer ---------------------------------------------------

def output_forward(O: np.ndarray, b: np.ndarray, h: np.ndarray) -> np.ndarray:
    return softmax(matmul(O, h) + b)


def output_backward(O: np.ndarray, h: np.ndarray, delta: np.ndarray):
    """Backward for softmax + cross-entropy given delta = y - c at the
    pre-softmax layer. Returns (dO, db, dh)."""
    dO = np.outer(delta, h)
    dh = O.T @ delta
    return dO, delta.copy(), dh
