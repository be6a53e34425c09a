"""Independent reference implementations used to verify the package.

Everything here is written against plain numpy arrays (scalar loops or
extended precision where the tests call for it) and never touches the
package's tensor engine, so the two routes stay independent.
"""

import numpy as np


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_ld(v: np.ndarray) -> np.ndarray:
    x = np.asarray(v, dtype=np.longdouble)
    e = np.exp(x - x.max())
    return (e / e.sum()).astype(np.float64)


def row_softmax_ld(m: np.ndarray) -> np.ndarray:
    return np.stack([softmax_ld(row) for row in np.asarray(m)])


def gap_loops(m: np.ndarray) -> np.ndarray:
    rows, cols = m.shape
    out = np.zeros(rows)
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc += m[i, j]
        out[i] = acc / cols
    return out


def channel_scale_loops(w: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    for i in range(t.shape[0]):
        out[i] = w[i] * t[i]
    return out


def conv2d_loops6(x: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    """Six explicit loops; same-padding 1, 3x3 kernels."""
    cin, H, W = x.shape
    cout = k.shape[0]
    out_h = (H + 2 - 3) // stride + 1
    out_w = (W + 2 - 3) // stride + 1
    out = np.zeros((cout, out_h, out_w))
    for co in range(cout):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0.0
                for ci in range(cin):
                    for ky in range(3):
                        for kx in range(3):
                            iy = oy * stride + ky - 1
                            ix = ox * stride + kx - 1
                            if 0 <= iy < H and 0 <= ix < W:
                                acc += x[ci, iy, ix] * k[co, ci, ky, kx]
                out[co, oy, ox] = acc
    return out


def conv2d_ref(x: np.ndarray, k: np.ndarray, stride: int,
               bias: np.ndarray | None = None) -> np.ndarray:
    """Per-output-pixel window sums; still independent of im2col."""
    cin, H, W = x.shape
    cout = k.shape[0]
    out_h = (H + 2 - 3) // stride + 1
    out_w = (W + 2 - 3) // stride + 1
    xp = np.zeros((cin, H + 2, W + 2))
    xp[:, 1:H + 1, 1:W + 1] = x
    out = np.zeros((cout, out_h, out_w))
    for co in range(cout):
        for oy in range(out_h):
            for ox in range(out_w):
                window = xp[:, oy * stride:oy * stride + 3, ox * stride:ox * stride + 3]
                out[co, oy, ox] = float((window * k[co]).sum())
    if bias is not None:
        out += bias[:, None, None]
    return out


def upsample_loops(x: np.ndarray) -> np.ndarray:
    c, H, W = x.shape
    out = np.zeros((c, 2 * H, 2 * W))
    for ch in range(c):
        for y in range(H):
            for xx in range(W):
                out[ch, 2 * y:2 * y + 2, 2 * xx:2 * xx + 2] = x[ch, y, xx]
    return out


def cross_entropy_ld(logits: np.ndarray, labels: np.ndarray) -> float:
    x = np.asarray(logits, dtype=np.longdouble)
    c, H, W = x.shape
    total = np.longdouble(0.0)
    for yy in range(H):
        for xx in range(W):
            col = x[:, yy, xx]
            m = col.max()
            lse = np.log(np.exp(col - m).sum()) + m
            total += lse - col[labels[yy, xx]]
    return float(total / (H * W))


def fd_gradient(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar f() w.r.t. arr, perturbed in place."""
    out = np.zeros_like(arr)
    flat = arr.ravel()
    res = out.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        lp = f()
        flat[i] = keep - h
        lm = f()
        flat[i] = keep
        res[i] = (lp - lm) / (2 * h)
    return out


def relu_np(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def data_adjacency_ref(x: np.ndarray) -> np.ndarray:
    return row_softmax_ld(matmul_loops(x, x.T.copy()))


def gsm_forward_ref(f_head: np.ndarray, omega: list[np.ndarray],
                    a_low: np.ndarray, w_low: np.ndarray, w_high: np.ndarray,
                    v_low: np.ndarray, v_high: np.ndarray):
    """Step-by-step global pass composed from the primitive oracles."""
    c = f_head.shape[0]
    x = np.concatenate([matmul_loops(f_head[i].reshape(1, -1), omega[i])
                        for i in range(c)], axis=0)
    z_low = relu_np(matmul_loops(matmul_loops(a_low, x), w_low))
    c_agg = row_softmax_ld(matmul_loops(matmul_loops(a_low, x), v_low))
    x_high = matmul_loops(c_agg.T.copy(), x)
    a_high = matmul_loops(matmul_loops(c_agg.T.copy(), a_low), c_agg)
    z_high = relu_np(matmul_loops(matmul_loops(a_high, x_high), w_high))
    c_dec = row_softmax_ld(matmul_loops(matmul_loops(a_high, x_high), v_high))
    z_rev = matmul_loops(c_dec.T.copy(), z_high)
    nodes = z_rev + z_low
    theta = softmax_ld(gap_loops(nodes))
    rectified = channel_scale_loops(theta, f_head)
    return rectified, nodes, theta


def lcm_forward_ref(f: np.ndarray, omega_channels: np.ndarray,
                    omega_pixels: np.ndarray, weight: np.ndarray,
                    alpha: float, global_nodes: np.ndarray | None):
    """Step-by-step local pass composed from the primitive oracles."""
    cprime = f.shape[0]
    flat = f.reshape(cprime, -1)
    x = matmul_loops(matmul_loops(omega_channels, flat), omega_pixels)
    a = data_adjacency_ref(x)
    nodes = relu_np(matmul_loops(matmul_loops(a, x), weight))
    pooled = nodes if global_nodes is None or alpha == 0.0 \
        else nodes + alpha * global_nodes
    theta = softmax_ld(gap_loops(pooled))
    lifted = matmul_loops(omega_channels.T.copy(), theta.reshape(-1, 1)).reshape(-1)
    rectified = channel_scale_loops(lifted, f)
    return rectified, nodes, theta
