"""Independent naive-loop references used as oracles by the test suite.

Everything here works on plain nested Python floats/lists with scalar math,
deliberately sharing no code with the vectorized kernels it checks.
"""

import math


def naive_layer_norm(token, gamma, beta, eps=1e-5):
    c = len(token)
    mean = sum(token) / c
    var = sum((x - mean) ** 2 for x in token) / c
    inv = 1.0 / math.sqrt(var + eps)
    return [(x - mean) * inv * g + b for x, g, b in zip(token, gamma, beta)]


def naive_linear(tokens, w, b=None):
    """tokens: [n][c_in], w: [c_in][c_out]."""
    c_out = len(w[0])
    out = []
    for tok in tokens:
        row = [sum(tok[i] * w[i][j] for i in range(len(tok))) for j in range(c_out)]
        if b is not None:
            row = [x + bj for x, bj in zip(row, b)]
        out.append(row)
    return out


def naive_attention(q, k, v, scale_dim):
    """q: [n][c], k/v: [m][c]; softmax(q k^T / sqrt(scale_dim)) v."""
    out = []
    for qi in q:
        logits = [sum(a * b for a, b in zip(qi, kj)) / math.sqrt(scale_dim) for kj in k]
        top = max(logits)
        exps = [math.exp(l - top) for l in logits]
        z = sum(exps)
        weights = [e / z for e in exps]
        out.append([sum(w * vj[c] for w, vj in zip(weights, v)) for c in range(len(v[0]))])
    return out


def naive_gelu(x):
    inner = 0.7978845608028654 * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + math.tanh(inner))


def naive_depthwise3x3(grid, w, b):
    """grid: [h][w][c]; w: [c][3][3]; zero padding 1."""
    h, wd, c = len(grid), len(grid[0]), len(grid[0][0])
    out = [[[0.0] * c for _ in range(wd)] for _ in range(h)]
    for i in range(h):
        for j in range(wd):
            for ch in range(c):
                acc = 0.0
                for di in range(3):
                    for dj in range(3):
                        si, sj = i + di - 1, j + dj - 1
                        if 0 <= si < h and 0 <= sj < wd:
                            acc += grid[si][sj][ch] * w[ch][di][dj]
                out[i][j][ch] = acc + b[ch]
    return out


def naive_mix_ffn(tokens, grid_h, grid_w, w1, b1, dw_w, dw_b, w2, b2):
    hidden = naive_linear(tokens, w1, b1)
    grid = [[hidden[i * grid_w + j] for j in range(grid_w)] for i in range(grid_h)]
    grid = naive_depthwise3x3(grid, dw_w, dw_b)
    flat = [grid[i][j] for i in range(grid_h) for j in range(grid_w)]
    flat = [[naive_gelu(x) for x in tok] for tok in flat]
    return naive_linear(flat, w2, b2)


def naive_taa_block(tokens_p, tokens_d, grid_h, grid_w, params, scale_dim, pre_norm=True):
    """Plain-projection block on token lists; params is a dict of nested lists."""

    def side(own, other):
        if pre_norm:
            own_n = [naive_layer_norm(t, params["gamma"], params["beta"]) for t in own]
            other_n = [naive_layer_norm(t, params["gamma"], params["beta"]) for t in other]
        else:
            own_n, other_n = own, other
        q = naive_linear(own_n, params["w_q"])
        k_own = naive_linear(own_n, params["w_k"])
        v_own = naive_linear(own_n, params["w_v"])
        k_other = naive_linear(other_n, params["w_k"])
        v_other = naive_linear(other_n, params["w_v"])
        h_self = naive_attention(q, k_own, v_own, scale_dim)
        h_cross = naive_attention(q, k_other, v_other, scale_dim)
        cat = [hs + hc for hs, hc in zip(h_self, h_cross)]
        mixed = naive_mix_ffn(
            cat, grid_h, grid_w,
            params["w1"], params["b1"], params["dw_w"], params["dw_b"], params["w2"], params["b2"],
        )
        return [[a + m for a, m in zip(tok, mix)] for tok, mix in zip(own, mixed)]

    return side(tokens_p, tokens_d), side(tokens_d, tokens_p)


def naive_confusion(pred, gt):
    """pred/gt: binary [h][w] lists. Returns (tp, fp, fn, tn)."""
    tp = fp = fn = tn = 0
    for prow, grow in zip(pred, gt):
        for p, g in zip(prow, grow):
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif not p and g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def naive_iou(pred, gt):
    tp, fp, fn, _ = naive_confusion(pred, gt)
    union = tp + fp + fn
    return 1.0 if union == 0 else tp / union


def naive_mcc(pred, gt):
    tp, fp, fn, tn = naive_confusion(pred, gt)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def naive_nmm(pred, gt):
    tp, fp, fn, _ = naive_confusion(pred, gt)
    gt_size = tp + fn
    if gt_size == 0:
        raise ValueError("empty ground truth")
    return max(-1.0, (tp - fn - fp) / gt_size)
