"""Independent naive-formula oracles used across the test suite.

Everything here is deliberately written as direct loops over the defining
formulas, sharing no code with the library implementations.
"""

import numpy as np


def naive_conv2d(x, weights, bias, stride_f=1, pad_f=(0, 0)):
    """Direct quadruple-loop causal convolution over (c, t, f)."""
    out_ch, in_ch, k_t, k_f = weights.shape
    c, t, f = x.shape
    assert c == in_ch
    pl, pr = pad_f
    f_out = (f + pl + pr - k_f) // stride_f + 1
    xp = np.zeros((c, t + k_t - 1, f + pl + pr), dtype=np.float64)
    xp[:, k_t - 1 :, pl : pl + f] = x
    out = np.zeros((out_ch, t, f_out), dtype=np.float64)
    for oc in range(out_ch):
        for tau in range(t):
            for fo in range(f_out):
                acc = 0.0
                for ic in range(in_ch):
                    for kt in range(k_t):
                        for kf in range(k_f):
                            acc += weights[oc, ic, kt, kf] * xp[ic, tau + kt, fo * stride_f + kf]
                out[oc, tau, fo] = acc + bias[oc]
    return out


def scalar_gru_step(x, h, w):
    """Scalar-loop GRU cell following the frozen gate formulas."""
    hid = h.size

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    z = np.array([sig(w.w_z[i] @ x + w.u_z[i] @ h + w.b_z[i]) for i in range(hid)])
    r = np.array([sig(w.w_r[i] @ x + w.u_r[i] @ h + w.b_r[i]) for i in range(hid)])
    cand = np.array([np.tanh(w.w_h[i] @ x + w.u_h[i] @ (r * h) + w.b_h[i]) for i in range(hid)])
    return (1.0 - z) * h + z * cand


def naive_softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def naive_unfold_time(x, d_max):
    c, t, f = x.shape
    out = np.zeros((c, t, d_max, f), dtype=x.dtype)
    for tau in range(t):
        for d in range(d_max):
            if tau - d >= 0:
                out[:, tau, d, :] = x[:, tau - d, :]
    return out


def naive_ccm_build(x, m, n):
    """Direct three-component complex combination."""
    v = [1.0 + 0.0j, -0.5 + 1j * np.sqrt(3) / 2, -0.5 - 1j * np.sqrt(3) / 2]
    slots = (m + 1) * (2 * n + 1)
    c, t, f = x.shape
    assert c == 3 * slots
    mask = np.zeros((m + 1, 2 * n + 1, t, f), dtype=np.complex128)
    for i in range(m + 1):
        for j in range(2 * n + 1):
            slot = i * (2 * n + 1) + j
            for comp in range(3):
                mask[i, j] += v[comp] * x[comp * slots + slot]
    return mask


def naive_ccm_apply(spec, mask, m, n):
    """Direct five-loop deep filter of the (t, f) spectrum."""
    t, f = spec.shape
    out = np.zeros((t, f), dtype=np.complex128)
    for tau in range(t):
        for fo in range(f):
            acc = 0.0 + 0.0j
            for i in range(-m, 1):
                for j in range(-n, n + 1):
                    ti, fi = tau + i, fo + j
                    if 0 <= ti < t and 0 <= fi < f:
                        acc += spec[ti, fi] * mask[i + m, j + n, tau, fo]
            out[tau, fo] = acc
    return out


def dft_peak(x, rate, freq_hz):
    """Amplitude of a sinusoid via a rectangular-window DFT projection."""
    n = np.arange(x.size)
    c = np.exp(-2j * np.pi * freq_hz * n / rate)
    return 2.0 * np.abs(np.sum(x * c)) / x.size


def xcorr_delay_oracle(q, k_hist):
    """Brute-force normalized cross-correlation argmax over all delays.

    q: (h, f) query at frame t; k_hist: (d, h, f) keys at t-d.
    """
    d = k_hist.shape[0]
    scores = np.full(d, -np.inf)
    qn = np.linalg.norm(q)
    for i in range(d):
        kn = np.linalg.norm(k_hist[i])
        if qn > 0 and kn > 0:
            scores[i] = float(np.sum(q * k_hist[i])) / (qn * kn)
    return int(np.argmax(scores))


def mean_projection_align_config(mic_ch, far_ch, d_max=100, gain=50.0):
    """Oracle alignment weights: channel-mean Q/K, Dirac tdmap tap.

    With h=1 the time-delay conv reduces to ``gain * Z``, so the delay
    distribution's argmax is the raw similarity argmax.
    """
    from deepvqe.align import AlignConfig
    from deepvqe.nn_ops import ConvSpec

    q_w = np.full((1, mic_ch, 1, 1), 1.0 / mic_ch)
    k_w = np.full((1, far_ch, 1, 1), 1.0 / far_ch)
    td_w = np.zeros((1, 1, 5, 3))
    td_w[0, 0, 4, 1] = gain   # current time tap, center delay tap
    return AlignConfig(
        h=1,
        d_max=d_max,
        q_proj=ConvSpec(mic_ch, 1, (1, 1), weights=q_w),
        k_proj=ConvSpec(far_ch, 1, (1, 1), weights=k_w),
        tdmap_conv=ConvSpec(1, 1, (5, 3), freq_pad=(1, 1), weights=td_w),
    )


def stream_conv(layer, x):
    """Run a prepared conv layer frame by frame, concatenating outputs."""
    c, t, f = x.shape
    state = layer.new_state(f)
    rows = []
    for tau in range(t):
        rows.append(layer.step(np.ascontiguousarray(x[:, tau, :]), state).copy())
    return np.stack(rows, axis=1)
