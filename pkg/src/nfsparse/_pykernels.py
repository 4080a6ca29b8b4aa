"""Pure-Python/NumPy fallbacks for the compiled kernels in ``_kernels.pyx``.

``interference_terms`` evaluates the grid-averaged interference objective

    h(x) = 1/(S T) sum_{s,t} w[s, t] |sum_n exp(j phi_n)|^2,
    phi_n = 2 pi (b_s x_n^2 + theta_t x_n) / wavelength,

and, for ``order >= 1`` / ``order >= 2``, its gradient and Hessian in x.
"""

import numpy as np


def interference_terms(x, b, theta, w, wavelength, order=2):
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != (b.size, theta.size):
        raise ValueError("weights must have shape (len(b), len(theta))")
    S, T, N = b.size, theta.size, x.size
    k = 2 * np.pi / wavelength
    scale = 1.0 / (S * T)

    bb = b[:, None, None]
    tt = theta[None, :, None]
    # exp(j phi) factored into b and theta parts keeps the trig off the (S, T, N) cube
    e = np.exp(1j * k * np.outer(b, x * x))[:, None, :] * np.exp(1j * k * np.outer(theta, x))[None, :, :]
    z = e.sum(axis=-1)
    h = float(np.sum(w * (z.real**2 + z.imag**2)) * scale)
    if order < 1:
        return h, None, None

    c = k * (2 * bb * x + tt)  # d phi_n / d x_n
    cross = np.conj(e) * z[..., None]  # sum_v exp(j (phi_v - phi_n))
    wc = w[..., None] * c
    grad = 2 * np.sum(wc * cross.imag, axis=(0, 1)) * scale
    if order < 2:
        return h, grad, None

    # off-diagonal: 2 w c_m c_n cos(phi_m - phi_n), via one Gram product
    a = (np.sqrt(w)[..., None] * c * e).reshape(-1, N)
    hess = 2 * np.real(a.conj().T @ a) * scale
    hess = 0.5 * (hess + hess.T)  # BLAS leaves round-off asymmetry
    diag = 2 * np.sum(
        w[..., None] * (2 * k * bb * cross.imag - c * c * (cross.real - 1)), axis=(0, 1)
    )
    hess[np.diag_indices(N)] = diag * scale
    return h, grad, hess


def pav_nondecreasing(y):
    """Unweighted isotonic (nondecreasing) regression by pool adjacent violators."""
    y = np.asarray(y, dtype=float)
    sums: list[float] = []
    counts: list[int] = []
    for v in y:
        sums.append(float(v))
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] > sums[-1] * counts[-2]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    return np.repeat(np.array(sums) / np.array(counts), counts)
