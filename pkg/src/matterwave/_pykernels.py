"""NumPy implementations of the compiled kernels, same signatures."""
import numpy as np


def cheb_term(t, phi, prev, vr, vp, w, factor, coef, out, acc, use_prev):
    hr = vr * phi[0]
    hr += t[0]
    hr += w * phi[1]
    hp = vp * phi[1]
    hp += t[1]
    hp += w * phi[0]
    if factor != 1.0:
        hr *= factor
        hp *= factor
    if use_prev:
        hr -= prev[0]
        hp -= prev[1]
    out[0] = hr
    out[1] = hp
    acc += coef * out


def apply_mask(psi, mask, removed):
    p = psi.real**2 + psi.imag**2
    weight = 1.0 - mask * mask
    absorbed = p @ weight
    np.multiply(psi, 1.0 - mask, out=removed)
    psi *= mask
    return float(absorbed[0]), float(absorbed[1])
