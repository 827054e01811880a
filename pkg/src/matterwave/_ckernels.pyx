# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled inner loops for the Chebyshev recurrence and the absorbing mask."""

cimport cython


def cheb_term(const double complex[:, ::1] t,
              const double complex[:, ::1] phi,
              double complex[:, ::1] prev,
              const double[::1] vr,
              const double[::1] vp,
              const double[::1] w,
              double factor,
              double complex coef,
              double complex[:, ::1] out,
              double complex[:, ::1] acc,
              bint use_prev):
    cdef Py_ssize_t i, n = phi.shape[1]
    cdef double complex a, b, hr, hp
    with nogil:
        for i in range(n):
            a = phi[0, i]
            b = phi[1, i]
            hr = factor * (t[0, i] + vr[i] * a + w[i] * b)
            hp = factor * (t[1, i] + vp[i] * b + w[i] * a)
            if use_prev:
                hr = hr - prev[0, i]
                hp = hp - prev[1, i]
            out[0, i] = hr
            out[1, i] = hp
            acc[0, i] = acc[0, i] + coef * hr
            acc[1, i] = acc[1, i] + coef * hp


def apply_mask(double complex[:, ::1] psi,
               const double[::1] mask,
               double complex[:, ::1] removed):
    cdef Py_ssize_t c, i, n = psi.shape[1]
    cdef double m, p
    cdef double absorbed[2]
    cdef double complex z
    absorbed[0] = 0.0
    absorbed[1] = 0.0
    with nogil:
        for c in range(2):
            for i in range(n):
                m = mask[i]
                z = psi[c, i]
                p = z.real * z.real + z.imag * z.imag
                absorbed[c] += p * (1.0 - m * m)
                removed[c, i] = z * (1.0 - m)
                psi[c, i] = z * m
    return absorbed[0], absorbed[1]
