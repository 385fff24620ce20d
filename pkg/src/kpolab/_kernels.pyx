# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops for coherent-state rows and batched classical energies."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, cos, sin, atan2, hypot, lgamma

cnp.import_array()


def coherent_amplitudes(alpha, Py_ssize_t n_trunc):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] a = np.ascontiguousarray(alpha, dtype=np.complex128).ravel()
    cdef Py_ssize_t m_count = a.shape[0]
    out = np.empty((m_count, n_trunc), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    half_lgamma = np.empty(n_trunc)
    cdef double[::1] hl = half_lgamma
    cdef Py_ssize_t m, n
    cdef double re, im, mag, mag2, logmag, theta
    cdef double complex unit, phasor
    for n in range(n_trunc):
        hl[n] = 0.5 * lgamma(n + 1.0)
    for m in range(m_count):
        re = a[m].real
        im = a[m].imag
        mag = hypot(re, im)
        mag2 = mag * mag
        o[m, 0] = exp(-0.5 * mag2)
        if mag == 0.0:
            for n in range(1, n_trunc):
                o[m, n] = 0.0
            continue
        logmag = log(mag)
        theta = atan2(im, re)
        unit = cos(theta) + 1j * sin(theta)
        phasor = 1.0
        for n in range(1, n_trunc):
            phasor = phasor * unit
            o[m, n] = exp(n * logmag - 0.5 * mag2 - hl[n]) * phasor
    return out


def energy_batch(q, p, int mu, double delta, double coeff):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qa = np.ascontiguousarray(q, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pa = np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef Py_ssize_t i, size = qa.shape[0]
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] o = out
    cdef double x, y, r2, f
    for i in range(size):
        x = qa[i]
        y = pa[i]
        r2 = x * x + y * y
        if mu == 1:
            f = x
        elif mu == 2:
            f = x * x - y * y
        elif mu == 3:
            f = x * x * x - 3.0 * x * y * y
        else:
            f = x * x * x * x - 6.0 * x * x * y * y + y * y * y * y
        o[i] = -0.5 * delta * r2 + 0.25 * r2 * r2 - coeff * f
    return out.reshape(np.shape(q))
