# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernel sums.

Mirrors :mod:`l1indep._kernels_py` exactly; kernel codes are those of
:data:`l1indep.kernel.KIND_CODES`.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, fabs, sqrt

cnp.import_array()


cdef inline double _kern(long kind, double u) noexcept nogil:
    cdef double a = fabs(u)
    if a > 0.5:
        return 0.0
    if kind == 0:
        return 1.0
    if kind == 1:
        return 1.5 * (1.0 - 4.0 * u * u)
    return 2.0 * (1.0 - 2.0 * a)


def kernel_sums(const double[:, ::1] points, const double[:, ::1] data,
                const double[::1] h, const long[::1] block,
                const long[::1] kinds, long p, bint exclude_self):
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t d = data.shape[1]
    cdef Py_ssize_t j, i, k, l
    cdef double prod, kv
    joint_arr = np.zeros(m, dtype=np.float64)
    s1_arr = np.zeros((p, m), dtype=np.float64)
    s2_arr = np.zeros((p, m), dtype=np.float64)
    cdef double[::1] joint = joint_arr
    cdef double[:, ::1] s1 = s1_arr
    cdef double[:, ::1] s2 = s2_arr
    w_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] w = w_arr
    with nogil:
        for j in range(m):
            for i in range(n):
                if exclude_self and i == j:
                    continue
                for l in range(p):
                    w[l] = 1.0
                for k in range(d):
                    kv = _kern(kinds[k], (points[j, k] - data[i, k]) / h[k])
                    w[block[k]] *= kv
                prod = 1.0
                for l in range(p):
                    prod *= w[l]
                    s1[l, j] += w[l]
                    s2[l, j] += w[l] * w[l]
                joint[j] += prod
    return joint_arr, s1_arr, s2_arr


def loo_criterion_terms(const double[:, ::1] data, const double[::1] h,
                        const long[::1] block, const long[::1] kinds, long p,
                        const double[::1] hblock, double htotal):
    """Per-observation leave-one-out criterion terms; NaN marks a skipped term."""
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t j, l, q
    cdef double nm1 = n - 1.0
    cdef double sqrt_n = sqrt(<double>n)
    cdef double c2pi = sqrt(2.0 / 3.141592653589793)
    cdef double fj, prod_f, prod_v, prod_g, cross, lhat, gl, part
    joint_arr, s1_arr, s2_arr = kernel_sums(data, data, h, block, kinds, p, True)
    cdef double[::1] joint = joint_arr
    cdef double[:, ::1] s1 = s1_arr
    cdef double[:, ::1] s2 = s2_arr
    terms_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] terms = terms_arr
    v_arr = np.empty(p, dtype=np.float64)
    g_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] g = g_arr
    with nogil:
        for j in range(n):
            fj = joint[j] / (nm1 * htotal)
            prod_f = 1.0
            prod_v = 1.0
            prod_g = 1.0
            for l in range(p):
                prod_f *= s1[l, j] / (nm1 * hblock[l])
                v[l] = s2[l, j] / (nm1 * hblock[l] * hblock[l])
                g[l] = (s1[l, j] * s1[l, j] - s2[l, j]) / (
                    nm1 * (nm1 - 1.0) * hblock[l] * hblock[l])
                prod_v *= v[l]
                prod_g *= g[l]
            if prod_f <= 0.0:
                terms[j] = NAN
                continue
            cross = 0.0
            for l in range(p):
                part = v[l]
                for q in range(p):
                    if q != l:
                        part *= g[q]
                cross += part
            lhat = prod_v - cross + (p - 1.0) * prod_g
            if lhat < 0.0:
                lhat = 0.0
            terms[j] = (sqrt_n * fabs(fj - prod_f) - c2pi * sqrt(lhat)) / prod_f
    return terms_arr
