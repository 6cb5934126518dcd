"""Compiled sweep kernels.

Mirrors _pykern.py expression for expression; both backends must produce
bit-identical parameters, so dot products accumulate sequentially and no
fused or reordered arithmetic is allowed (built without -ffast-math).
"""

from libc.stdlib cimport free, malloc

# Channel order must match fastertucker.counter.CHANNELS.
cdef enum:
    CH_DOT = 0
    CH_CHAIN = 1
    CH_COMBINE = 2
    CH_SHARED = 3
    CH_UPDATE = 4

BACKEND = "c"


def refresh_dot_mode(double[:, ::1] A, double[:, ::1] B_t, double[:, ::1] out,
                     long long[::1] counts):
    cdef Py_ssize_t I = A.shape[0], J = A.shape[1], R = B_t.shape[0]
    cdef Py_ssize_t i, r, j
    cdef double s
    with nogil:
        for i in range(I):
            for r in range(R):
                s = 0.0
                for j in range(J):
                    s = s + A[i, j] * B_t[r, j]
                out[i, r] = s
    counts[CH_DOT] += <long long>I * J * R


cdef struct _Tables:
    double** A
    double** B
    double** D
    long long* J
    double* cross
    double* vec


cdef int _alloc_tables(_Tables* t, Py_ssize_t N, Py_ssize_t R, Py_ssize_t Ju,
                       bint cached) except -1:
    t.A = <double**>malloc(N * sizeof(double*))
    t.B = <double**>malloc(N * sizeof(double*))
    t.D = <double**>malloc(N * sizeof(double*)) if cached else NULL
    t.J = <long long*>malloc(N * sizeof(long long))
    t.cross = <double*>malloc(R * sizeof(double))
    t.vec = <double*>malloc(Ju * sizeof(double))
    if (t.A == NULL or t.B == NULL or t.J == NULL or t.cross == NULL
            or t.vec == NULL or (cached and t.D == NULL)):
        _free_tables(t)
        raise MemoryError()
    return 0


cdef void _free_tables(_Tables* t) noexcept:
    free(t.A)
    free(t.B)
    free(t.D)
    free(t.J)
    free(t.cross)
    free(t.vec)


cdef void _fill_tables(_Tables* t, list factors, list cores_t, dots, Py_ssize_t N):
    cdef double[:, ::1] tmp
    cdef Py_ssize_t n
    for n in range(N):
        tmp = factors[n]
        t.A[n] = &tmp[0, 0]
        t.J[n] = tmp.shape[1]
        tmp = cores_t[n]
        t.B[n] = &tmp[0, 0]
    if dots is not None:
        for n in range(N):
            tmp = dots[n]
            t.D[n] = &tmp[0, 0]


cdef inline double _dot(const double* a, const double* b, long long J) noexcept nogil:
    cdef long long j
    cdef double s = 0.0
    for j in range(J):
        s = s + a[j] * b[j]
    return s


cdef inline void _cached_rank_products(_Tables* t, const long long[:, ::1] fiber_coord,
                                       Py_ssize_t f, const long long[::1] pmodes,
                                       Py_ssize_t n_prefix, Py_ssize_t R) noexcept nogil:
    cdef Py_ssize_t r, d, m
    cdef double v
    for r in range(R):
        m = <Py_ssize_t>pmodes[0]
        v = t.D[m][fiber_coord[f, 0] * R + r]
        for d in range(1, n_prefix):
            m = <Py_ssize_t>pmodes[d]
            v = v * t.D[m][fiber_coord[f, d] * R + r]
        t.cross[r] = v


cdef inline void _fresh_rank_products(_Tables* t, const long long[:, ::1] fiber_coord,
                                      Py_ssize_t f, const long long[::1] pmodes,
                                      Py_ssize_t n_prefix, Py_ssize_t R) noexcept nogil:
    cdef Py_ssize_t r, d, m
    cdef double v
    for r in range(R):
        m = <Py_ssize_t>pmodes[0]
        v = _dot(t.A[m] + fiber_coord[f, 0] * t.J[m], t.B[m] + r * t.J[m], t.J[m])
        for d in range(1, n_prefix):
            m = <Py_ssize_t>pmodes[d]
            v = v * _dot(t.A[m] + fiber_coord[f, d] * t.J[m], t.B[m] + r * t.J[m], t.J[m])
        t.cross[r] = v


cdef inline void _shared_vector(_Tables* t, const double* B_u, Py_ssize_t R,
                                Py_ssize_t Ju) noexcept nogil:
    cdef Py_ssize_t r, j
    cdef double c
    for j in range(Ju):
        t.vec[j] = 0.0
    for r in range(R):
        c = t.cross[r]
        for j in range(Ju):
            t.vec[j] = t.vec[j] + c * B_u[r * Ju + j]


def factor_sweep(const long long[::1] leaf_coord, const double[::1] leaf_val,
                 const long long[::1] fiber_ptr, const long long[:, ::1] fiber_coord,
                 const long long[::1] prefix_modes, Py_ssize_t leaf_mode,
                 list factors, list cores_t, dots,
                 double lr, double reg, long long[::1] counts,
                 Py_ssize_t fib_lo, Py_ssize_t fib_hi):
    cdef Py_ssize_t N = len(factors)
    cdef bint cached = dots is not None
    cdef Py_ssize_t n_prefix = prefix_modes.shape[0]
    cdef double[:, ::1] tmp = cores_t[0]
    cdef Py_ssize_t R = tmp.shape[0]
    tmp = factors[leaf_mode]
    cdef Py_ssize_t Ju = tmp.shape[1]
    cdef _Tables t
    _alloc_tables(&t, N, R, Ju, cached)
    _fill_tables(&t, factors, cores_t, dots, N)

    cdef double* A_u = t.A[leaf_mode]
    cdef double* B_u = t.B[leaf_mode]
    cdef long long dots_per_leaf = 0
    cdef Py_ssize_t d
    for d in range(n_prefix):
        dots_per_leaf += t.J[<Py_ssize_t>prefix_modes[d]]
    dots_per_leaf *= R

    cdef long long c_dot = 0, c_chain = 0, c_comb = 0, c_shared = 0, c_upd = 0
    cdef Py_ssize_t f, leaf, lo, hi, j, i
    cdef double x, s, e, g
    cdef double* arow

    try:
        with nogil:
            for f in range(fib_lo, fib_hi):
                lo = <Py_ssize_t>fiber_ptr[f]
                hi = <Py_ssize_t>fiber_ptr[f + 1]
                if cached:
                    _cached_rank_products(&t, fiber_coord, f, prefix_modes, n_prefix, R)
                    _shared_vector(&t, B_u, R, Ju)
                    c_chain += (N - 2) * R
                    c_comb += Ju * R
                    c_shared += Ju * R + N - 2
                for leaf in range(lo, hi):
                    if not cached:
                        _fresh_rank_products(&t, fiber_coord, f, prefix_modes, n_prefix, R)
                        _shared_vector(&t, B_u, R, Ju)
                        c_dot += dots_per_leaf
                        c_chain += (N - 2) * R
                        c_comb += Ju * R
                        c_shared += Ju * R + N - 2
                    i = <Py_ssize_t>leaf_coord[leaf]
                    x = leaf_val[leaf]
                    arow = A_u + i * Ju
                    s = 0.0
                    for j in range(Ju):
                        s = s + arow[j] * t.vec[j]
                    e = x - s
                    for j in range(Ju):
                        g = reg * arow[j] - e * t.vec[j]
                        arow[j] = arow[j] - lr * g
                    c_upd += 4 * Ju
    finally:
        _free_tables(&t)

    counts[CH_DOT] += c_dot
    counts[CH_CHAIN] += c_chain
    counts[CH_COMBINE] += c_comb
    counts[CH_SHARED] += c_shared
    counts[CH_UPDATE] += c_upd


def core_sweep(const long long[::1] leaf_coord, const double[::1] leaf_val,
               const long long[::1] fiber_ptr, const long long[:, ::1] fiber_coord,
               const long long[::1] prefix_modes, Py_ssize_t leaf_mode,
               list factors, list cores_t, dots, double[:, ::1] acc,
               long long[::1] counts, Py_ssize_t fib_lo, Py_ssize_t fib_hi):
    cdef Py_ssize_t N = len(factors)
    cdef bint cached = dots is not None
    cdef Py_ssize_t n_prefix = prefix_modes.shape[0]
    cdef double[:, ::1] tmp = cores_t[0]
    cdef Py_ssize_t R = tmp.shape[0]
    tmp = factors[leaf_mode]
    cdef Py_ssize_t Ju = tmp.shape[1]
    cdef _Tables t
    _alloc_tables(&t, N, R, Ju, cached)
    _fill_tables(&t, factors, cores_t, dots, N)

    cdef double* A_u = t.A[leaf_mode]
    cdef double* B_u = t.B[leaf_mode]
    cdef long long dots_per_leaf = 0
    cdef Py_ssize_t d
    for d in range(n_prefix):
        dots_per_leaf += t.J[<Py_ssize_t>prefix_modes[d]]
    dots_per_leaf *= R

    cdef long long c_dot = 0, c_chain = 0, c_comb = 0, c_shared = 0, c_upd = 0
    cdef Py_ssize_t f, leaf, lo, hi, j, i, r
    cdef double x, s, e, c
    cdef double* arow

    try:
        with nogil:
            for f in range(fib_lo, fib_hi):
                lo = <Py_ssize_t>fiber_ptr[f]
                hi = <Py_ssize_t>fiber_ptr[f + 1]
                if cached:
                    _cached_rank_products(&t, fiber_coord, f, prefix_modes, n_prefix, R)
                    _shared_vector(&t, B_u, R, Ju)
                    c_chain += (N - 2) * R
                    c_comb += Ju * R
                    c_shared += Ju * R + N - 2
                for leaf in range(lo, hi):
                    if not cached:
                        _fresh_rank_products(&t, fiber_coord, f, prefix_modes, n_prefix, R)
                        _shared_vector(&t, B_u, R, Ju)
                        c_dot += dots_per_leaf
                        c_chain += (N - 2) * R
                        c_comb += Ju * R
                        c_shared += Ju * R + N - 2
                    i = <Py_ssize_t>leaf_coord[leaf]
                    x = leaf_val[leaf]
                    arow = A_u + i * Ju
                    s = 0.0
                    for j in range(Ju):
                        s = s + arow[j] * t.vec[j]
                    e = x - s
                    for r in range(R):
                        c = e * t.cross[r]
                        for j in range(Ju):
                            acc[r, j] = acc[r, j] - c * arow[j]
                    c_upd += Ju + R * (1 + Ju)
    finally:
        _free_tables(&t)

    counts[CH_DOT] += c_dot
    counts[CH_CHAIN] += c_chain
    counts[CH_COMBINE] += c_comb
    counts[CH_SHARED] += c_shared
    counts[CH_UPDATE] += c_upd


def apply_core_update(double[:, ::1] core_t_u, const double[:, ::1] acc, double omega,
                      double lr, double reg, long long[::1] counts):
    cdef Py_ssize_t R = core_t_u.shape[0], Ju = core_t_u.shape[1]
    cdef Py_ssize_t r, j
    cdef double g
    with nogil:
        for r in range(R):
            for j in range(Ju):
                g = acc[r, j] / omega + reg * core_t_u[r, j]
                core_t_u[r, j] = core_t_u[r, j] - lr * g
    counts[CH_UPDATE] += 2 * <long long>R * Ju
