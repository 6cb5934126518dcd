"""Pure-Python sweep kernels.

Fallback used when the compiled extension is unavailable. Arithmetic is
written expression-for-expression like the compiled kernels (sequential
dot products, same accumulation order) so the two backends produce
bit-identical parameters.
"""

from __future__ import annotations

from ..counter import CH_CHAIN, CH_COMBINE, CH_DOT, CH_SHARED, CH_UPDATE

BACKEND = "python"


def refresh_dot_mode(A, B_t, out, counts):
    """out[i, r] = factor row i . core column r, sequential over j."""
    I, J = A.shape
    R = B_t.shape[0]
    for i in range(I):
        for r in range(R):
            s = 0.0
            for j in range(J):
                s += A[i, j] * B_t[r, j]
            out[i, r] = s
    counts[CH_DOT] += I * J * R


def _fresh_rank_products(factors, cores_t, fib_c, prefix_modes, cross, R):
    # Uncached path: recompute every factor-row . core-column dot in the
    # same j order the refresh kernel uses, then chain them.
    for r in range(R):
        m = prefix_modes[0]
        a = factors[m]
        b = cores_t[m]
        i = fib_c[0]
        t = 0.0
        for j in range(a.shape[1]):
            t += a[i, j] * b[r, j]
        for d in range(1, len(prefix_modes)):
            m = prefix_modes[d]
            a = factors[m]
            b = cores_t[m]
            i = fib_c[d]
            s = 0.0
            for j in range(a.shape[1]):
                s += a[i, j] * b[r, j]
            t = t * s
        cross[r] = t


def _cached_rank_products(dots, fib_c, prefix_modes, cross, R):
    for r in range(R):
        t = dots[prefix_modes[0]][fib_c[0], r]
        for d in range(1, len(prefix_modes)):
            t = t * dots[prefix_modes[d]][fib_c[d], r]
        cross[r] = t


def _shared_vector(core_t_u, cross, vec, R, Ju):
    for j in range(Ju):
        vec[j] = 0.0
    for r in range(R):
        c = cross[r]
        for j in range(Ju):
            vec[j] += c * core_t_u[r, j]


def factor_sweep(
    leaf_coord,
    leaf_val,
    fiber_ptr,
    fiber_coord,
    prefix_modes,
    leaf_mode,
    factors,
    cores_t,
    dots,
    lr,
    reg,
    counts,
    fib_lo,
    fib_hi,
):
    """One pass over fibers [fib_lo, fib_hi), updating leaf-mode factor rows.

    `dots=None` selects the uncached plan: rank products are rebuilt from
    fresh dot products at every leaf instead of once per fiber from the
    cache. Both plans perform identical update arithmetic.
    """
    N = len(factors)
    R = cores_t[0].shape[0]
    A_u = factors[leaf_mode]
    B_u = cores_t[leaf_mode]
    Ju = A_u.shape[1]
    cached = dots is not None
    n_prefix = len(prefix_modes)
    dots_per_leaf = sum(factors[int(m)].shape[1] for m in prefix_modes) * R
    pmodes = [int(m) for m in prefix_modes]
    cross = [0.0] * R
    vec = [0.0] * Ju
    c_dot = c_chain = c_comb = c_shared = c_upd = 0

    for f in range(fib_lo, fib_hi):
        lo = int(fiber_ptr[f])
        hi = int(fiber_ptr[f + 1])
        fib_c = [int(fiber_coord[f, d]) for d in range(n_prefix)]
        if cached:
            _cached_rank_products(dots, fib_c, pmodes, cross, R)
            _shared_vector(B_u, cross, vec, R, Ju)
            c_chain += (N - 2) * R
            c_comb += Ju * R
            c_shared += Ju * R + N - 2
        for leaf in range(lo, hi):
            if not cached:
                _fresh_rank_products(factors, cores_t, fib_c, pmodes, cross, R)
                _shared_vector(B_u, cross, vec, R, Ju)
                c_dot += dots_per_leaf
                c_chain += (N - 2) * R
                c_comb += Ju * R
                c_shared += Ju * R + N - 2
            i = int(leaf_coord[leaf])
            x = leaf_val[leaf]
            s = 0.0
            for j in range(Ju):
                s += A_u[i, j] * vec[j]
            e = x - s
            for j in range(Ju):
                g = reg * A_u[i, j] - e * vec[j]
                A_u[i, j] = A_u[i, j] - lr * g
            c_upd += 4 * Ju

    counts[CH_DOT] += c_dot
    counts[CH_CHAIN] += c_chain
    counts[CH_COMBINE] += c_comb
    counts[CH_SHARED] += c_shared
    counts[CH_UPDATE] += c_upd


def core_sweep(
    leaf_coord,
    leaf_val,
    fiber_ptr,
    fiber_coord,
    prefix_modes,
    leaf_mode,
    factors,
    cores_t,
    dots,
    acc,
    counts,
    fib_lo,
    fib_hi,
):
    """Accumulate the leaf-mode core gradient over fibers [fib_lo, fib_hi).

    Writes only into `acc` (R x J of the leaf mode); parameters are
    untouched so the deferred batch update can be applied once per sweep.
    """
    N = len(factors)
    R = cores_t[0].shape[0]
    A_u = factors[leaf_mode]
    B_u = cores_t[leaf_mode]
    Ju = A_u.shape[1]
    cached = dots is not None
    n_prefix = len(prefix_modes)
    dots_per_leaf = sum(factors[int(m)].shape[1] for m in prefix_modes) * R
    pmodes = [int(m) for m in prefix_modes]
    cross = [0.0] * R
    vec = [0.0] * Ju
    c_dot = c_chain = c_comb = c_shared = c_upd = 0

    for f in range(fib_lo, fib_hi):
        lo = int(fiber_ptr[f])
        hi = int(fiber_ptr[f + 1])
        fib_c = [int(fiber_coord[f, d]) for d in range(n_prefix)]
        if cached:
            _cached_rank_products(dots, fib_c, pmodes, cross, R)
            _shared_vector(B_u, cross, vec, R, Ju)
            c_chain += (N - 2) * R
            c_comb += Ju * R
            c_shared += Ju * R + N - 2
        for leaf in range(lo, hi):
            if not cached:
                _fresh_rank_products(factors, cores_t, fib_c, pmodes, cross, R)
                _shared_vector(B_u, cross, vec, R, Ju)
                c_dot += dots_per_leaf
                c_chain += (N - 2) * R
                c_comb += Ju * R
                c_shared += Ju * R + N - 2
            i = int(leaf_coord[leaf])
            x = leaf_val[leaf]
            s = 0.0
            for j in range(Ju):
                s += A_u[i, j] * vec[j]
            e = x - s
            for r in range(R):
                c = e * cross[r]
                for j in range(Ju):
                    acc[r, j] = acc[r, j] - c * A_u[i, j]
            c_upd += Ju + R * (1 + Ju)

    counts[CH_DOT] += c_dot
    counts[CH_CHAIN] += c_chain
    counts[CH_COMBINE] += c_comb
    counts[CH_SHARED] += c_shared
    counts[CH_UPDATE] += c_upd


def apply_core_update(core_t_u, acc, omega, lr, reg, counts):
    """Batch step: core -= lr * (acc / omega + reg * core)."""
    R, Ju = core_t_u.shape
    for r in range(R):
        for j in range(Ju):
            g = acc[r, j] / omega + reg * core_t_u[r, j]
            core_t_u[r, j] = core_t_u[r, j] - lr * g
    counts[CH_UPDATE] += 2 * R * Ju
