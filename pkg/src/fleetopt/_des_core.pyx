# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop of the yard simulator; mirrors ``_des_py.run_des``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    N_CELLS = 6


cdef struct Heap:
    double *t
    long long *g
    int *c
    Py_ssize_t n


cdef inline bint _less(Heap *h, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    if h.t[a] < h.t[b]:
        return True
    if h.t[a] > h.t[b]:
        return False
    return h.g[a] < h.g[b]


cdef inline void _swap(Heap *h, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double tt = h.t[a]
    cdef long long gg = h.g[a]
    cdef int cc = h.c[a]
    h.t[a] = h.t[b]; h.g[a] = h.g[b]; h.c[a] = h.c[b]
    h.t[b] = tt; h.g[b] = gg; h.c[b] = cc


cdef inline void _push(Heap *h, double t, long long g, int c) noexcept nogil:
    cdef Py_ssize_t k = h.n
    cdef Py_ssize_t parent
    h.t[k] = t; h.g[k] = g; h.c[k] = c
    h.n += 1
    while k > 0:
        parent = (k - 1) >> 1
        if _less(h, k, parent):
            _swap(h, k, parent)
            k = parent
        else:
            break


cdef inline void _pop(Heap *h) noexcept nogil:
    cdef Py_ssize_t k = 0, l, r, m
    h.n -= 1
    if h.n == 0:
        return
    h.t[0] = h.t[h.n]; h.g[0] = h.g[h.n]; h.c[0] = h.c[h.n]
    while True:
        l = 2 * k + 1
        r = l + 1
        m = k
        if l < h.n and _less(h, l, m):
            m = l
        if r < h.n and _less(h, r, m):
            m = r
        if m == k:
            break
        _swap(h, k, m)
        k = m


cdef struct State:
    long long head[N_CELLS]
    long long tail[N_CELLS]
    long long idle[N_CELLS]
    long long parked[3]
    long long cap[3]
    # diverted ring buffers, one per site
    long long *ring
    long long ring_base[3]
    long long ring_cap[3]
    long long ring_start[3]
    long long ring_len[3]
    long long ext[2]
    long long missed[2]
    long long full[2]
    long long served[2]
    long long defects
    double warmup
    double wait
    double defect_prob
    double *order_time
    double *order_dur
    double *order_u
    Heap heap


cdef inline void _serve(State *st, int c, double t, bint owned) noexcept nogil:
    cdef long long g = st.head[c]
    cdef int i = c // 3
    cdef double a = st.order_time[g]
    st.head[c] = g + 1
    if t >= st.warmup:
        st.served[i] += 1
    if t - a > st.wait and a + st.wait >= st.warmup:
        st.missed[i] += 1
    if owned:
        _push(&st.heap, t + st.order_dur[g], g, c)
    elif t >= st.warmup:
        st.ext[i] += 1


cdef inline void _free_spot(State *st, int s, double t) noexcept nogil:
    cdef long long j
    cdef int c
    st.parked[s] -= 1
    while st.ring_len[s] > 0:
        j = st.ring[st.ring_base[s] + st.ring_start[s]]
        st.ring_start[s] = (st.ring_start[s] + 1) % st.ring_cap[s]
        st.ring_len[s] -= 1
        c = <int>(j * 3 + s)
        if st.head[c] < st.tail[c]:
            _serve(st, c, t, True)
        else:
            st.parked[s] += 1
            st.idle[c] += 1
            break


cdef inline void _return(State *st, double t, long long g, int c) noexcept nogil:
    cdef int i = c // 3
    cdef int s = c - 3 * i
    cdef long long pos
    if st.order_u[g] < st.defect_prob and t >= st.warmup:
        st.defects += 1
    if st.head[c] < st.tail[c]:
        _serve(st, c, t, True)
    elif st.parked[s] < st.cap[s]:
        st.parked[s] += 1
        st.idle[c] += 1
    else:
        if t >= st.warmup:
            st.full[i] += 1
        pos = (st.ring_start[s] + st.ring_len[s]) % st.ring_cap[s]
        st.ring[st.ring_base[s] + pos] = i
        st.ring_len[s] += 1


def run_des(const double[::1] ev_time, const long long[::1] ev_code,
            const double[::1] order_time, const double[::1] order_dur, const double[::1] order_u,
            const long long[::1] offsets, const long long[::1] idle0, const long long[::1] parked0,
            const long long[::1] cap, const long long[::1] div_seq, const long long[::1] div_off,
            double defect_prob, double warmup, double horizon, double wait):
    cdef State st
    cdef Py_ssize_t k, n_ev = ev_time.shape[0]
    cdef Py_ssize_t n_orders = order_time.shape[0]
    cdef long long total_ring = 0, total_owned = 0, n0
    cdef int c, s, i
    cdef long long g, code
    cdef double t, tr
    cdef Py_ssize_t heap_cap

    for c in range(N_CELLS):
        st.head[c] = offsets[c]
        st.tail[c] = offsets[c]
        st.idle[c] = idle0[c]
    for s in range(3):
        st.parked[s] = parked0[s]
        st.cap[s] = cap[s]
        n0 = div_off[s + 1] - div_off[s]
        st.ring_base[s] = total_ring
        st.ring_cap[s] = parked0[s] + n0 + 1
        st.ring_start[s] = 0
        st.ring_len[s] = n0
        total_ring += st.ring_cap[s]
        total_owned += parked0[s] + n0
    for i in range(2):
        st.ext[i] = 0; st.missed[i] = 0; st.full[i] = 0; st.served[i] = 0
    st.defects = 0
    st.warmup = warmup
    st.wait = wait
    st.defect_prob = defect_prob
    st.order_time = &order_time[0] if n_orders > 0 else NULL
    st.order_dur = &order_dur[0] if n_orders > 0 else NULL
    st.order_u = &order_u[0] if n_orders > 0 else NULL

    heap_cap = min(total_owned, n_orders) + 1
    st.heap.n = 0
    st.heap.t = <double *> malloc(heap_cap * sizeof(double))
    st.heap.g = <long long *> malloc(heap_cap * sizeof(long long))
    st.heap.c = <int *> malloc(heap_cap * sizeof(int))
    st.ring = <long long *> malloc(total_ring * sizeof(long long))
    if st.heap.t == NULL or st.heap.g == NULL or st.heap.c == NULL or st.ring == NULL:
        free(st.heap.t); free(st.heap.g); free(st.heap.c); free(st.ring)
        raise MemoryError()
    try:
        for s in range(3):
            for k in range(div_off[s + 1] - div_off[s]):
                st.ring[st.ring_base[s] + k] = div_seq[div_off[s] + k]

        with nogil:
            for k in range(n_ev):
                t = ev_time[k]
                while st.heap.n > 0 and st.heap.t[0] <= t:
                    tr = st.heap.t[0]; g = st.heap.g[0]; c = st.heap.c[0]
                    _pop(&st.heap)
                    _return(&st, tr, g, c)
                code = ev_code[k]
                if code < N_CELLS:
                    c = <int>code
                    st.tail[c] += 1
                    if st.idle[c] > 0:
                        st.idle[c] -= 1
                        _serve(&st, c, t, True)
                        _free_spot(&st, c % 3, t)
                else:
                    c = <int>(code - N_CELLS)
                    if st.head[c] < st.tail[c]:
                        _serve(&st, c, t, False)

            while st.heap.n > 0 and st.heap.t[0] < horizon:
                tr = st.heap.t[0]; g = st.heap.g[0]; c = st.heap.c[0]
                _pop(&st.heap)
                _return(&st, tr, g, c)

        waiting = [0, 0]
        generated = [0, 0]
        for c in range(N_CELLS):
            i = c // 3
            waiting[i] += st.tail[c] - st.head[c]
            generated[i] += offsets[c + 1] - offsets[c]
            for g in range(st.head[c], st.tail[c]):
                if order_time[g] + wait < horizon and order_time[g] + wait >= warmup:
                    st.missed[i] += 1
        n_div = st.ring_len[0] + st.ring_len[1] + st.ring_len[2]
        return [st.ext[0], st.ext[1], st.defects, st.missed[0], st.missed[1],
                st.full[0], st.full[1], st.served[0], st.served[1],
                generated[0], generated[1], waiting[0], waiting[1], n_div]
    finally:
        free(st.heap.t); free(st.heap.g); free(st.heap.c); free(st.ring)
