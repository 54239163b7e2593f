# cython: language_level=3
"""Compiled kernels; behaviour matches ``_pycore`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs

cnp.import_array()

from telesched.errors import InvariantViolation

cdef enum:
    SERVED = 0
    PUSHED_OUT = 1
    IN_SYSTEM = 2
    NO_PHASE = -1
    FIFO = 0
    PUSHOUT = 1
    UNBOUNDED = -1
    STABILITY_GUARD = 1000000

cdef double _SERIES_CAP = 700.0
cdef double _SQRT_2PI = 2.5066282746310002


cdef double _i1e(double x) noexcept nogil:
    cdef double half_sq, term, total, new
    cdef int k
    if x < 0.0:
        return -_i1e(-x)
    if x == 0.0:
        return 0.0
    if x <= _SERIES_CAP:
        half_sq = 0.25 * x * x
        term = 0.5 * x * exp(-x)
        total = term
        k = 0
        while True:
            term *= half_sq / ((k + 1.0) * (k + 2.0))
            total += term
            k += 1
            if term < 1e-17 * total:
                return total
    total = 1.0
    term = 1.0
    for k in range(1, 60):
        new = -term * (4.0 - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (k * 8.0 * x)
        if fabs(new) >= fabs(term):
            break
        total += new
        term = new
        if fabs(term) < 1e-17:
            break
    return total / (_SQRT_2PI * sqrt(x))


def i1e(double x):
    return _i1e(x)


def i1e_array(double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _i1e(x[i])
    return out


cdef struct Ring:
    long long *data
    Py_ssize_t cap
    Py_ssize_t head
    Py_ssize_t size


cdef inline void ring_push(Ring *r, long long v) noexcept nogil:
    r.data[(r.head + r.size) % r.cap] = v
    r.size += 1


cdef inline long long ring_pop_front(Ring *r) noexcept nogil:
    cdef long long v = r.data[r.head]
    r.head = (r.head + 1) % r.cap
    r.size -= 1
    return v


cdef inline long long ring_pop_back(Ring *r) noexcept nogil:
    r.size -= 1
    return r.data[(r.head + r.size) % r.cap]


def simulate_events(times, kinds, long long buf_r, long long buf_e,
                    int order_r, int order_e, int overflow_r, int overflow_e, hook=None):
    if hook is not None:
        raise TypeError("the compiled kernel does not take a policy hook")
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef signed char[::1] kd = np.ascontiguousarray(kinds, dtype=np.int8)
    cdef Py_ssize_t n = t.shape[0]
    departure = np.full(n, np.nan)
    outcome = np.full(n, IN_SYSTEM, dtype=np.int8)
    phase = np.full(n, NO_PHASE, dtype=np.int8)
    seen = np.zeros(n, dtype=np.int64)
    cdef double[::1] dep = departure
    cdef signed char[::1] out = outcome
    cdef signed char[::1] ph = phase
    cdef long long[::1] sn = seen

    cdef long long caps[2]
    cdef int orders[2]
    cdef int overflows[2]
    caps[0] = buf_r
    caps[1] = buf_e
    orders[0] = order_r
    orders[1] = order_e
    overflows[0] = overflow_r
    overflows[1] = overflow_e

    store_r = np.empty(max(1, n if buf_r == UNBOUNDED else buf_r + 1), dtype=np.int64)
    store_e = np.empty(max(1, n if buf_e == UNBOUNDED else buf_e + 1), dtype=np.int64)
    cdef long long[::1] sr = store_r
    cdef long long[::1] se = store_e
    cdef Ring rings[2]
    rings[0].data = &sr[0]
    rings[0].cap = sr.shape[0]
    rings[0].head = 0
    rings[0].size = 0
    rings[1].data = &se[0]
    rings[1].cap = se.shape[0]
    rings[1].head = 0
    rings[1].size = 0

    cdef Py_ssize_t i
    cdef int k, o
    cdef long long partner, victim, cap
    cdef double now
    cdef int err = 0
    cdef Py_ssize_t err_at = -1

    with nogil:
        for i in range(n):
            now = t[i]
            k = kd[i]
            o = 1 - k
            sn[i] = rings[0].size - rings[1].size
            if rings[k].size > 0 and rings[o].size > 0:
                err = 1
                err_at = i
                break
            if rings[o].size > 0:
                if orders[o] == FIFO:
                    partner = ring_pop_front(&rings[o])
                else:
                    partner = ring_pop_back(&rings[o])
                dep[i] = now
                dep[partner] = now
                out[i] = SERVED
                out[partner] = SERVED
                ph[i] = o
                ph[partner] = o
                continue
            cap = caps[k]
            if cap == UNBOUNDED or rings[k].size < cap:
                ring_push(&rings[k], i)
                if cap == UNBOUNDED and rings[k].size > STABILITY_GUARD:
                    err = 2
                    err_at = i
                    break
                continue
            if overflows[k] == PUSHOUT and cap > 0:
                victim = ring_pop_front(&rings[k])
                ring_push(&rings[k], i)
            else:
                victim = i
            dep[victim] = now
            out[victim] = PUSHED_OUT
            if rings[k].size > cap:
                err = 3
                err_at = i
                break

    if err == 1:
        raise InvariantViolation(f"both buffers non-empty before event {err_at}")
    if err == 2:
        raise OverflowError("unbounded buffer exceeded the stability guard")
    if err == 3:
        raise InvariantViolation(f"buffer above capacity at event {err_at}")
    return departure, outcome, phase, seen
