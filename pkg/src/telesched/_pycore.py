"""Pure-Python kernels.  ``_core.pyx`` mirrors these signatures exactly."""
import math

import numpy as np

from telesched.errors import InvariantViolation

SERVED, PUSHED_OUT, IN_SYSTEM = 0, 1, 2
NO_PHASE, REQUEST_WAITED, EPR_WAITED = -1, 0, 1
FIFO, LIFO = 0, 1
BLOCK, PUSHOUT = 0, 1
UNBOUNDED = -1
STABILITY_GUARD = 1_000_000

_SERIES_CAP = 700.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def i1e(x):
    """``exp(-|x|) * I_1(x)``: ascending series up to 700, asymptotic beyond."""
    x = float(x)
    if x < 0.0:
        return -i1e(-x)
    if x == 0.0:
        return 0.0
    if x <= _SERIES_CAP:
        half_sq = 0.25 * x * x
        term = 0.5 * x * math.exp(-x)
        total = term
        k = 0
        while True:
            term *= half_sq / ((k + 1) * (k + 2))
            total += term
            k += 1
            if term < 1e-17 * total:
                return total
    # Hankel expansion, 4 nu^2 = 4
    total = 1.0
    term = 1.0
    for k in range(1, 60):
        new = -term * (4.0 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(new) >= abs(term):
            break
        total += new
        term = new
        if abs(term) < 1e-17:
            break
    return total / (_SQRT_2PI * math.sqrt(x))


def _checked(idx, n):
    if not isinstance(idx, (int, np.integer)) or not 0 <= idx < n:
        raise ValueError(f"policy hook returned index {idx!r}, expected 0..{n - 1}")
    return int(idx)


def simulate_events(times, kinds, buf_r, buf_e, order_r, order_e, overflow_r, overflow_e, hook=None):
    """Run the matching/eviction loop over a merged arrival sequence.

    ``kinds[i]`` is 0 for a request and 1 for an EPR pair.  Returns
    ``(departure, outcome, phase, seen)`` arrays; ``seen[i]`` is the signed
    occupancy (requests minus pairs) found by arrival ``i``.

    ``hook(kind, action, ages, now)`` overrides the built-in choice: for
    ``action == "match"`` it picks among the stored items of ``kind`` (oldest
    first); for ``"evict"`` the arriving item is appended last with age 0.
    """
    n = len(times)
    departure = np.full(n, np.nan)
    outcome = np.full(n, IN_SYSTEM, dtype=np.int8)
    phase = np.full(n, NO_PHASE, dtype=np.int8)
    seen = np.zeros(n, dtype=np.int64)
    caps = (buf_r, buf_e)
    orders = (order_r, order_e)
    overflows = (overflow_r, overflow_e)
    buffers = ([], [])  # arrival-ordered, oldest first
    times_l = times.tolist() if hasattr(times, "tolist") else list(times)
    kinds_l = kinds.tolist() if hasattr(kinds, "tolist") else list(kinds)
    dep_l = departure.tolist()
    out_l = outcome.tolist()
    ph_l = phase.tolist()
    seen_l = seen.tolist()

    for i in range(n):
        t = times_l[i]
        k = kinds_l[i]
        own = buffers[k]
        other = buffers[1 - k]
        seen_l[i] = len(buffers[0]) - len(buffers[1])
        if own and other:
            raise InvariantViolation(f"both buffers non-empty before event {i}")
        if other:
            if hook is not None:
                idx = _checked(hook(1 - k, "match", [t - times_l[j] for j in other], t), len(other))
                partner = other.pop(idx)
            elif orders[1 - k] == FIFO:
                partner = other.pop(0)
            else:
                partner = other.pop()
            dep_l[i] = t
            dep_l[partner] = t
            out_l[i] = SERVED
            out_l[partner] = SERVED
            ph_l[i] = 1 - k
            ph_l[partner] = 1 - k
            continue
        cap = caps[k]
        if cap == UNBOUNDED or len(own) < cap:
            own.append(i)
            if cap == UNBOUNDED and len(own) > STABILITY_GUARD:
                raise OverflowError("unbounded buffer exceeded the stability guard")
            continue
        # overflow
        if hook is not None and cap > 0:
            ages = [t - times_l[j] for j in own] + [0.0]
            idx = _checked(hook(k, "evict", ages, t), len(ages))
            if idx == len(own):
                victim = i
            else:
                victim = own.pop(idx)
                own.append(i)
        elif overflows[k] == PUSHOUT and cap > 0:
            victim = own.pop(0)
            own.append(i)
        else:
            victim = i
        dep_l[victim] = t
        out_l[victim] = PUSHED_OUT
        if cap != UNBOUNDED and len(own) > cap:
            raise InvariantViolation(f"buffer {k} above capacity at event {i}")

    departure[:] = dep_l
    outcome[:] = out_l
    phase[:] = ph_l
    seen[:] = seen_l
    return departure, outcome, phase, seen
