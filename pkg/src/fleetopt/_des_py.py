"""Pure-Python event loop of the yard simulator.

Reference implementation of the kernel also compiled from ``_des_core.pyx``;
both consume the same pre-sampled random inputs and must return identical
counts.
"""

import heapq
from collections import deque

N_CELLS = 6  # (type, site) pairs; cell = type * 3 + site
N_OUT = 14


def run_des(ev_time, ev_code, order_time, order_dur, order_u, offsets,
            idle0, parked0, cap, div_seq, div_off,
            defect_prob, warmup, horizon, wait):
    """Run the event loop and return the 14 outcome counters.

    Layout of the result: ext_shipments[2], defects, missed[2], full_park[2],
    served[2], generated[2], waiting[2], diverted_at_end.
    """
    ev_time = ev_time.tolist()
    ev_code = ev_code.tolist()
    order_time = order_time.tolist()
    order_dur = order_dur.tolist()
    order_u = order_u.tolist()
    head = [int(offsets[c]) for c in range(N_CELLS)]
    tail = list(head)
    idle = [int(v) for v in idle0]
    parked = [int(v) for v in parked0]
    cap = [int(v) for v in cap]
    div_seq = div_seq.tolist()
    diverted = [deque(div_seq[div_off[s]:div_off[s + 1]]) for s in range(3)]
    heap = []

    ext = [0, 0]
    missed = [0, 0]
    full = [0, 0]
    served = [0, 0]
    defects = 0

    def serve(c, t, owned):
        g = head[c]
        head[c] = g + 1
        i = c // 3
        a = order_time[g]
        if t >= warmup:
            served[i] += 1
        if t - a > wait and a + wait >= warmup:
            missed[i] += 1
        if owned:
            heapq.heappush(heap, (t + order_dur[g], g, c))
        elif t >= warmup:
            ext[i] += 1

    def free_spot(s, t):
        parked[s] -= 1
        q = diverted[s]
        while q:
            j = q.popleft()
            c = j * 3 + s
            if head[c] < tail[c]:
                serve(c, t, True)
            else:
                parked[s] += 1
                idle[c] += 1
                break

    def vehicle_return(t, g, c):
        nonlocal defects
        i = c // 3
        s = c - 3 * i
        if order_u[g] < defect_prob and t >= warmup:
            defects += 1
        if head[c] < tail[c]:
            serve(c, t, True)
        elif parked[s] < cap[s]:
            parked[s] += 1
            idle[c] += 1
        else:
            if t >= warmup:
                full[i] += 1
            diverted[s].append(i)

    for k in range(len(ev_time)):
        t = ev_time[k]
        while heap and heap[0][0] <= t:
            tr, g, c = heapq.heappop(heap)
            vehicle_return(tr, g, c)
        code = ev_code[k]
        if code < N_CELLS:
            c = code
            tail[c] += 1
            if idle[c] > 0:
                idle[c] -= 1
                serve(c, t, True)
                free_spot(c % 3, t)
        else:
            c = code - N_CELLS
            if head[c] < tail[c]:
                serve(c, t, False)

    while heap and heap[0][0] < horizon:
        tr, g, c = heapq.heappop(heap)
        vehicle_return(tr, g, c)

    waiting = [0, 0]
    for c in range(N_CELLS):
        i = c // 3
        waiting[i] += tail[c] - head[c]
        for g in range(head[c], tail[c]):
            a = order_time[g]
            if a + wait < horizon and a + wait >= warmup:
                missed[i] += 1

    generated = [0, 0]
    for c in range(N_CELLS):
        generated[c // 3] += int(offsets[c + 1] - offsets[c])
    n_div = sum(len(q) for q in diverted)
    return [ext[0], ext[1], defects, missed[0], missed[1], full[0], full[1],
            served[0], served[1], generated[0], generated[1],
            waiting[0], waiting[1], n_div]
