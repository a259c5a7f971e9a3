"""Cycle loop of the accelerator pipeline with numpy-vectorised stages.

Same schedule and register timing as ``pipeline_nb``; each stage works on
whole 16x16 blocks instead of scalar loops.
"""
from collections import deque

import numpy as np

from .pipeline_nb import BUBBLE, END, FAULT_NONE, FAULT_SIDEBAND_FIFO, FAULT_WEIGHT_FIFO


class _Fail(Exception):
    pass


def run(sched, tile_w, inj, mem0, thr, out_ord, n_out, cfg, levels, lo=-128, hi=127):
    from ..cyclesim import NeuronArrayState, neuron_unit_step, reduce_pairs

    S = len(sched.tile)
    T = inj.shape[0]
    R = mem0.shape[0]
    L, A, depth = cfg.bram_latency, cfg.adder_tree_latency, cfg.fifo_depth
    n_cyc = S + L + A + 3
    tile_w = np.asarray(tile_w, dtype=np.int64)
    bit_idx = np.arange(16)

    words = np.zeros((T, R), dtype=np.int64)
    out_mem = np.zeros((T, n_out), dtype=np.int64)
    cycles = np.zeros(T, dtype=np.int64)
    resets = np.zeros(T, dtype=np.int64)
    issued = np.zeros(T, dtype=np.int64)
    stalls = np.zeros(T, dtype=np.int64)
    status = np.zeros(5, dtype=np.int64)
    mem = np.asarray(mem0, dtype=np.int64).copy()
    banks = np.zeros((2, R), dtype=np.int64)

    def fault(code, t, c):
        status[0], status[1], status[2] = code, t, c
        raise _Fail

    try:
        for t in range(T):
            cur, nxt = banks[(t + 1) % 2], banks[t % 2]
            nxt[:] = 0
            idx_line = deque([BUBBLE] * L, maxlen=L)
            wfifo, sfifo = deque(), deque()
            tree = [None] * A          # (slot, partial sums (16, width)) per stage
            fetched = None             # (slot, spike word, membranes)
            meta = {}                  # slot -> (reset, membranes)
            state = NeuronArrayState()
            wb = None

            for c in range(n_cyc):
                if wb is not None:
                    row, word, m = wb
                    nxt[row] = word
                    mem[row] = m
                    if out_ord[row] >= 0:
                        out_mem[t, out_ord[row]] = word
                    wb = None

                head = tree[A - 1]
                if head is not None:
                    slot, sums = head
                    if sfifo.popleft() != slot:
                        fault(99, t, c)
                    reset, m_in = meta.pop(slot)
                    y = sched.y[slot]
                    injection = inj[t, y] if reset else 0
                    out = neuron_unit_step(state, sums[:, 0], injection, reset, thr, m_in, lo, hi)
                    if out is not None:
                        wb = (y, out[0], out[1])
                        resets[t] += 1

                for k in range(A - 1, 0, -1):
                    prev = tree[k - 1]
                    tree[k] = None if prev is None else (prev[0], reduce_pairs(prev[1], levels[k]))

                arriving = idx_line[0]  # oldest read, issued L cycles ago
                if fetched is not None:
                    slot, word, m_in = fetched
                    reset = arriving == END or (arriving >= 0 and sched.y[arriving] != sched.y[slot])
                    meta[slot] = (bool(reset), m_in)
                    tk = sched.tile[slot]
                    if tk >= 0:
                        active = ((word >> bit_idx) & 1).astype(bool)
                        products = np.where(active[:, None], tile_w[tk], 0).T  # (post, pre)
                    else:
                        products = np.zeros((16, 16), dtype=np.int64)
                    tree[0] = (slot, reduce_pairs(products, levels[0]))
                    sfifo.append(slot)
                    status[4] = max(status[4], len(sfifo))
                    if len(sfifo) > depth:
                        fault(FAULT_SIDEBAND_FIFO, t, c)
                else:
                    tree[0] = None

                if arriving >= 0:
                    if wfifo.popleft() != arriving:
                        fault(99, t, c)
                    word = int(cur[sched.x[arriving]]) if sched.tile[arriving] >= 0 else 0
                    fetched = (arriving, word, mem[sched.y[arriving]].copy())
                else:
                    fetched = None

                if c < S:
                    idx_line.append(c)
                    wfifo.append(c)
                    issued[t] += sched.tile[c] >= 0
                    status[3] = max(status[3], len(wfifo))
                    if len(wfifo) > depth:
                        fault(FAULT_WEIGHT_FIFO, t, c)
                else:
                    idx_line.append(END if c == S else BUBBLE)
                cycles[t] += 1

            if wb is not None or fetched is not None or sfifo or wfifo:
                fault(98, t, n_cyc)
            words[t] = nxt
    except _Fail:
        pass
    return words, out_mem, cycles, resets, issued, stalls, status, mem


__all__ = ["run", "FAULT_NONE"]
