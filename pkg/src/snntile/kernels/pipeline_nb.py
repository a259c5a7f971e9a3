"""Cycle loop of the accelerator pipeline as a numba kernel.

Per clock, stages are updated back to front so each register moves one
stage: writeback commit -> neuron array -> adder tree -> operand fetch ->
index read / issue. FIFOs are modelled as queues of slot ids with an
occupancy check against ``fifo_depth``.
"""
import numpy as np
from numba import njit

FAULT_NONE = 0
FAULT_WEIGHT_FIFO = 1
FAULT_SIDEBAND_FIFO = 2
END = -2
BUBBLE = -1


@njit(cache=True)
def _run(slot_tile, slot_x, slot_y, tile_w, inj, mem0, thr, out_ord, n_out,
         bram_lat, tree_lat, levels, fifo_depth, lo, hi):
    S = slot_tile.shape[0]
    T = inj.shape[0]
    R = mem0.shape[0]
    n_cyc = S + bram_lat + tree_lat + 3

    words = np.zeros((T, R), dtype=np.int64)
    out_mem = np.zeros((T, n_out), dtype=np.int64)
    cycles = np.zeros(T, dtype=np.int64)
    resets = np.zeros(T, dtype=np.int64)
    issued_tiles = np.zeros(T, dtype=np.int64)
    stalls = np.zeros(T, dtype=np.int64)
    status = np.zeros(5, dtype=np.int64)  # fault, t, cycle, peak weight fifo, peak sideband fifo

    mem = mem0.copy()
    banks = np.zeros((2, R), dtype=np.int64)

    idx_line = np.empty(bram_lat, dtype=np.int64)
    wfifo = np.empty(S + 1, dtype=np.int64)
    sfifo = np.empty(S + 1, dtype=np.int64)
    reset_of = np.zeros(S + 1, dtype=np.int64)
    fetch_word = np.zeros(S + 1, dtype=np.int64)
    fetch_mem = np.zeros((S + 1, 16), dtype=np.int64)
    tree_slot = np.empty(tree_lat, dtype=np.int64)
    tree_vals = np.zeros((tree_lat, 16, 16), dtype=np.int64)
    tree_width = np.zeros(tree_lat, dtype=np.int64)
    acc = np.zeros(16, dtype=np.int64)
    wb_mem = np.zeros(16, dtype=np.int64)
    stage_in = np.zeros((16, 16), dtype=np.int64)

    for t in range(T):
        cur = banks[(t + 1) % 2]
        nxt = banks[t % 2]
        nxt[:] = 0
        idx_line[:] = BUBBLE
        tree_slot[:] = BUBBLE
        w_head = 0
        w_tail = 0
        s_head = 0
        s_tail = 0
        fetch_slot = BUBBLE
        acc[:] = 0
        wb_valid = False
        wb_row = 0
        wb_word = 0

        for c in range(n_cyc):
            # 1. commit the writeback registered last cycle
            if wb_valid:
                nxt[wb_row] = wb_word
                for j in range(16):
                    mem[wb_row, j] = wb_mem[j]
                o = out_ord[wb_row]
                if o >= 0:
                    out_mem[t, o] = wb_word
                wb_valid = False

            # 2. neuron array consumes the adder-tree output
            s = tree_slot[tree_lat - 1]
            if s >= 0:
                got = sfifo[s_head]
                s_head += 1
                if got != s:
                    status[0] = 99
                    return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem
                for j in range(16):
                    acc[j] += tree_vals[tree_lat - 1, j, 0]
                if reset_of[s]:
                    y = slot_y[s]
                    word = 0
                    for j in range(16):
                        acc[j] += inj[t, y, j]
                        total = fetch_mem[s, j] + acc[j]
                        if total >= thr:
                            word |= 1 << j
                            wb_mem[j] = 0
                        else:
                            wb_mem[j] = min(max(total, lo), hi)
                        acc[j] = 0
                    wb_valid = True
                    wb_row = y
                    wb_word = word
                    resets[t] += 1

            # 3. adder tree shifts one stage; stage 0 takes the fetched operands
            for k in range(tree_lat - 1, 0, -1):
                tree_slot[k] = tree_slot[k - 1]
                width = tree_width[k - 1]
                for j in range(16):
                    for i in range(width):
                        stage_in[j, i] = tree_vals[k - 1, j, i]
                for _ in range(levels[k]):
                    width //= 2
                    for j in range(16):
                        for i in range(width):
                            stage_in[j, i] = stage_in[j, 2 * i] + stage_in[j, 2 * i + 1]
                tree_width[k] = width
                for j in range(16):
                    for i in range(width):
                        tree_vals[k, j, i] = stage_in[j, i]

            arriving = idx_line[bram_lat - 1]
            if fetch_slot >= 0:
                # RESET closes the row when the next index differs or the stream ends
                if arriving == END:
                    reset_of[fetch_slot] = 1
                elif arriving >= 0 and slot_y[arriving] != slot_y[fetch_slot]:
                    reset_of[fetch_slot] = 1
                else:
                    reset_of[fetch_slot] = 0
                tk = slot_tile[fetch_slot]
                word = fetch_word[fetch_slot]
                for j in range(16):
                    for i in range(16):
                        if tk >= 0 and (word >> i) & 1:
                            stage_in[j, i] = tile_w[tk, i, j]
                        else:
                            stage_in[j, i] = 0
                width = 16
                for _ in range(levels[0]):
                    width //= 2
                    for j in range(16):
                        for i in range(width):
                            stage_in[j, i] = stage_in[j, 2 * i] + stage_in[j, 2 * i + 1]
                tree_width[0] = width
                for j in range(16):
                    for i in range(width):
                        tree_vals[0, j, i] = stage_in[j, i]
                tree_slot[0] = fetch_slot
                sfifo[s_tail] = fetch_slot
                s_tail += 1
                occ = s_tail - s_head
                if occ > status[4]:
                    status[4] = occ
                if occ > fifo_depth:
                    status[0] = FAULT_SIDEBAND_FIFO
                    status[1] = t
                    status[2] = c
                    return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem
            else:
                tree_slot[0] = BUBBLE

            # 4. operand fetch for the index that just came back from BRAM
            if arriving >= 0:
                got = wfifo[w_head]
                w_head += 1
                if got != arriving:
                    status[0] = 99
                    return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem
                fetch_word[arriving] = cur[slot_x[arriving]] if slot_tile[arriving] >= 0 else 0
                y = slot_y[arriving]
                for j in range(16):
                    fetch_mem[arriving, j] = mem[y, j]
                fetch_slot = arriving
            else:
                fetch_slot = BUBBLE

            # 5. control unit: shift the index read line, issue the next slot
            for k in range(bram_lat - 1, 0, -1):
                idx_line[k] = idx_line[k - 1]
            if c < S:
                idx_line[0] = c
                wfifo[w_tail] = c
                w_tail += 1
                if slot_tile[c] >= 0:
                    issued_tiles[t] += 1
                occ = w_tail - w_head
                if occ > status[3]:
                    status[3] = occ
                if occ > fifo_depth:
                    status[0] = FAULT_WEIGHT_FIFO
                    status[1] = t
                    status[2] = c
                    return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem
            elif c == S:
                idx_line[0] = END
            else:
                idx_line[0] = BUBBLE
            cycles[t] += 1

        # last cycle of the timestep is the bank swap; the pipeline must be empty
        if wb_valid or fetch_slot >= 0 or s_head != s_tail or w_head != w_tail:
            status[0] = 98
            return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem
        for r in range(R):
            words[t, r] = nxt[r]
    return words, out_mem, cycles, resets, issued_tiles, stalls, status, mem


def run(sched, tile_w, inj, mem0, thr, out_ord, n_out, cfg, levels, lo=-128, hi=127):
    return _run(sched.tile, sched.x, sched.y, np.ascontiguousarray(tile_w, dtype=np.int64),
                np.ascontiguousarray(inj, dtype=np.int64), np.ascontiguousarray(mem0, dtype=np.int64),
                np.int64(thr), np.ascontiguousarray(out_ord, dtype=np.int64), n_out,
                cfg.bram_latency, cfg.adder_tree_latency, np.asarray(levels, dtype=np.int64),
                cfg.fifo_depth, lo, hi)
