import numpy as np
from numba import njit


@njit(cache=True)
def _run_float(indptr, post, w, input_ids, inj, threshold, beta, trace):
    B, T, n_in = inj.shape
    N = indptr.shape[0] - 1
    spikes = np.zeros((B, T, N), dtype=np.uint8)
    mem = np.zeros((B, T, N) if trace else (0, 0, 0), dtype=np.float64)
    final = np.zeros((B, N), dtype=np.float64)
    cur = np.zeros(N, dtype=np.float64)
    for b in range(B):
        U = np.zeros(N, dtype=np.float64)
        prev = np.zeros(N, dtype=np.uint8)
        for t in range(T):
            cur[:] = 0.0
            for n in range(N):
                if prev[n]:
                    for k in range(indptr[n], indptr[n + 1]):
                        cur[post[k]] += w[k]
            for k in range(n_in):
                cur[input_ids[k]] += inj[b, t, k]
            for n in range(N):
                u = beta * U[n] + cur[n]
                if u >= threshold:
                    spikes[b, t, n] = 1
                    U[n] = 0.0
                else:
                    U[n] = u
                prev[n] = spikes[b, t, n]
            if trace:
                mem[b, t, :] = U
        final[b, :] = U
    return spikes, final, mem


@njit(cache=True)
def _run_int(indptr, post, w, input_ids, inj, threshold, lo, hi, trace):
    B, T, n_in = inj.shape
    N = indptr.shape[0] - 1
    spikes = np.zeros((B, T, N), dtype=np.uint8)
    mem = np.zeros((B, T, N) if trace else (0, 0, 0), dtype=np.int64)
    final = np.zeros((B, N), dtype=np.int64)
    cur = np.zeros(N, dtype=np.int64)
    for b in range(B):
        U = np.zeros(N, dtype=np.int64)
        prev = np.zeros(N, dtype=np.uint8)
        for t in range(T):
            cur[:] = 0
            for n in range(N):
                if prev[n]:
                    for k in range(indptr[n], indptr[n + 1]):
                        cur[post[k]] += w[k]
            for k in range(n_in):
                cur[input_ids[k]] += inj[b, t, k]
            for n in range(N):
                u = U[n] + cur[n]
                if u >= threshold:
                    spikes[b, t, n] = 1
                    U[n] = 0
                else:
                    U[n] = min(max(u, lo), hi)
                prev[n] = spikes[b, t, n]
            if trace:
                mem[b, t, :] = U
        final[b, :] = U
    return spikes, final, mem


def run(net, injections, integer, trace=False, lo=-128, hi=127):
    """Batched behavioral run. ``injections`` is ``(B, T, n_inputs)``."""
    order = np.argsort(net.pre, kind="stable")
    pre = net.pre[order]
    post = np.ascontiguousarray(net.post[order])
    indptr = np.zeros(net.neuron_count + 1, dtype=np.int64)
    np.add.at(indptr, pre + 1, 1)
    indptr = np.cumsum(indptr)
    ids = np.asarray(net.input_ids, dtype=np.int64)
    if integer:
        w = np.ascontiguousarray(net.weight[order].astype(np.int64))
        return _run_int(indptr, post, w, ids, np.ascontiguousarray(injections, dtype=np.int64),
                        np.int64(net.threshold), np.int64(lo), np.int64(hi), trace)
    w = np.ascontiguousarray(net.weight[order].astype(np.float64))
    return _run_float(indptr, post, w, ids, np.ascontiguousarray(injections, dtype=np.float64),
                      float(net.threshold), float(net.beta), trace)
