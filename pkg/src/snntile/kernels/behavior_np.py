import numpy as np


def run(net, injections, integer, trace=False, lo=-128, hi=127):
    """Batched behavioral run, vectorised over the batch axis.

    Synaptic input is a dense matmul restricted to neurons that actually
    send or receive synapses, which keeps layered nets cheap.
    """
    dtype = np.int64 if integer else np.float64
    inj = np.asarray(injections, dtype=dtype)
    B, T, _ = inj.shape
    N = net.neuron_count
    senders, pre_loc = np.unique(net.pre, return_inverse=True)
    receivers, post_loc = np.unique(net.post, return_inverse=True)
    wc = np.zeros((len(senders), len(receivers)), dtype=dtype)
    np.add.at(wc, (pre_loc, post_loc), net.weight.astype(dtype))
    ids = np.asarray(net.input_ids, dtype=np.int64)

    spikes = np.zeros((B, T, N), dtype=np.uint8)
    mem = np.zeros((B, T, N) if trace else (0, 0, 0), dtype=dtype)
    U = np.zeros((B, N), dtype=dtype)
    prev = np.zeros((B, N), dtype=dtype)
    thr = net.threshold
    for t in range(T):
        cur = np.zeros((B, N), dtype=dtype)
        if len(senders):
            cur[:, receivers] = prev[:, senders] @ wc
        cur[:, ids] += inj[:, t, :]
        u = U + cur if integer else net.beta * U + cur
        fired = u >= thr
        if integer:
            u = np.clip(u, lo, hi)
        U = np.where(fired, 0, u).astype(dtype)
        spikes[:, t, :] = fired
        prev = fired.astype(dtype)
        if trace:
            mem[:, t, :] = U
    return spikes, U, mem
