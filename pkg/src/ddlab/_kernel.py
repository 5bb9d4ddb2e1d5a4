"""Compiled mini-batch Adam loop over one epoch.

Mirrors ``nn.forward`` / ``nn.backward`` / ``nn.adam_step`` without the
per-step Python overhead. ``tests/test_trainer.py`` checks it against the
reference numpy path.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _adam_slice(params, m, v, g, base, beta1, beta2, step_size, eps_hat):
    for k in range(g.shape[0]):
        gk = g[k]
        i = base + k
        mk = beta1 * m[i] + (1.0 - beta1) * gk
        vk = beta2 * v[i] + (1.0 - beta2) * (gk * gk)
        m[i] = mk
        v[i] = vk
        params[i] -= step_size * mk / (np.sqrt(vk) + eps_hat)


@njit(cache=True)
def _run_epoch(params, m, v, step, lr, beta1, beta2, eps,
               x, perm, batch_size, max_new_steps,
               w_off, b_off, n_out, n_in, act):
    """Run up to ``max_new_steps`` batches of one shuffled epoch.

    Returns ``(steps_taken, last_batch_loss)``. ``params``, ``m`` and ``v``
    are updated in place.
    """
    n_layers = n_out.shape[0]
    n_rows = perm.shape[0]
    n_feat = x.shape[1]
    taken = 0
    last_loss = 0.0
    start = 0
    while start < n_rows and taken < max_new_steps:
        stop = min(start + batch_size, n_rows)
        bsz = stop - start
        xb = np.empty((bsz, n_feat))
        for r in range(bsz):
            xb[r, :] = x[perm[start + r], :]

        inputs = []
        pres = []
        a = xb
        for j in range(n_layers):
            W = params[w_off[j]:w_off[j] + n_out[j] * n_in[j]].reshape((n_out[j], n_in[j]))
            b = params[b_off[j]:b_off[j] + n_out[j]]
            inputs.append(a)
            z = np.dot(a, W.T)
            for r in range(bsz):
                for c in range(n_out[j]):
                    z[r, c] += b[c]
            pres.append(z)
            if act[j]:
                a = np.maximum(z, 0.0)
            else:
                a = z

        scale = 2.0 / (bsz * n_feat)
        delta = (a - xb) * scale
        loss = 0.0
        for r in range(bsz):
            for c in range(n_feat):
                e = a[r, c] - xb[r, c]
                loss += e * e
        last_loss = loss / (bsz * n_feat)

        step += 1
        root_c2 = np.sqrt(1.0 - beta2 ** step)
        step_size = lr * root_c2 / (1.0 - beta1 ** step)
        eps_hat = eps * root_c2
        for j in range(n_layers - 1, -1, -1):
            if act[j]:
                zj = pres[j]
                for r in range(bsz):
                    for c in range(n_out[j]):
                        if zj[r, c] <= 0.0:
                            delta[r, c] = 0.0
            gW = np.dot(delta.T, inputs[j]).ravel()
            # propagate through the pre-update weights before touching them
            if j > 0:
                W = params[w_off[j]:w_off[j] + n_out[j] * n_in[j]].reshape((n_out[j], n_in[j]))
                delta_next = np.dot(delta, W)
            gb = np.zeros(n_out[j])
            for r in range(bsz):
                for c in range(n_out[j]):
                    gb[c] += delta[r, c]
            _adam_slice(params, m, v, gW, w_off[j], beta1, beta2, step_size, eps_hat)
            _adam_slice(params, m, v, gb, b_off[j], beta1, beta2, step_size, eps_hat)
            if j > 0:
                delta = delta_next

        taken += 1
        start = stop
    return taken, last_loss
