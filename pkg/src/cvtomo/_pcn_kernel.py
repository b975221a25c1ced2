"""Compiled inner loop of the pCN sampler.

The per-step cost is dominated by the likelihood, evaluated as a single
real GEMV: q = P @ s, where P rows are the packed-real projectors of the
data records (float32) and s is the packed-real lossy density matrix. The
log-likelihood is accumulated from block products in float64, flooring
non-positive densities at 1e-300.

Everything here is single-threaded and runs in a fixed operation order so
that a chain is bitwise reproducible for a given seed and chunk plan.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _qr_phase_unitary(M):
    # Householder QR; returns Q * diag(phase(diag(R))), which is independent
    # of the QR sign convention (same U as any phase-corrected QR).
    D = M.shape[0]
    R = M.copy()
    Q = np.eye(D, dtype=np.complex128)
    v = np.empty(D, dtype=np.complex128)
    for j in range(D):
        s = 0.0
        for i in range(j, D):
            s += R[i, j].real ** 2 + R[i, j].imag ** 2
        nrm = np.sqrt(s)
        if nrm == 0.0:
            continue
        a = R[j, j]
        aa = np.sqrt(a.real**2 + a.imag**2)
        phase = a / aa if aa > 0.0 else 1.0 + 0.0j
        alpha = -phase * nrm
        for i in range(j, D):
            v[i] = R[i, j]
        v[j] = v[j] - alpha
        vn = 0.0
        for i in range(j, D):
            vn += v[i].real ** 2 + v[i].imag ** 2
        if vn == 0.0:
            continue
        for c in range(j, D):
            w = 0.0 + 0.0j
            for i in range(j, D):
                w += np.conj(v[i]) * R[i, c]
            w *= 2.0 / vn
            for i in range(j, D):
                R[i, c] -= w * v[i]
        for c in range(D):
            w = 0.0 + 0.0j
            for i in range(j, D):
                w += v[i] * Q[c, i]
            w *= 2.0 / vn
            for i in range(j, D):
                Q[c, i] -= w * np.conj(v[i])
    U = np.empty((D, D), dtype=np.complex128)
    for j in range(D):
        d = R[j, j]
        ad = np.sqrt(d.real**2 + d.imag**2)
        ph = d / ad if ad > 0.0 else 1.0 + 0.0j
        for i in range(D):
            U[i, j] = Q[i, j] * ph
    return U


@njit(cache=True)
def _build_rho(z, dim):
    dsq = dim * dim
    G = z[:dsq].copy().reshape(dim, dim)
    M = z[dsq:].copy().reshape(dim, dim)
    U = _qr_phase_unitary(M)
    IU = U.copy()
    for i in range(dim):
        IU[i, i] += 1.0
    V = IU @ G
    rho = V @ np.conj(V.T)
    tr = 0.0
    for i in range(dim):
        tr += rho[i, i].real
    return rho / tr


@njit(cache=True)
def _pack_rho(rho, dim, out):
    idx = 0
    for m in range(dim):
        out[idx] = rho[m, m].real
        idx += 1
    for m in range(dim):
        for n in range(m + 1, dim):
            out[idx] = rho[m, n].real
            idx += 1
    for m in range(dim):
        for n in range(m + 1, dim):
            out[idx] = rho[m, n].imag
            idx += 1


@njit(cache=True)
def _log_likelihood_packed(P32, s32):
    K = P32.shape[0]
    if K == 0:
        return 0.0
    q = np.dot(P32, s32)
    ll = 0.0
    block = 1.0
    count = 0
    for k in range(K):
        qk = float(q[k])
        if qk < 1e-300:
            qk = 1e-300
        block *= qk
        count += 1
        if count == 16 or block < 1e-280 or block > 1e280:
            ll += np.log(block)
            block = 1.0
            count = 0
    if count > 0:
        ll += np.log(block)
    return ll


@njit(cache=True)
def _state_ll(z, dim, P32, L64, use_loss, s_work, s32_work):
    rho = _build_rho(z, dim)
    _pack_rho(rho, dim, s_work)
    if use_loss:
        sv = np.dot(L64, s_work)
    else:
        sv = s_work
    for i in range(dim * dim):
        s32_work[i] = np.float32(sv[i])
    return _log_likelihood_packed(P32, s32_work)


@njit(cache=True)
def initial_ll(z, dim, P32, L64, use_loss):
    s_work = np.empty(dim * dim, dtype=np.float64)
    s32_work = np.empty(dim * dim, dtype=np.float32)
    return _state_ll(z, dim, P32, L64, use_loss, s_work, s32_work)


@njit(cache=True)
def run_chunk(
    z,
    ll,
    beta,
    normals,
    unifs,
    P32,
    L64,
    use_loss,
    dim,
    step_start,
    burn_in,
    thin,
    out_z,
    out_ll,
    out_acc,
    kept,
    acc_post,
):
    """Advance the chain by len(unifs) steps, retaining every thin-th
    post-burn-in state. Returns (ll, kept, acc_post, acc_chunk)."""
    nsteps = unifs.shape[0]
    npar = z.shape[0]
    c1 = np.sqrt(1.0 - beta * beta)
    max_keep = out_ll.shape[0]
    s_work = np.empty(dim * dim, dtype=np.float64)
    s32_work = np.empty(dim * dim, dtype=np.float32)
    zp = np.empty(npar, dtype=np.complex128)
    acc_chunk = 0
    for t in range(nsteps):
        for j in range(npar):
            zp[j] = c1 * z[j] + beta * complex(normals[t, 2 * j], normals[t, 2 * j + 1])
        llp = _state_ll(zp, dim, P32, L64, use_loss, s_work, s32_work)
        step = step_start + t
        accepted = np.log(unifs[t]) < llp - ll
        if accepted:
            for j in range(npar):
                z[j] = zp[j]
            ll = llp
            acc_chunk += 1
            if step >= burn_in:
                acc_post += 1
        post = step - burn_in + 1
        if post >= 1 and post % thin == 0 and kept < max_keep:
            for j in range(npar):
                out_z[kept, j] = z[j]
            out_ll[kept] = ll
            out_acc[kept] = acc_post
            kept += 1
    return ll, kept, acc_post, acc_chunk
