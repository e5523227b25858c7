"""Compiled inner loops for the momentum integrator.

The integrator is fourth-order Runge-Kutta in integrating-factor (Lawson)
form: the constant linear part of the vector field is carried exactly by the
precomputed propagator ``E = exp(A h / 2)`` and classical RK4 is applied to
the remainder.  Passing ``E = I`` with the drift folded into ``cdrift``
recovers plain RK4.  The sensitivity matrix is advanced with the same stages,
so it is the exact derivative of the discrete map.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _matvec(A, x, out):
    n = A.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True, inline="always")
def _matmul(A, B, out):
    n = A.shape[0]
    m = B.shape[1]
    for i in range(n):
        for k in range(m):
            s = 0.0
            for j in range(n):
                s += A[i, j] * B[j, k]
            out[i, k] = s


@njit(cache=True)
def _field(phi, Y, cdrift, W, w_cols, nzi, nzv, scale, with_sens, out, OUT, c, M, G, DS):
    # c = drift + canonical controls embedded in the 8-dim coefficient space
    for j in range(8):
        s = cdrift[j]
        for k in range(8):
            s += W[j, k] * phi[k]
        c[j] = s
    for l in range(8):
        for i in range(8):
            M[l, i] = 0.0
            G[l, i] = 0.0
    for n in range(nzi.shape[0]):
        j = nzi[n, 0]
        l = nzi[n, 1]
        i = nzi[n, 2]
        v = nzv[n]
        M[l, i] += c[j] * v
        G[l, j] += v * phi[i]
    for l in range(8):
        s = 0.0
        for i in range(8):
            s += M[l, i] * phi[i]
        out[l] = scale * s
    if with_sens:
        for l in range(8):
            for k in range(8):
                s = M[l, k]
                for jj in range(w_cols.shape[0]):
                    j = w_cols[jj]
                    s += G[l, j] * W[j, k]
                DS[l, k] = s
        _matmul(DS, Y, OUT)
        for l in range(8):
            for k in range(8):
                OUT[l, k] *= scale


@njit(cache=True)
def integrate(phi0, n_slices, substeps, h, E, cdrift, W, w_cols, nzi, nzv, scale, with_sens):
    """Advance ``phi`` (and optionally ``dphi/dphi0``) over ``n_slices`` slices.

    Returns ``(phis, sens, failed_slice)``; ``failed_slice`` is -1 on success or
    the index of the first slice whose end state is not finite.
    """
    phis = np.zeros((n_slices + 1, 8))
    if with_sens:
        sens = np.zeros((n_slices + 1, 8, 8))
    else:
        sens = np.zeros((1, 8, 8))
    phi = phi0.copy()
    Y = np.eye(8)
    phis[0] = phi
    sens[0] = Y

    c = np.zeros(8)
    M = np.zeros((8, 8))
    G = np.zeros((8, 8))
    DS = np.zeros((8, 8))
    k1 = np.zeros(8)
    g2 = np.zeros(8)
    g3 = np.zeros(8)
    g4 = np.zeros(8)
    K1 = np.zeros((8, 8))
    G2 = np.zeros((8, 8))
    G3 = np.zeros((8, 8))
    G4 = np.zeros((8, 8))
    Ey = np.zeros(8)
    Ek = np.zeros(8)
    E2y = np.zeros(8)
    tmp = np.zeros(8)
    x = np.zeros(8)
    EY = np.zeros((8, 8))
    EK = np.zeros((8, 8))
    E2Y = np.zeros((8, 8))
    TMP = np.zeros((8, 8))
    X = np.zeros((8, 8))
    half = 0.5 * h
    sixth = h / 6.0

    for k in range(n_slices):
        for _ in range(substeps):
            _field(phi, Y, cdrift, W, w_cols, nzi, nzv, scale, with_sens, k1, K1, c, M, G, DS)
            _matvec(E, phi, Ey)
            _matvec(E, k1, Ek)
            for i in range(8):
                x[i] = Ey[i] + half * Ek[i]
            if with_sens:
                _matmul(E, Y, EY)
                _matmul(E, K1, EK)
                for i in range(8):
                    for j in range(8):
                        X[i, j] = EY[i, j] + half * EK[i, j]
            _field(x, X, cdrift, W, w_cols, nzi, nzv, scale, with_sens, g2, G2, c, M, G, DS)
            for i in range(8):
                x[i] = Ey[i] + half * g2[i]
            if with_sens:
                for i in range(8):
                    for j in range(8):
                        X[i, j] = EY[i, j] + half * G2[i, j]
            _field(x, X, cdrift, W, w_cols, nzi, nzv, scale, with_sens, g3, G3, c, M, G, DS)
            _matvec(E, Ey, E2y)
            _matvec(E, g3, tmp)
            for i in range(8):
                x[i] = E2y[i] + h * tmp[i]
            if with_sens:
                _matmul(E, EY, E2Y)
                _matmul(E, G3, TMP)
                for i in range(8):
                    for j in range(8):
                        X[i, j] = E2Y[i, j] + h * TMP[i, j]
            _field(x, X, cdrift, W, w_cols, nzi, nzv, scale, with_sens, g4, G4, c, M, G, DS)
            # phi <- E^2 phi + h/6 (E^2 k1 + 2 E (g2 + g3) + g4)
            for i in range(8):
                tmp[i] = g2[i] + g3[i]
            _matvec(E, tmp, x)
            _matvec(E, Ek, tmp)
            for i in range(8):
                phi[i] = E2y[i] + sixth * (tmp[i] + 2.0 * x[i] + g4[i])
            if with_sens:
                for i in range(8):
                    for j in range(8):
                        TMP[i, j] = G2[i, j] + G3[i, j]
                _matmul(E, TMP, X)
                _matmul(E, EK, TMP)
                for i in range(8):
                    for j in range(8):
                        Y[i, j] = E2Y[i, j] + sixth * (TMP[i, j] + 2.0 * X[i, j] + G4[i, j])
        ok = True
        for i in range(8):
            if not np.isfinite(phi[i]):
                ok = False
        if with_sens:
            for i in range(8):
                for j in range(8):
                    if not np.isfinite(Y[i, j]):
                        ok = False
        if not ok:
            return phis, sens, k
        phis[k + 1] = phi
        if with_sens:
            sens[k + 1] = Y
    return phis, sens, -1


@njit(cache=True)
def forward_states(rho0, U):
    n = U.shape[0]
    out = np.empty((n + 1, 3, 3), dtype=np.complex128)
    out[0] = rho0
    rho = rho0.copy()
    for k in range(n):
        rho = U[k] @ rho @ U[k].conj().T
        out[k + 1] = rho
    return out


@njit(cache=True)
def backward_states(rho_target, U):
    n = U.shape[0]
    out = np.empty((n + 1, 3, 3), dtype=np.complex128)
    out[n] = rho_target
    lam = rho_target.copy()
    for k in range(n - 1, -1, -1):
        lam = U[k].conj().T @ lam @ U[k]
        out[k] = lam
    return out
