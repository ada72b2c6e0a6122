"""Compiled right-hand sides and Dormand-Prince 5(4) step for the ODE systems.

Systems are selected by an integer code so a single compiled step function
serves all of them. State layouts (``n`` is the ambient dimension):

* ``SPHERE_EXTREMAL``/``EUCLID_EXTREMAL``: ``[x, x', X, X']`` (4n)
* ``SO3_REDUCED``: ``[V, W]`` (6)
* ``SO3_FRAME``: ``[V, W, R.ravel()]`` (15)
* ``SPHERE_CUBIC``/``EUCLID_CUBIC``: ``[x, x', A, B]`` with ``A`` the
  covariant acceleration and ``B`` its covariant derivative (4n)

Parameters ``p`` are ``[z]`` for extremals and ``[z, C0, C1, C2]`` for SO(3).
"""
import numpy as np
from numba import njit

SPHERE_EXTREMAL = 0
EUCLID_EXTREMAL = 1
SO3_REDUCED = 2
SO3_FRAME = 3
SPHERE_CUBIC = 4
EUCLID_CUBIC = 5

# Dormand-Prince 5(4) tableau
C_NODES = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A_TAB = np.array([
    [0.0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
B_SOL = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E_ERR = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200,
                  22 / 525, -1 / 40])
# continuous extension: y(t + s h) = y + h * K.T @ (P @ [s, s^2, s^3, s^4])
P_DENSE = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def rhs(code, y, p, n, thr):
    dy = np.empty_like(y)
    if code == SPHERE_EXTREMAL or code == EUCLID_EXTREMAL:
        curv = 1.0 if code == SPHERE_EXTREMAL else 0.0
        z = p[0]
        x = y[0:n]
        v = y[n:2 * n]
        X = y[2 * n:3 * n]
        Xd = y[3 * n:4 * n]
        nX = np.sqrt(_dot(X, X))
        scale = z / nX if nX > thr else 0.0
        vv = _dot(v, v)
        acc = scale * X - curv * vv * x
        coef = curv * (_dot(acc, X) + 2.0 * _dot(v, Xd))
        for i in range(n):
            dy[i] = v[i]
            dy[n + i] = acc[i]
            dy[2 * n + i] = Xd[i]
            dy[3 * n + i] = -curv * vv * X[i] - coef * x[i]
    elif code == SO3_REDUCED or code == SO3_FRAME:
        z = p[0]
        V0, V1, V2 = y[0], y[1], y[2]
        W0, W1, W2 = y[3], y[4], y[5]
        nW = np.sqrt(W0 * W0 + W1 * W1 + W2 * W2)
        scale = z / nW if nW > thr else 0.0
        dy[0] = scale * W0
        dy[1] = scale * W1
        dy[2] = scale * W2
        dy[3] = W1 * V2 - W2 * V1 + p[1]
        dy[4] = W2 * V0 - W0 * V2 + p[2]
        dy[5] = W0 * V1 - W1 * V0 + p[3]
        if code == SO3_FRAME:
            # R' = R hat(V), R stored row-major in y[6:15]
            for r in range(3):
                a = y[6 + 3 * r]
                b = y[7 + 3 * r]
                c = y[8 + 3 * r]
                dy[6 + 3 * r] = b * V2 - c * V1
                dy[7 + 3 * r] = c * V0 - a * V2
                dy[8 + 3 * r] = a * V1 - b * V0
    else:
        curv = 1.0 if code == SPHERE_CUBIC else 0.0
        x = y[0:n]
        v = y[n:2 * n]
        A = y[2 * n:3 * n]
        B = y[3 * n:4 * n]
        vv = _dot(v, v)
        av = _dot(A, v)
        va = curv * av
        vb = curv * _dot(v, B)
        for i in range(n):
            dy[i] = v[i]
            dy[n + i] = A[i] - curv * vv * x[i]
            dy[2 * n + i] = B[i] - va * x[i]
            dy[3 * n + i] = curv * (-vv * A[i] + av * v[i]) - vb * x[i]
    return dy


@njit(cache=True)
def project(code, y, n):
    """Pull a state back onto its constraint set (sphere systems, frames)."""
    out = y.copy()
    if code == SPHERE_EXTREMAL or code == SPHERE_CUBIC:
        nx = np.sqrt(_dot(y[0:n], y[0:n]))
        x = y[0:n] / nx
        out[0:n] = x
        v = y[n:2 * n] - _dot(y[n:2 * n], x) * x
        out[n:2 * n] = v
        F = y[2 * n:3 * n] - _dot(y[2 * n:3 * n], x) * x
        out[2 * n:3 * n] = F
        G = y[3 * n:4 * n]
        if code == SPHERE_EXTREMAL:
            # keeps <x', X> + <x, X'> = 0
            out[3 * n:4 * n] = G - (_dot(v, F) + _dot(x, G)) * x
        else:
            out[3 * n:4 * n] = G - _dot(G, x) * x
    elif code == SO3_FRAME:
        R = y[6:15].copy().reshape((3, 3))
        U, s, Vt = np.linalg.svd(R)
        Rn = U @ Vt
        out[6:15] = Rn.ravel()
    return out


@njit(cache=True)
def attempt(code, y, f, h, p, n, thr, rtol, atol):
    """One Dormand-Prince step of size ``h`` from ``y`` with ``f = rhs(y)``.

    Returns the new state, the stage matrix ``K`` (last row is the FSAL
    derivative at the new state) and the scaled RMS error norm.
    """
    d = y.shape[0]
    K = np.empty((7, d))
    K[0] = f
    for s in range(1, 7):
        ys = y.copy()
        for j in range(s):
            a = A_TAB[s, j]
            if a != 0.0:
                for i in range(d):
                    ys[i] += h * a * K[j, i]
        if s == 6:
            y_new = ys
        K[s] = rhs(code, ys, p, n, thr)
    err = 0.0
    for i in range(d):
        e = 0.0
        for j in range(7):
            e += E_ERR[j] * K[j, i]
        e *= h
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        err += (e / sc) ** 2
    err = np.sqrt(err / d)
    return y_new, K, err


@njit(cache=True)
def field_slice(code, n):
    """Start index of the singular field (X or W) in the state, or -1."""
    if code == SPHERE_EXTREMAL or code == EUCLID_EXTREMAL:
        return 2 * n
    if code == SO3_REDUCED or code == SO3_FRAME:
        return 3
    return -1


@njit(cache=True)
def segment_min_norm(code, y0, y1, n):
    """Minimum norm of the singular field on the chord between two states.

    Returns ``(min_norm, s)`` with ``s`` in [0, 1] the chord parameter.
    """
    k = field_slice(code, n)
    if k < 0:
        return np.inf, 0.0
    m = 3 if k == 3 else n
    a = y0[k:k + m]
    b = y1[k:k + m]
    d = b - a
    dd = _dot(d, d)
    s = 0.0
    if dd > 0.0:
        s = -_dot(a, d) / dd
        s = min(1.0, max(0.0, s))
    w = a + s * d
    return np.sqrt(_dot(w, w)), s


@njit(cache=True)
def field_rate(code, y, f, n):
    """d/dt of |field|^2 / 2 at a state."""
    k = field_slice(code, n)
    m = 3 if k == 3 else n
    return _dot(y[k:k + m], f[k:k + m])
