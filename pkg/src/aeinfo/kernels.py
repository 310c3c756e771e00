"""Hot numeric kernels, each in a numba flavour and a pure-numpy flavour.

The two flavours implement the same algorithm.  ``get(name, backend)`` picks one;
``backend=None`` follows the ``AEINFO_DISABLE_NUMBA`` switch.
"""
import numpy as np

from ._accel import default_backend, njit

EPS = np.finfo(np.float64).eps
SAFE_MIN = np.finfo(np.float64).tiny


# ---------------------------------------------------------------------------
# pairwise squared distances
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sqdist_nb(x):
    n, dim = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(dim):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out


def _sqdist_np(x, block_bytes=32 * 2**20):
    n, dim = x.shape
    out = np.empty((n, n))
    step = max(1, int(block_bytes // (8 * max(1, n * dim))))
    for start in range(0, n, step):
        diff = x[start:start + step, None, :] - x[None, :, :]
        out[start:start + step] = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver
# ---------------------------------------------------------------------------

@njit(cache=True)
def _jacobi_nb(a, tol, max_sweeps, want_vectors):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    thresh = tol * fro
    sweeps = 0
    while True:
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                if abs(a[i, j]) > off:
                    off = abs(a[i, j])
        if off < thresh or fro == 0.0 or sweeps >= max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < thresh:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                if want_vectors:
                    for k in range(n):
                        vkp = v[k, p]
                        vkq = v[k, q]
                        v[k, p] = c * vkp - s * vkq
                        v[k, q] = s * vkp + c * vkq
        sweeps += 1
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps, off


def _round_robin(n):
    """Rounds of disjoint (p, q) pairs covering every pair once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(players[: m // 2])
        q = np.array(players[m // 2:][::-1])
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi_np(a, tol, max_sweeps, want_vectors):
    # Same rotations as the numba kernel, applied n/2 at a time in
    # tournament order so each round is a handful of vectorized updates.
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    thresh = tol * fro
    rounds = _round_robin(n)
    iu = np.triu_indices(n, 1)
    sweeps = 0
    while True:
        off = np.abs(a[iu]).max() if n > 1 else 0.0
        if off < thresh or fro == 0.0 or sweeps >= max_sweeps:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) >= thresh
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = 1.0 / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(theta < 0.0, -t, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = ap * c - aq * s
            a[:, q] = ap * s + aq * c
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            if want_vectors:
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c - vq * s
                v[:, q] = vp * s + vq * c
        sweeps += 1
    return np.diag(a).copy(), v, sweeps, off


# ---------------------------------------------------------------------------
# eigenvalues only: Householder tridiagonalization + Sturm bisection
# ---------------------------------------------------------------------------

@njit(cache=True)
def _tridiagonalize_nb(a):
    a = a.copy()
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    v = np.zeros(n)
    p = np.zeros(n)
    for k in range(n - 2):
        m = n - k - 1
        alpha = 0.0
        for i in range(m):
            alpha += a[k + 1 + i, k] ** 2
        alpha = np.sqrt(alpha)
        d[k] = a[k, k]
        if alpha == 0.0:
            e[k] = 0.0
            continue
        if a[k + 1, k] > 0.0:
            alpha = -alpha
        vn = 0.0
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        for i in range(m):
            vn += v[i] * v[i]
        vn = np.sqrt(vn)
        for i in range(m):
            v[i] /= vn
        kk = 0.0
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += a[k + 1 + i, k + 1 + j] * v[j]
            p[i] = acc
            kk += v[i] * acc
        for i in range(m):
            p[i] -= kk * v[i]
        for i in range(m):
            for j in range(m):
                a[k + 1 + i, k + 1 + j] -= 2.0 * (v[i] * p[j] + p[i] * v[j])
        e[k] = alpha
    if n >= 2:
        d[n - 2] = a[n - 2, n - 2]
        e[n - 2] = a[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = a[n - 1, n - 1]
    return d, e


def _tridiagonalize_np(a):
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(max(n - 1, 0))
    for k in range(n - 2):
        x = a[k + 1:, k]
        alpha = np.sqrt(x @ x)
        d[k] = a[k, k]
        if alpha == 0.0:
            continue
        if x[0] > 0.0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        v /= np.sqrt(v @ v)
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        p -= (v @ p) * v
        sub -= 2.0 * (np.outer(v, p) + np.outer(p, v))
        e[k] = alpha
    if n >= 2:
        d[n - 2] = a[n - 2, n - 2]
        e[n - 2] = a[n - 1, n - 2]
    if n >= 1:
        d[n - 1] = a[n - 1, n - 1]
    return d, e


def _gershgorin(d, e):
    r = np.zeros_like(d)
    r[:-1] += np.abs(e)
    r[1:] += np.abs(e)
    return float(np.min(d - r)), float(np.max(d + r))


@njit(cache=True)
def _sturm_count_nb(d, e2, x, pivmin):
    q = d[0] - x
    cnt = 1 if q < 0.0 else 0
    for i in range(1, d.shape[0]):
        if abs(q) < pivmin:
            q = -pivmin
        q = d[i] - x - e2[i - 1] / q
        if q < 0.0:
            cnt += 1
    return cnt


@njit(cache=True)
def _bisect_nb(d, e, lo, hi, max_iter):
    n = d.shape[0]
    e2 = e * e
    big = max(abs(lo), abs(hi))
    pivmin = SAFE_MIN * max(1.0, np.max(e2) if e2.shape[0] else 1.0)
    abstol = 2.0 * EPS * big
    w = np.empty(n)
    for k in range(n):
        a, b = lo, hi
        for _ in range(max_iter):
            if b - a <= abstol + 2.0 * EPS * max(abs(a), abs(b)):
                break
            mid = 0.5 * (a + b)
            if _sturm_count_nb(d, e2, mid, pivmin) > k:
                b = mid
            else:
                a = mid
        w[k] = 0.5 * (a + b)
    return w


def _bisect_np(d, e, lo, hi, max_iter):
    n = d.shape[0]
    e2 = e * e
    big = max(abs(lo), abs(hi))
    pivmin = SAFE_MIN * max(1.0, e2.max() if e2.size else 1.0)
    abstol = 2.0 * EPS * big
    k = np.arange(n)
    a = np.full(n, lo)
    b = np.full(n, hi)
    for _ in range(max_iter):
        open_ = (b - a) > abstol + 2.0 * EPS * np.maximum(np.abs(a), np.abs(b))
        if not open_.any():
            break
        mid = 0.5 * (a + b)
        q = d[0] - mid
        cnt = (q < 0.0).astype(np.int64)
        for i in range(1, n):
            q = np.where(np.abs(q) < pivmin, -pivmin, q)
            q = d[i] - mid - e2[i - 1] / q
            cnt += q < 0.0
        upper = cnt > k
        b = np.where(open_ & upper, mid, b)
        a = np.where(open_ & ~upper, mid, a)
    return 0.5 * (a + b)


def _eigvalsh_with(tridiag, bisect):
    def eigvalsh(a, max_iter=200):
        n = a.shape[0]
        if n == 0:
            return np.zeros(0)
        if n == 1:
            return np.array([float(a[0, 0])])
        d, e = tridiag(np.ascontiguousarray(a, dtype=np.float64))
        lo, hi = _gershgorin(d, e)
        span = max(hi - lo, abs(hi), abs(lo), SAFE_MIN)
        lo -= 2.0 * EPS * span
        hi += 2.0 * EPS * span
        return bisect(d, e, lo, hi, max_iter)
    return eigvalsh


_eigvalsh_nb = _eigvalsh_with(_tridiagonalize_nb, _bisect_nb)
_eigvalsh_np = _eigvalsh_with(_tridiagonalize_np, _bisect_np)


_REGISTRY = {
    "sqdist": {"numba": _sqdist_nb, "numpy": _sqdist_np},
    "jacobi": {"numba": _jacobi_nb, "numpy": _jacobi_np},
    "eigvalsh": {"numba": _eigvalsh_nb, "numpy": _eigvalsh_np},
}

BACKENDS = ("numba", "numpy")


def get(name, backend=None):
    backend = backend or default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    return _REGISTRY[name][backend]
