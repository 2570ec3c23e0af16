# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch kernels; mirror of ``_reference`` with identical semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

BACKEND = "cython"


cdef void _softmax_into(const double[:, :] S, double tau, bint transpose,
                        double[:, :] out) noexcept nogil:
    # out[i, j] = softmax over j of S[i, j], or of S[j, i] when transpose
    cdef Py_ssize_t n = out.shape[0], m = out.shape[1], i, j
    cdef double mx, s, v
    for i in range(n):
        mx = S[0, i] if transpose else S[i, 0]
        for j in range(1, m):
            v = S[j, i] if transpose else S[i, j]
            if v > mx:
                mx = v
        s = 0.0
        for j in range(m):
            v = S[j, i] if transpose else S[i, j]
            v = exp((v - mx) / tau)
            out[i, j] = v
            s += v
        for j in range(m):
            out[i, j] /= s


def softmax_rows(S, double tau):
    cdef const double[:, :] Sv = np.ascontiguousarray(S, dtype=np.float64)
    out = np.empty((Sv.shape[0], Sv.shape[1]), dtype=np.float64)
    _softmax_into(Sv, tau, False, out)
    return out


def clip_loss_grad(S, double tau):
    cdef const double[:, :] Sv = np.ascontiguousarray(S, dtype=np.float64)
    cdef Py_ssize_t n = Sv.shape[0], i, j
    P_row_a = np.empty((n, n), dtype=np.float64)
    P_colT_a = np.empty((n, n), dtype=np.float64)
    grad_a = np.empty((n, n), dtype=np.float64)
    cdef double[:, :] P_row = P_row_a
    cdef double[:, :] P_colT = P_colT_a
    cdef double[:, :] grad = grad_a
    cdef double loss = 0.0
    cdef double scale = 1.0 / (n * tau)
    with nogil:
        _softmax_into(Sv, tau, False, P_row)
        _softmax_into(Sv, tau, True, P_colT)
        for i in range(n):
            loss -= log(P_row[i, i]) + log(P_colT[i, i])
            for j in range(n):
                grad[i, j] = (P_row[i, j] + P_colT[j, i]) * scale
            grad[i, i] -= 2.0 * scale
    return loss / n, grad_a


cdef double _dsym_backward(const double[:, :] Q, const double[:, :] P, double eps,
                           double tau, double[:, :] dS, bint transpose,
                           double scale, double[:] dq) noexcept nogil:
    # adds scale * d(sum_i Dsym(P_i || Q_i))/dS into dS, returns the summed divergence
    cdef Py_ssize_t n = Q.shape[0], m = Q.shape[1], i, j
    cdef double total = 0.0, p, q, lp, lq, dot, g
    for i in range(n):
        dot = 0.0
        for j in range(m):
            p = P[i, j]
            q = Q[i, j]
            lp = log(p if p > eps else eps)
            lq = log(q if q > eps else eps)
            total += 0.5 * (p - q) * (lp - lq)
            if q > eps:
                dq[j] = 0.5 * (-(lp - lq) - (p - q) / q)
            else:
                dq[j] = -0.5 * (lp - lq)
            dot += dq[j] * q
        for j in range(m):
            g = scale * Q[i, j] * (dq[j] - dot) / tau
            if transpose:
                dS[j, i] += g
            else:
                dS[i, j] += g
    return total


def soft_loss_grad(S_gt, P_gg, P_tt, double tau, double eps):
    cdef const double[:, :] Sv = np.ascontiguousarray(S_gt, dtype=np.float64)
    cdef const double[:, :] Pg = np.ascontiguousarray(P_gg, dtype=np.float64)
    cdef const double[:, :] Pt = np.ascontiguousarray(P_tt, dtype=np.float64)
    cdef Py_ssize_t n = Sv.shape[0]
    Qgt_a = np.empty((n, n), dtype=np.float64)
    Qtg_a = np.empty((n, n), dtype=np.float64)
    grad_a = np.zeros((n, n), dtype=np.float64)
    cdef double[:, :] Qgt = Qgt_a
    cdef double[:, :] Qtg = Qtg_a
    cdef double[:, :] grad = grad_a
    scratch_a = np.empty(n, dtype=np.float64)
    cdef double[:] scratch = scratch_a
    cdef double scale = 1.0 / (2.0 * n)
    cdef double total
    with nogil:
        _softmax_into(Sv, tau, False, Qgt)
        _softmax_into(Sv, tau, True, Qtg)
        total = _dsym_backward(Qgt, Pg, eps, tau, grad, False, scale, scratch)
        total += _dsym_backward(Qtg, Pt, eps, tau, grad, True, scale, scratch)
    return total * scale, grad_a


def sample_without_replacement(weights, Py_ssize_t k, uniforms):
    cdef const double[:] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[:] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0], d, i, pick, n_alive, last_pos, r
    alive_a = np.ones(n, dtype=np.uint8)
    chosen_a = np.empty(k, dtype=np.int64)
    cdef unsigned char[:] alive = alive_a
    cdef long long[:] chosen = chosen_a
    cdef double total, target, acc
    with nogil:
        for d in range(k):
            total = 0.0
            n_alive = 0
            last_pos = -1
            for i in range(n):
                if alive[i]:
                    total += w[i]
                    n_alive += 1
                    if w[i] > 0.0:
                        last_pos = i
            pick = -1
            if total > 0.0:
                target = u[d] * total
                acc = 0.0
                for i in range(n):
                    if alive[i]:
                        acc += w[i]
                        if acc > target:
                            pick = i
                            break
                if pick < 0:
                    pick = last_pos
            else:
                r = <Py_ssize_t>(u[d] * n_alive)
                if r > n_alive - 1:
                    r = n_alive - 1
                for i in range(n):
                    if alive[i]:
                        if r == 0:
                            pick = i
                            break
                        r -= 1
            alive[pick] = 0
            chosen[d] = pick
    return chosen_a


def pairwise_auc(pos, neg):
    # sorted sweep: lo counts negatives strictly below p[a], hi those at or below
    cdef const double[:] p = np.sort(np.asarray(pos, dtype=np.float64))
    cdef const double[:] q = np.sort(np.asarray(neg, dtype=np.float64))
    cdef Py_ssize_t a, lo = 0, hi = 0, m = q.shape[0]
    cdef double wins = 0.0
    with nogil:
        for a in range(p.shape[0]):
            while lo < m and q[lo] < p[a]:
                lo += 1
            if hi < lo:
                hi = lo
            while hi < m and q[hi] <= p[a]:
                hi += 1
            wins += lo + 0.5 * (hi - lo)
    return wins / (p.shape[0] * q.shape[0])
