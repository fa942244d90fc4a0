"""Compiled inner loop of the path simulator.

The kernel walks one path at a time through the whole grid (states stay
in registers; the coefficient tables are shared read-only and stay
cache-resident), advancing up to two controllers on the path's noise.
States evolve per sub-interval (uniform steps, refined at jump times):
the mean state by the explicit midpoint rule, the deviation state by
Euler-Maruyama with left-endpoint coefficients.  Controls, running
costs (trapezoidal), state-moment integrals, and paired gap
accumulators are maintained on grid nodes.

Table values inside a step are linear interpolants of the node values;
forcing values are exact at nodes and half-steps and linearly
interpolated at jump sub-times.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def run_chunk(
    n_steps, dt, x0,
    Z, reg_node, has_jump,       # (P, N), (P, N+1) int8, (P, N) bool
    jp_off, j_step, j_tau, j_after, j_z,  # per-path jump records, time-ordered
    Ab1, Cb1, Cb2, Ab2,          # (S, N+1, m0, n, n)
    Bv1, Bv2, Dv,                # (S, N+1, m0, n)
    th1, th2,                    # (S, N+1, m0, m, n)
    v1, v2,                      # (S, N+1, m0, m)
    sig_n, b2_n,                 # (N+1, m0, n)
    b2_m,                        # (N, m0, n)
    q1_n, q2_n,                  # (N+1, m0, n)
    r1_n, r2_n,                  # (N+1, m0, m)
    Q1, Q2,                      # (m0, n, n)
    S1, S2,                      # (m0, m, n)
    R1, R2,                      # (m0, m, m)
    cp_slot, cc_slot, mc_slot,   # (N+1,) int64, slot index or -1
    paired, gap_disc,            # bool, exp(-gamma*dt)
    store,                       # bool
    costs,                       # (S, P) out
    X1cp, X2cp, u1cp, u2cp,      # (S, P, ncp, n|m)
    cost_cp, mom_cp,             # (S, P, ncc), (S, P, nmc)
    gap_x, gap_u,                # (P, ncp)
    X1tr, X2tr, u1tr, u2tr, dWtr,  # (P, N+1, n|m), (P, N)
):
    S = costs.shape[0]
    P = costs.shape[1]
    n = x0.shape[0]
    m = v1.shape[3]
    sqrt_dt = np.sqrt(dt)

    x1 = np.zeros((S, n))
    x2 = np.zeros((S, n))
    u1 = np.zeros((S, m))
    u2 = np.zeros((S, m))
    ell_prev = np.zeros(S)
    mom_prev = np.zeros(S)
    cost_acc = np.zeros(S)
    mom_acc = np.zeros(S)
    x1n = np.zeros(n)
    x2n = np.zeros(n)
    xh = np.zeros(n)

    for p in range(P):
        for s in range(S):
            for a in range(n):
                x1[s, a] = 0.0
                x2[s, a] = x0[a]
            ell_prev[s] = 0.0
            mom_prev[s] = 0.0
            cost_acc[s] = 0.0
            mom_acc[s] = 0.0
        g_prev = 0.0
        gap_acc = 0.0
        jptr = jp_off[p]
        jend = jp_off[p + 1]

        for j in range(n_steps + 1):
            i = reg_node[p, j]

            # node quantities: controls, cost integrand, moments
            for s in range(S):
                ell = 0.0
                mom = 0.0
                for a in range(m):
                    acc1 = v1[s, j, i, a]
                    acc2 = v2[s, j, i, a]
                    for b in range(n):
                        acc1 += th1[s, j, i, a, b] * x1[s, b]
                        acc2 += th2[s, j, i, a, b] * x2[s, b]
                    u1[s, a] = acc1
                    u2[s, a] = acc2
                for a in range(n):
                    qx1 = 0.0
                    qx2 = 0.0
                    for b in range(n):
                        qx1 += Q1[i, a, b] * x1[s, b]
                        qx2 += Q2[i, a, b] * x2[s, b]
                    ell += x1[s, a] * qx1 + x2[s, a] * qx2
                    ell += q1_n[j, i, a] * x1[s, a] + q2_n[j, i, a] * x2[s, a]
                    mom += x1[s, a] * x1[s, a] + x2[s, a] * x2[s, a]
                for a in range(m):
                    sx1 = 0.0
                    sx2 = 0.0
                    ru1 = 0.0
                    ru2 = 0.0
                    for b in range(n):
                        sx1 += S1[i, a, b] * x1[s, b]
                        sx2 += S2[i, a, b] * x2[s, b]
                    for b in range(m):
                        ru1 += R1[i, a, b] * u1[s, b]
                        ru2 += R2[i, a, b] * u2[s, b]
                    ell += u1[s, a] * (2.0 * sx1 + ru1)
                    ell += u2[s, a] * (2.0 * sx2 + ru2)
                    ell += r1_n[j, i, a] * u1[s, a]
                    ell += r2_n[j, i, a] * u2[s, a]
                if j > 0:
                    cost_acc[s] += (dt / 2.0) * (ell_prev[s] + ell)
                    mom_acc[s] += (dt / 2.0) * (mom_prev[s] + mom)
                ell_prev[s] = ell
                mom_prev[s] = mom

            if paired:
                g_now = 0.0
                for a in range(m):
                    d1 = u1[0, a] - u1[1, a]
                    d2 = u2[0, a] - u2[1, a]
                    g_now += d1 * d1 + d2 * d2
                if j > 0:
                    gap_acc = gap_disc * gap_acc + (dt / 2.0) * (
                        gap_disc * g_prev + g_now
                    )
                g_prev = g_now

            slot = cp_slot[j]
            if slot >= 0:
                for s in range(S):
                    for a in range(n):
                        X1cp[s, p, slot, a] = x1[s, a]
                        X2cp[s, p, slot, a] = x2[s, a]
                    for a in range(m):
                        u1cp[s, p, slot, a] = u1[s, a]
                        u2cp[s, p, slot, a] = u2[s, a]
                if paired:
                    gx = 0.0
                    for a in range(n):
                        d1 = x1[0, a] - x1[1, a]
                        d2 = x2[0, a] - x2[1, a]
                        gx += d1 * d1 + d2 * d2
                    gap_x[p, slot] = gx
                    gap_u[p, slot] = gap_acc
            cslot = cc_slot[j]
            if cslot >= 0:
                for s in range(S):
                    cost_cp[s, p, cslot] = cost_acc[s]
            mslot = mc_slot[j]
            if mslot >= 0:
                for s in range(S):
                    mom_cp[s, p, mslot] = mom_acc[s]
            if store:
                for a in range(n):
                    X1tr[p, j, a] = x1[0, a]
                    X2tr[p, j, a] = x2[0, a]
                for a in range(m):
                    u1tr[p, j, a] = u1[0, a]
                    u2tr[p, j, a] = u2[0, a]

            if j == n_steps:
                break

            # advance node j -> j+1
            t_j = j * dt
            if not has_jump[p, j]:
                dW = sqrt_dt * Z[p, j]
                if store:
                    dWtr[p, j] = dW
                for s in range(S):
                    for a in range(n):
                        drift = Bv1[s, j, i, a]
                        diff = Dv[s, j, i, a] + sig_n[j, i, a]
                        f0 = Bv2[s, j, i, a] + b2_n[j, i, a]
                        for b in range(n):
                            drift += Ab1[s, j, i, a, b] * x1[s, b]
                            diff += (
                                Cb1[s, j, i, a, b] * x1[s, b]
                                + Cb2[s, j, i, a, b] * x2[s, b]
                            )
                            f0 += Ab2[s, j, i, a, b] * x2[s, b]
                        x1n[a] = x1[s, a] + dt * drift + dW * diff
                        xh[a] = x2[s, a] + (dt / 2.0) * f0
                    for a in range(n):
                        fm = 0.5 * (Bv2[s, j, i, a] + Bv2[s, j + 1, i, a]) + b2_m[j, i, a]
                        for b in range(n):
                            fm += 0.5 * (
                                Ab2[s, j, i, a, b] + Ab2[s, j + 1, i, a, b]
                            ) * xh[b]
                        x2n[a] = x2[s, a] + dt * fm
                    for a in range(n):
                        x1[s, a] = x1n[a]
                        x2[s, a] = x2n[a]
            else:
                # exact sub-interval walk through this step's jumps
                stop = jptr
                while stop < jend and j_step[stop] == j:
                    stop += 1
                dW_total = 0.0
                for s in range(S):
                    t_left = t_j
                    r = reg_node[p, j]
                    for l in range(jptr, stop + 1):
                        t_right = j_tau[l] if l < stop else t_j + dt
                        delta = t_right - t_left
                        if delta < 0.0:
                            delta = 0.0
                        z = Z[p, j] if l == jptr else j_z[l - 1]
                        dw = np.sqrt(delta) * z
                        if s == 0:
                            dW_total += dw
                        w = (t_left - t_j) / dt
                        wm = (t_left + delta / 2.0 - t_j) / dt
                        for a in range(n):
                            drift = Bv1[s, j, r, a] + w * (
                                Bv1[s, j + 1, r, a] - Bv1[s, j, r, a]
                            )
                            diff = (
                                Dv[s, j, r, a]
                                + w * (Dv[s, j + 1, r, a] - Dv[s, j, r, a])
                                + sig_n[j, r, a]
                                + w * (sig_n[j + 1, r, a] - sig_n[j, r, a])
                            )
                            f0 = (
                                Bv2[s, j, r, a]
                                + w * (Bv2[s, j + 1, r, a] - Bv2[s, j, r, a])
                                + b2_n[j, r, a]
                                + w * (b2_n[j + 1, r, a] - b2_n[j, r, a])
                            )
                            for b in range(n):
                                ab1 = Ab1[s, j, r, a, b] + w * (
                                    Ab1[s, j + 1, r, a, b] - Ab1[s, j, r, a, b]
                                )
                                cb1 = Cb1[s, j, r, a, b] + w * (
                                    Cb1[s, j + 1, r, a, b] - Cb1[s, j, r, a, b]
                                )
                                cb2 = Cb2[s, j, r, a, b] + w * (
                                    Cb2[s, j + 1, r, a, b] - Cb2[s, j, r, a, b]
                                )
                                ab2 = Ab2[s, j, r, a, b] + w * (
                                    Ab2[s, j + 1, r, a, b] - Ab2[s, j, r, a, b]
                                )
                                drift += ab1 * x1[s, b]
                                diff += cb1 * x1[s, b] + cb2 * x2[s, b]
                                f0 += ab2 * x2[s, b]
                            x1n[a] = x1[s, a] + delta * drift + dw * diff
                            xh[a] = x2[s, a] + (delta / 2.0) * f0
                        for a in range(n):
                            fm = (
                                Bv2[s, j, r, a]
                                + wm * (Bv2[s, j + 1, r, a] - Bv2[s, j, r, a])
                                + b2_n[j, r, a]
                                + wm * (b2_n[j + 1, r, a] - b2_n[j, r, a])
                            )
                            for b in range(n):
                                ab2m = Ab2[s, j, r, a, b] + wm * (
                                    Ab2[s, j + 1, r, a, b] - Ab2[s, j, r, a, b]
                                )
                                fm += ab2m * xh[b]
                            x2n[a] = x2[s, a] + delta * fm
                        for a in range(n):
                            x1[s, a] = x1n[a]
                            x2[s, a] = x2n[a]
                        if l < stop:
                            r = j_after[l]
                        t_left = t_right
                if store:
                    dWtr[p, j] = dW_total
                jptr = stop

        for s in range(S):
            costs[s, p] = cost_acc[s]

    return 0
