"""Batched numba kernels for phase-oscillator integration.

These are the hot loops behind the synchronization predicate and the
long-horizon labeling oracle.  Everything here is plain float64 RK4 with
a fixed step; the public API lives in `model` / `surrogate`.

All kernels are deterministic: the same inputs produce the same outputs
on a given build.
"""

import numpy as np
from numba import njit

# The outer loops avoid the nnan/ninf fastmath assumptions so that their
# divergence checks (isfinite) survive optimization; the inlined stage
# arithmetic keeps full fastmath (flags are carried per instruction).
FASTMATH_FLAGS = {"contract", "arcp", "reassoc", "nsz", "afn"}

# Outcome codes shared with the callers.
SYNC = 1
UNSYNC = 0
DIVERGED = -1
EXCLUDED = 2


@njit(cache=True, fastmath=True)
def _rk4_step(theta, omega, coup, h, n, k1, k2, k3, k4, tmp, sn, cs):
    """One classic RK4 step of dtheta_i = omega_i + sum_j a_ij sin(theta_j - theta_i).

    Writes the four stage slopes into the provided scratch arrays and
    returns nothing; caller combines them.
    """
    _rhs(theta, omega, coup, n, k1, sn, cs)
    for i in range(n):
        tmp[i] = theta[i] + 0.5 * h * k1[i]
    _rhs(tmp, omega, coup, n, k2, sn, cs)
    for i in range(n):
        tmp[i] = theta[i] + 0.5 * h * k2[i]
    _rhs(tmp, omega, coup, n, k3, sn, cs)
    for i in range(n):
        tmp[i] = theta[i] + h * k3[i]
    _rhs(tmp, omega, coup, n, k4, sn, cs)


@njit(cache=True, fastmath=True)
def _rhs(theta, omega, coup, n, out, sn, cs):
    # sin(theta_j - theta_i) expanded through per-oscillator sin/cos: 2n
    # trig evaluations instead of n(n-1)/2, and each pair term evaluated
    # once using its antisymmetry.
    for i in range(n):
        sn[i] = np.sin(theta[i])
        cs[i] = np.cos(theta[i])
        out[i] = omega[i]
    for i in range(n):
        for j in range(i + 1, n):
            a = coup[i, j]
            if a != 0.0:
                s = a * (sn[j] * cs[i] - cs[j] * sn[i])
                out[i] += s
                out[j] -= s


@njit(cache=True, fastmath=FASTMATH_FLAGS)
def sync_batch(omega, coup, theta0, h, n_steps, win_lo, win_hi, threshold,
               raw_increment):
    """Decide frequency synchronization for a batch of systems.

    omega, theta0: (B, n); coup: (B, n, n) symmetric.  Integrates n_steps
    RK4 steps and checks, for every step index k in [win_lo, win_hi], that
    the one-step phase increments (optionally drift-compensated by the
    per-instant mean) stay below `threshold` in absolute value.

    Returns (codes, steps) where codes[b] is SYNC/UNSYNC/DIVERGED and
    steps[b] is the step index of divergence (or -1).  Unsynchronized
    systems short-circuit at the first violating increment, which is
    exact for the max-over-window criterion.
    """
    B, n = omega.shape
    codes = np.empty(B, dtype=np.int8)
    dsteps = np.full(B, -1, dtype=np.int64)
    for b in range(B):
        th = theta0[b].copy()
        om = omega[b]
        cp = coup[b]
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        sn = np.empty(n)
        cs = np.empty(n)
        code = SYNC
        for step in range(n_steps):
            _rk4_step(th, om, cp, h, n, k1, k2, k3, k4, tmp, sn, cs)
            bad = False
            if win_lo <= step <= win_hi:
                mean_inc = 0.0
                for i in range(n):
                    tmp[i] = (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    mean_inc += tmp[i]
                mean_inc /= n
                for i in range(n):
                    th[i] += tmp[i]
                    inc = tmp[i] if raw_increment else tmp[i] - mean_inc
                    if inc < 0.0:
                        inc = -inc
                    if inc >= threshold:
                        bad = True
                for i in range(n):
                    if not np.isfinite(th[i]):
                        code = DIVERGED
                        dsteps[b] = step
                        break
            else:
                for i in range(n):
                    th[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                for i in range(n):
                    if not np.isfinite(th[i]):
                        code = DIVERGED
                        dsteps[b] = step
                        break
            if code == DIVERGED:
                break
            if bad:
                code = UNSYNC
                break
        codes[b] = code
    return codes, dsteps


@njit(cache=True, fastmath=FASTMATH_FLAGS)
def label_batch(omega, coup, theta0, h, n_steps, win_lo, win_hi,
                freq_tol, coherence_bound):
    """Long-horizon labeling oracle for a batch of systems.

    Condition A: at every step k in [win_lo, win_hi] the instantaneous
    frequencies (forward increments / h) agree across oscillators to
    within `freq_tol` (1e-6 for six-decimal agreement; a spread test
    rather than literal rounding, which is ill-posed when the common
    locked frequency sits exactly on a rounding boundary).
    Condition B: the summed absolute change of the order-parameter
    coherence r over the same steps stays below `coherence_bound`.

    Returns codes: SYNC if A and B, UNSYNC if neither, EXCLUDED if they
    disagree, DIVERGED on non-finite state.
    """
    B, n = omega.shape
    codes = np.empty(B, dtype=np.int8)
    for b in range(B):
        th = theta0[b].copy()
        om = omega[b]
        cp = coup[b]
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        tmp = np.empty(n)
        sn = np.empty(n)
        cs = np.empty(n)
        cond_a = True
        dr_sum = 0.0
        r_prev = 0.0
        diverged = False
        for step in range(n_steps):
            if step == win_lo:
                r_prev = _coherence(th, n)
            _rk4_step(th, om, cp, h, n, k1, k2, k3, k4, tmp, sn, cs)
            in_win = win_lo <= step <= win_hi
            if in_win:
                fmin = np.inf
                fmax = -np.inf
                for i in range(n):
                    inc = (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    th[i] += inc
                    f = inc / h
                    if f < fmin:
                        fmin = f
                    if f > fmax:
                        fmax = f
                if fmax - fmin >= freq_tol:
                    cond_a = False
                r_now = _coherence(th, n)
                d = r_now - r_prev
                dr_sum += d if d >= 0.0 else -d
                r_prev = r_now
            else:
                for i in range(n):
                    th[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                if not np.isfinite(th[i]):
                    diverged = True
                    break
            if diverged:
                break
        if diverged:
            codes[b] = DIVERGED
            continue
        cond_b = dr_sum < coherence_bound
        if cond_a and cond_b:
            codes[b] = SYNC
        elif (not cond_a) and (not cond_b):
            codes[b] = UNSYNC
        else:
            codes[b] = EXCLUDED
    return codes


@njit(cache=True, fastmath=True)
def _coherence(theta, n):
    cr = 0.0
    ci = 0.0
    for i in range(n):
        cr += np.cos(theta[i])
        ci += np.sin(theta[i])
    return np.sqrt(cr * cr + ci * ci) / n


@njit(cache=True, fastmath=FASTMATH_FLAGS)
def trajectory_single(omega, coup, theta0, h, n_steps):
    """Integrate one system, storing the full phase history (n, n_steps+1).

    Returns (phases, diverged_step); diverged_step is -1 when the state
    stayed finite.
    """
    n = omega.shape[0]
    out = np.empty((n, n_steps + 1))
    th = theta0.copy()
    for i in range(n):
        out[i, 0] = th[i]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    sn = np.empty(n)
    cs = np.empty(n)
    for step in range(n_steps):
        _rk4_step(th, omega, coup, h, n, k1, k2, k3, k4, tmp, sn, cs)
        for i in range(n):
            th[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            out[i, step + 1] = th[i]
        for i in range(n):
            if not np.isfinite(th[i]):
                return out, step
    return out, -1
