"""Numeric kernels.

Everything here is written in the numba ``nopython`` subset and compiled by
:func:`mcaprice._accel.njit` unless ``MCAPRICE_DISABLE_NUMBA`` is set. The
public modules wrap these with validation and dataclasses.

Utilities are encoded as three parallel arrays ``(fam, pa, pb)``:

    ALPHA_FAIR   pa=theta  pb=alpha     theta * x**(1-alpha) / (1-alpha)
    LOG          pa=theta  pb=a         theta * log(a + x)
    EXP          pa=theta  pb unused    1 - exp(-theta * x)
    QUADRATIC    pa=a<0    pb=b>0       a * x**2 + b * x
"""

import math

import numpy as np

from ._accel import njit

ALPHA_FAIR = 0
LOG = 1
EXP = 2
QUADRATIC = 3

INF = np.inf


# ---------------------------------------------------------------------------
# single-user utility primitives
# ---------------------------------------------------------------------------

@njit
def u_value(f, a, b, x):
    if f == ALPHA_FAIR:
        return a * x ** (1.0 - b) / (1.0 - b)
    if f == LOG:
        if b + x <= 0.0:
            return -INF
        return a * math.log(b + x)
    if f == EXP:
        return 1.0 - math.exp(-a * x)
    return a * x * x + b * x


@njit
def u_d1(f, a, b, x):
    if f == ALPHA_FAIR:
        if x <= 0.0:
            return INF
        return a * x ** (-b)
    if f == LOG:
        if b + x <= 0.0:
            return INF
        return a / (b + x)
    if f == EXP:
        return a * math.exp(-a * x)
    return 2.0 * a * x + b


@njit
def u_d2(f, a, b, x):
    if f == ALPHA_FAIR:
        if x <= 0.0:
            return -INF
        return -b * a * x ** (-b - 1.0)
    if f == LOG:
        if b + x <= 0.0:
            return -INF
        return -a / ((b + x) * (b + x))
    if f == EXP:
        return -a * a * math.exp(-a * x)
    return 2.0 * a


@njit
def u_d3(f, a, b, x):
    if f == ALPHA_FAIR:
        if x <= 0.0:
            return INF
        return b * (b + 1.0) * a * x ** (-b - 2.0)
    if f == LOG:
        if b + x <= 0.0:
            return INF
        return 2.0 * a / ((b + x) * (b + x) * (b + x))
    if f == EXP:
        return a * a * a * math.exp(-a * x)
    return 0.0


@njit
def u_marginal_zero(f, a, b):
    if f == ALPHA_FAIR:
        return INF
    if f == LOG:
        if b <= 0.0:
            return INF
        return a / b
    if f == EXP:
        return a
    return b


@njit
def u_demand(f, a, b, p):
    """Closed-form maximizer of U(x) - p x over x >= 0 (p > 0)."""
    if f == ALPHA_FAIR:
        return (a / p) ** (1.0 / b)
    if f == LOG:
        v = a / p - b
        return v if v > 0.0 else 0.0
    if f == EXP:
        if p >= a:
            return 0.0
        return math.log(a / p) / a
    if p >= b:
        return 0.0
    return (b - p) / (-2.0 * a)


@njit
def u_demand_d1(f, a, b, p):
    """Left derivative of demand in p (zero strictly above U'(0))."""
    if p > u_marginal_zero(f, a, b):
        return 0.0
    if f == ALPHA_FAIR:
        return -(a / p) ** (1.0 / b) / (b * p)
    if f == LOG:
        return -a / (p * p)
    if f == EXP:
        return -1.0 / (a * p)
    return 1.0 / (2.0 * a)


@njit
def f_d1(mode, f, a, b, y):
    """Derivative of the separable objective: U (mode 0) or y*U'(y) (mode 1)."""
    if mode == 0:
        return u_d1(f, a, b, y)
    if y <= 0.0:
        if f == ALPHA_FAIR:
            return INF
        return u_d1(f, a, b, 0.0)
    if f == ALPHA_FAIR:
        # closed form avoids inf - inf for tiny y
        return (1.0 - b) * a * y ** (-b)
    return u_d1(f, a, b, y) + y * u_d2(f, a, b, y)


@njit
def f_d2(mode, f, a, b, y):
    if mode == 0:
        return u_d2(f, a, b, y)
    if y <= 0.0:
        if f == ALPHA_FAIR:
            return -INF
        return 2.0 * u_d2(f, a, b, 0.0)
    if f == ALPHA_FAIR:
        return -b * (1.0 - b) * a * y ** (-b - 1.0)
    return 2.0 * u_d2(f, a, b, y) + y * u_d3(f, a, b, y)


@njit
def f_value(mode, f, a, b, y):
    if mode == 0:
        return u_value(f, a, b, y)
    if y <= 0.0:
        return 0.0
    return y * u_d1(f, a, b, y)


# ---------------------------------------------------------------------------
# aggregate demand and its inverse
# ---------------------------------------------------------------------------

@njit
def agg_demand(fam, pa, pb, p):
    s = 0.0
    for i in range(fam.shape[0]):
        s += u_demand(fam[i], pa[i], pb[i], p)
    return s


@njit
def agg_demand_d1(fam, pa, pb, p):
    s = 0.0
    for i in range(fam.shape[0]):
        s += u_demand_d1(fam[i], pa[i], pb[i], p)
    return s


@njit
def max_marginal_zero(fam, pa, pb):
    m = 0.0
    for i in range(fam.shape[0]):
        v = u_marginal_zero(fam[i], pa[i], pb[i])
        if v > m:
            m = v
    return m


@njit
def inverse_demand(fam, pa, pb, q):
    """Price p with sum_i d_i(p) = q.

    Returns max_i U'_i(0) for q <= 0 and -1.0 when aggregate demand stays
    below q for every positive price.
    """
    pmax = max_marginal_zero(fam, pa, pb)
    if q <= 0.0:
        return pmax
    if pmax < INF:
        hi = pmax
    else:
        hi = 1.0
        while agg_demand(fam, pa, pb, hi) > q:
            hi *= 2.0
    lo = hi * 0.5
    while agg_demand(fam, pa, pb, lo) < q:
        lo *= 0.5
        if lo < 1e-300:
            return -1.0
    # safeguarded Newton inside the bracket [lo, hi], D(lo) >= q > D(hi)
    p = lo
    for _ in range(200):
        g = agg_demand(fam, pa, pb, p) - q
        if g == 0.0:
            return p
        if g > 0.0:
            lo = p
        else:
            hi = p
        if hi - lo <= 4e-16 * hi:
            break
        d = agg_demand_d1(fam, pa, pb, p)
        step_ok = False
        if d < 0.0:
            pn = p - g / d
            if lo < pn < hi:
                p = pn
                step_ok = True
        if not step_ok:
            p = 0.5 * (lo + hi)
    return p


@njit
def market_clearing_scan(fam, pa, pb, cum_caps):
    out = np.empty(cum_caps.shape[0])
    for k in range(cum_caps.shape[0]):
        out[k] = inverse_demand(fam, pa, pb, cum_caps[k])
    return out


# ---------------------------------------------------------------------------
# primal-dual interior point for
#   max  sum_i F_i(y_i) - sum_k w_k x_k
#   s.t. sum_{k into link j} x_k <= C_j,  x >= 0,  y_i = sum_{k of user i} x_k
# ---------------------------------------------------------------------------

@njit
def _ipm_residual(x, s, lam, mu, rd, tau):
    r = 0.0
    for k in range(x.shape[0]):
        r += rd[k] * rd[k]
        c = x[k] * mu[k] - tau
        r += c * c
    for j in range(s.shape[0]):
        c = s[j] * lam[j] - tau
        r += c * c
    return math.sqrt(r)


@njit
def _ipm_eval(mode, fam, pa, pb, eu, el, w, C, x, lam, mu, n_users, n_links):
    y = np.zeros(n_users)
    load = np.zeros(n_links)
    for k in range(x.shape[0]):
        y[eu[k]] += x[k]
        load[el[k]] += x[k]
    g1 = np.empty(n_users)
    for i in range(n_users):
        g1[i] = f_d1(mode, fam[i], pa[i], pb[i], y[i])
    rd = np.empty(x.shape[0])
    for k in range(x.shape[0]):
        rd[k] = -g1[eu[k]] + w[k] + lam[el[k]] - mu[k]
    s = C - load
    return y, s, rd


@njit
def allocate_ipm(mode, fam, pa, pb, eu, el, w, C, n_users, n_links, tol, max_iter):
    """Solve the separable concave allocation problem.

    Returns ``(x, lam, mu, iterations, status)``; status 0 = converged,
    1 = iteration cap, 2 = numerical breakdown.
    """
    K = eu.shape[0]
    x = np.zeros(K)
    lam = np.zeros(n_links)
    mu = np.zeros(K)
    if K == 0:
        return x, lam, mu, 0, 0
    deg = np.zeros(n_links)
    for k in range(K):
        deg[el[k]] += 1.0
    for k in range(K):
        x[k] = C[el[k]] / (2.0 * deg[el[k]])
    y, s, rd = _ipm_eval(mode, fam, pa, pb, eu, el, w, C, x, lam, mu, n_users, n_links)
    ps = 1.0
    for k in range(K):
        if abs(w[k]) > ps:
            ps = abs(w[k])
    for i in range(n_users):
        v = abs(f_d1(mode, fam[i], pa[i], pb[i], y[i]))
        if v > ps and v < INF:
            ps = v
    cmax = 0.0
    for j in range(n_links):
        if C[j] > cmax:
            cmax = C[j]
    tau0 = ps * cmax / (4.0 * K)
    for k in range(K):
        mu[k] = tau0 / x[k]
    for j in range(n_links):
        lam[j] = tau0 / s[j] if s[j] > 0.0 else ps
    status = 1
    it = 0
    small = 0
    M = np.empty((K, K))
    rhs = np.empty(K)
    for it in range(1, max_iter + 1):
        y, s, rd = _ipm_eval(mode, fam, pa, pb, eu, el, w, C, x, lam, mu, n_users, n_links)
        comp = 0.0
        cmaxv = 0.0
        for k in range(K):
            v = x[k] * mu[k]
            comp += v
            if v > cmaxv:
                cmaxv = v
        for j in range(n_links):
            v = s[j] * lam[j]
            comp += v
            if v > cmaxv:
                cmaxv = v
        gap = comp / (K + n_links)
        rmax = 0.0
        for k in range(K):
            if abs(rd[k]) > rmax:
                rmax = abs(rd[k])
        if rmax <= tol * ps and cmaxv <= tol * ps * cmax:
            status = 0
            break
        if cmaxv <= 1e-15 * ps * cmax and rmax <= 1e-8 * ps:
            # complementarity at round-off; further steps only lose conditioning
            status = 0
            break
        sigma = min(0.1, gap / (ps * cmax))
        tau = sigma * gap
        if rmax > 1e3 * gap:
            tau = gap
        g2 = np.empty(n_users)
        for i in range(n_users):
            g2[i] = -f_d2(mode, fam[i], pa[i], pb[i], y[i])
        for k in range(K):
            jk = el[k]
            ik = eu[k]
            for l in range(K):
                v = 0.0
                if eu[l] == ik:
                    v += g2[ik]
                if el[l] == jk:
                    v += lam[jk] / s[jk]
                M[k, l] = v
            M[k, k] += mu[k] / x[k]
            rhs[k] = -rd[k] - (tau - s[jk] * lam[jk]) / s[jk] + (tau - x[k] * mu[k]) / x[k]
        ok = True
        for k in range(K):
            for l in range(K):
                if not np.isfinite(M[k, l]):
                    ok = False
            if not np.isfinite(rhs[k]):
                ok = False
        if not ok:
            status = 2
            break
        # Jacobi scaling keeps the solve well posed as mu/x and lam/s diverge
        dsc = np.empty(K)
        for k in range(K):
            dsc[k] = math.sqrt(M[k, k]) if M[k, k] > 0.0 else 1.0
        for k in range(K):
            for l in range(K):
                M[k, l] /= dsc[k] * dsc[l]
            M[k, k] += 1e-14
            rhs[k] /= dsc[k]
        dx = np.linalg.solve(M, rhs)
        for k in range(K):
            dx[k] /= dsc[k]
        ds = np.zeros(n_links)
        for k in range(K):
            ds[el[k]] -= dx[k]
        dlam = np.empty(n_links)
        for j in range(n_links):
            dlam[j] = (tau - s[j] * lam[j] - lam[j] * ds[j]) / s[j]
        dmu = np.empty(K)
        for k in range(K):
            dmu[k] = (tau - x[k] * mu[k] - mu[k] * dx[k]) / x[k]
        amax = 1.0
        for k in range(K):
            if dx[k] < 0.0:
                amax = min(amax, -x[k] / dx[k])
            if dmu[k] < 0.0:
                amax = min(amax, -mu[k] / dmu[k])
        for j in range(n_links):
            if ds[j] < 0.0:
                amax = min(amax, -s[j] / ds[j])
            if dlam[j] < 0.0:
                amax = min(amax, -lam[j] / dlam[j])
        alpha = min(1.0, 0.995 * amax)
        r0 = _ipm_residual(x, s, lam, mu, rd, tau)
        accepted = False
        for _ in range(40):
            xn = x + alpha * dx
            lamn = lam + alpha * dlam
            mun = mu + alpha * dmu
            yn, sn, rdn = _ipm_eval(mode, fam, pa, pb, eu, el, w, C, xn, lamn, mun, n_users, n_links)
            r1 = _ipm_residual(xn, sn, lamn, mun, rdn, tau)
            good = np.isfinite(r1)
            for j in range(n_links):
                if sn[j] <= 0.0:
                    good = False
            if good and r1 <= (1.0 - 1e-4 * alpha) * r0:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # take the tiny step anyway if it stays interior; residual may stall
            if alpha <= 0.0:
                status = 2
                break
        x = xn
        lam = lamn
        mu = mun
        if alpha < 1e-6:
            small += 1
            if small >= 5:
                # stalled at round-off; the active-set polish finishes the job
                status = 3
                break
        else:
            small = 0
    return x, lam, mu, it, status


@njit
def _newton_active(mode, fam, pa, pb, eu, el, w, C, n_users, n_links, x, lam, act, sat, max_iter):
    """Newton/least squares on the KKT equalities of a fixed active set."""
    K = eu.shape[0]
    n_act = 0
    for k in range(K):
        if act[k]:
            n_act += 1
        else:
            x[k] = 0.0
    n_sat = 0
    for j in range(n_links):
        if sat[j]:
            n_sat += 1
        else:
            lam[j] = 0.0
    ai = np.empty(n_act, dtype=np.int64)
    c = 0
    for k in range(K):
        if act[k]:
            ai[c] = k
            c += 1
    si = np.empty(n_sat, dtype=np.int64)
    pos = -np.ones(n_links, dtype=np.int64)
    c = 0
    for j in range(n_links):
        if sat[j]:
            si[c] = j
            pos[j] = n_act + c
            c += 1
    nv = n_act + n_sat
    if nv == 0:
        return True
    for _ in range(max_iter):
        y = np.zeros(n_users)
        load = np.zeros(n_links)
        for k in range(K):
            y[eu[k]] += x[k]
            load[el[k]] += x[k]
        A = np.zeros((nv, nv))
        r = np.zeros(nv)
        scale = 1.0
        for a in range(n_act):
            k = ai[a]
            i = eu[k]
            yi = y[i] if y[i] > 1e-300 else 1e-300
            g1 = f_d1(mode, fam[i], pa[i], pb[i], yi)
            g2 = f_d2(mode, fam[i], pa[i], pb[i], yi)
            r[a] = g1 - w[k] - lam[el[k]]
            if abs(w[k]) > scale:
                scale = abs(w[k])
            for b in range(n_act):
                if eu[ai[b]] == i:
                    A[a, b] = g2
            if pos[el[k]] >= 0:
                A[a, pos[el[k]]] = -1.0
        for c in range(n_sat):
            j = si[c]
            r[n_act + c] = load[j] - C[j]
            for a in range(n_act):
                if el[ai[a]] == j:
                    A[n_act + c, a] = 1.0
        rn = 0.0
        for v in range(nv):
            if abs(r[v]) > rn:
                rn = abs(r[v])
        if not np.isfinite(rn):
            return False
        if rn <= 1e-14 * scale:
            return True
        for v in range(nv):
            for u in range(nv):
                if not np.isfinite(A[v, u]):
                    return False
        sol = np.linalg.lstsq(A, -r)[0]
        for a in range(n_act):
            x[ai[a]] += sol[a]
        for c in range(n_sat):
            lam[si[c]] += sol[n_act + c]
    return rn <= 1e-10 * scale


@njit
def polish_active_set(mode, fam, pa, pb, eu, el, w, C, n_users, n_links, x0, lam0, thresh, max_iter):
    """Active-set finish from an interior point.

    Starting from the edges with ``x > thresh`` and the links with slack
    below ``thresh``, Newton solves the KKT equalities; constraints whose
    sign conditions fail are flipped and the solve repeated. Returns
    ``(x, lam, ok)`` where ok means all KKT conditions hold to round-off.
    """
    K = eu.shape[0]
    load = np.zeros(n_links)
    for k in range(K):
        load[el[k]] += x0[k]
    scale = 1.0
    for k in range(K):
        if abs(w[k]) > scale:
            scale = abs(w[k])
    cmx = 1.0
    for j in range(n_links):
        if C[j] > cmx:
            cmx = C[j]
    # strict complementarity guess: compare scaled primal and dual slacks
    sat = np.zeros(n_links, dtype=np.bool_)
    for j in range(n_links):
        if C[j] - load[j] <= thresh or (C[j] - load[j]) / cmx < lam0[j] / scale:
            sat[j] = True
    y0 = np.zeros(n_users)
    for k in range(K):
        y0[eu[k]] += x0[k]
    act = np.zeros(K, dtype=np.bool_)
    for k in range(K):
        i = eu[k]
        red = w[k] + lam0[el[k]] - f_d1(mode, fam[i], pa[i], pb[i], y0[i])
        if x0[k] > thresh and x0[k] / cmx > red / scale:
            act[k] = True
    tol_d = 1e-9 * scale
    tol_p = 1e-11 * cmx
    x = x0.copy()
    lam = lam0.copy()
    for _round in range(2 * (K + n_links) + 2):
        for k in range(K):
            x[k] = x0[k] if act[k] else 0.0
        for j in range(n_links):
            lam[j] = lam0[j] if sat[j] else 0.0
        conv = _newton_active(mode, fam, pa, pb, eu, el, w, C, n_users, n_links, x, lam, act, sat, max_iter)
        if not conv:
            return x0.copy(), lam0.copy(), False
        # find the worst violated sign condition and flip it
        worst = 0.0
        kind = -1
        idx = -1
        y = np.zeros(n_users)
        load = np.zeros(n_links)
        for k in range(K):
            y[eu[k]] += x[k]
            load[el[k]] += x[k]
        for k in range(K):
            if act[k] and -x[k] > tol_p and -x[k] / cmx > worst:
                worst = -x[k] / cmx
                kind = 0
                idx = k
        for j in range(n_links):
            if sat[j] and -lam[j] > tol_d and -lam[j] / scale > worst:
                worst = -lam[j] / scale
                kind = 1
                idx = j
            if (not sat[j]) and load[j] - C[j] > tol_p and (load[j] - C[j]) / cmx > worst:
                worst = (load[j] - C[j]) / cmx
                kind = 2
                idx = j
        for k in range(K):
            if not act[k]:
                i = eu[k]
                yi = y[i] if y[i] > 1e-300 else 1e-300
                v = f_d1(mode, fam[i], pa[i], pb[i], yi) - w[k] - lam[el[k]]
                if v > tol_d and v / scale > worst:
                    worst = v / scale
                    kind = 3
                    idx = k
        if kind == -1:
            for k in range(K):
                if x[k] < 0.0:
                    x[k] = 0.0
            for j in range(n_links):
                if lam[j] < 0.0:
                    lam[j] = 0.0
            return x, lam, True
        if kind == 0:
            act[idx] = False
        elif kind == 1:
            sat[idx] = False
        elif kind == 2:
            sat[idx] = True
        else:
            act[idx] = True
    return x0.copy(), lam0.copy(), False


# ---------------------------------------------------------------------------
# projected gradient ascent on the same problem (local method, any F)
# ---------------------------------------------------------------------------

@njit
def _project_capped_simplex(v, cap):
    out = np.empty(v.shape[0])
    tot = 0.0
    for k in range(v.shape[0]):
        out[k] = v[k] if v[k] > 0.0 else 0.0
        tot += out[k]
    if tot <= cap:
        return out
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(u.shape[0]):
        css += u[k]
        t = (css - cap) / (k + 1)
        if u[k] - t > 0.0:
            theta = t
    for k in range(v.shape[0]):
        d = v[k] - theta
        out[k] = d if d > 0.0 else 0.0
    return out


@njit
def _project(x, el, C, n_links):
    out = np.empty(x.shape[0])
    for j in range(n_links):
        cnt = 0
        for k in range(x.shape[0]):
            if el[k] == j:
                cnt += 1
        if cnt == 0:
            continue
        v = np.empty(cnt)
        idx = np.empty(cnt, dtype=np.int64)
        c = 0
        for k in range(x.shape[0]):
            if el[k] == j:
                v[c] = x[k]
                idx[c] = k
                c += 1
        pv = _project_capped_simplex(v, C[j])
        for c in range(cnt):
            out[idx[c]] = pv[c]
    return out


@njit
def _pga_obj(mode, fam, pa, pb, eu, w, x, n_users):
    y = np.zeros(n_users)
    for k in range(x.shape[0]):
        y[eu[k]] += x[k]
    v = 0.0
    for i in range(n_users):
        v += f_value(mode, fam[i], pa[i], pb[i], y[i])
    for k in range(x.shape[0]):
        v -= w[k] * x[k]
    return v, y


@njit
def allocate_pga(mode, fam, pa, pb, eu, el, w, C, n_users, n_links, tol, max_iter, x0):
    """Projected gradient ascent with Armijo backtracking.

    Stops when the unit-step projected gradient has sup-norm <= tol.
    Returns ``(x, iterations, pg_norm)``.
    """
    K = eu.shape[0]
    x = _project(x0.copy(), el, C, n_links)
    if K == 0:
        return x, 0, 0.0
    step = 1.0
    pg = INF
    it = 0
    ymin = 1e-12
    for it in range(1, max_iter + 1):
        fx, y = _pga_obj(mode, fam, pa, pb, eu, w, x, n_users)
        g = np.empty(K)
        for k in range(K):
            g[k] = f_d1(mode, fam[eu[k]], pa[eu[k]], pb[eu[k]], max(y[eu[k]], ymin)) - w[k]
        xp = _project(x + g, el, C, n_links)
        pg = 0.0
        for k in range(K):
            d = abs(xp[k] - x[k])
            if d > pg:
                pg = d
        if pg <= tol:
            break
        step = min(step * 2.0, 1e6)
        for _ in range(80):
            xn = _project(x + step * g, el, C, n_links)
            fn, _y = _pga_obj(mode, fam, pa, pb, eu, w, xn, n_users)
            lin = 0.0
            sq = 0.0
            for k in range(K):
                d = xn[k] - x[k]
                lin += g[k] * d
                sq += d * d
            if fn >= fx + lin - sq / (2.0 * step) - 1e-15 * abs(fx):
                break
            step *= 0.5
        x = xn
    return x, it, pg


# ---------------------------------------------------------------------------
# lexicographic min-cost transportation by successive shortest paths
# ---------------------------------------------------------------------------

@njit
def route_min_cost(eu, el, c1, c2, supply, cap, n_users, n_links):
    """Route ``supply[i]`` of each user through its edges at minimum cost.

    Costs are compared lexicographically: primary ``c1``, then ``c2``.
    Returns ``(flow_per_edge, unrouted_total)``.
    """
    K = eu.shape[0]
    n_nodes = n_users + n_links + 2
    S = 0
    T = n_nodes - 1
    n_arcs = 2 * (n_users + K + n_links)
    frm = np.empty(n_arcs, dtype=np.int64)
    to = np.empty(n_arcs, dtype=np.int64)
    rc = np.zeros(n_arcs)
    k1 = np.zeros(n_arcs)
    k2 = np.zeros(n_arcs)
    a = 0
    big = 0.0
    for i in range(n_users):
        big += supply[i]
    big = 2.0 * big + 1.0
    for i in range(n_users):
        frm[a] = S; to[a] = 1 + i; rc[a] = supply[i]
        frm[a + 1] = 1 + i; to[a + 1] = S
        a += 2
    edge_arc = np.empty(K, dtype=np.int64)
    for k in range(K):
        frm[a] = 1 + eu[k]; to[a] = 1 + n_users + el[k]; rc[a] = big
        k1[a] = c1[k]; k2[a] = c2[k]
        frm[a + 1] = to[a]; to[a + 1] = frm[a]
        k1[a + 1] = -c1[k]; k2[a + 1] = -c2[k]
        edge_arc[k] = a
        a += 2
    for j in range(n_links):
        frm[a] = 1 + n_users + j; to[a] = T; rc[a] = cap[j]
        frm[a + 1] = T; to[a + 1] = 1 + n_users + j
        a += 2
    scale1 = 1.0
    for k in range(K):
        if abs(c1[k]) > scale1:
            scale1 = abs(c1[k])
    eps1 = 1e-12 * scale1
    total = 0.0
    for i in range(n_users):
        total += supply[i]
    feps = 1e-13 * (1.0 + total)
    routed = 0.0
    d1 = np.empty(n_nodes)
    d2 = np.empty(n_nodes)
    pred = np.empty(n_nodes, dtype=np.int64)
    for _round in range(4 * (n_nodes + n_arcs) + 10):
        if routed >= total - feps:
            break
        for v in range(n_nodes):
            d1[v] = INF
            d2[v] = INF
            pred[v] = -1
        d1[S] = 0.0
        d2[S] = 0.0
        for _pass in range(n_nodes):
            changed = False
            for e in range(n_arcs):
                if rc[e] <= feps:
                    continue
                u = frm[e]
                if d1[u] == INF:
                    continue
                v = to[e]
                n1 = d1[u] + k1[e]
                n2 = d2[u] + k2[e]
                if n1 < d1[v] - eps1 or (abs(n1 - d1[v]) <= eps1 and n2 < d2[v] - eps1):
                    d1[v] = n1
                    d2[v] = n2
                    pred[v] = e
                    changed = True
            if not changed:
                break
        if pred[T] < 0:
            break
        bott = INF
        v = T
        steps = 0
        while v != S and steps <= n_nodes:
            e = pred[v]
            if rc[e] < bott:
                bott = rc[e]
            v = frm[e]
            steps += 1
        if v != S or bott <= feps:
            break
        v = T
        while v != S:
            e = pred[v]
            rc[e] -= bott
            rc[e ^ 1] += bott
            v = frm[e]
        routed += bott
    flow = np.empty(K)
    for k in range(K):
        flow[k] = rc[edge_arc[k] + 1]
    return flow, max(total - routed, 0.0)


# ---------------------------------------------------------------------------
# quantity competition: smoothed aggregate cost, best output, Phi, iteration
# ---------------------------------------------------------------------------

@njit
def seg_cost(s, cap, q):
    """Greedy piecewise-linear cost of producing q on sorted segments."""
    tot = 0.0
    rem = q
    for k in range(s.shape[0]):
        if rem <= 0.0:
            break
        take = cap[k] if cap[k] < rem else rem
        tot += take * s[k]
        rem -= take
    return tot


@njit
def smooth_cost(s, cap, q, eps):
    """C1 convex quadratic blend of ``seg_cost`` around each interior kink."""
    qb = 0.0
    for k in range(s.shape[0] - 1):
        qb += cap[k]
        s1 = s[k]
        s2 = s[k + 1]
        if s2 > s1 and qb - eps < q < qb + eps:
            z = q - qb + eps
            return seg_cost(s, cap, qb - eps) + s1 * z + (s2 - s1) * z * z / (4.0 * eps)
    return seg_cost(s, cap, q)


@njit
def smooth_cost_d1(s, cap, q, eps):
    qb = 0.0
    for k in range(s.shape[0] - 1):
        qb += cap[k]
        s1 = s[k]
        s2 = s[k + 1]
        if s2 > s1 and qb - eps < q < qb + eps:
            return s1 + (s2 - s1) * (q - qb + eps) / (2.0 * eps)
    qb = 0.0
    for k in range(s.shape[0]):
        qb += cap[k]
        if q < qb:
            return s[k]
    return s[s.shape[0] - 1]


@njit
def best_output(s, cap, eps, price, dprice):
    """argmax_q q*price + q^2/2*dprice - smooth_cost(q) on [0, sum cap]."""
    top = 0.0
    for k in range(cap.shape[0]):
        top += cap[k]
    if top <= 0.0:
        return 0.0
    if price == INF:
        return top
    g0 = price - smooth_cost_d1(s, cap, 0.0, eps)
    if g0 <= 0.0:
        return 0.0
    gt = price + top * dprice - smooth_cost_d1(s, cap, top, eps)
    if gt >= 0.0:
        return top
    lo = 0.0
    hi = top
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = price + mid * dprice - smooth_cost_d1(s, cap, mid, eps)
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * top:
            break
    return 0.5 * (lo + hi)


@njit
def price_and_slope(fam, pa, pb, b):
    p = inverse_demand(fam, pa, pb, b)
    if p < 0.0:
        return 0.0, 0.0
    if p == INF:
        return INF, 0.0
    d = agg_demand_d1(fam, pa, pb, p)
    if d >= 0.0:
        return p, -INF
    return p, 1.0 / d


@njit
def phi_all(fam, pa, pb, starts, s_all, cap_all, eps_all, b, out):
    """Fill out[n] = best output of each MNO given total output b; return the sum."""
    p, dp = price_and_slope(fam, pa, pb, b)
    tot = 0.0
    for n in range(starts.shape[0] - 1):
        lo = starts[n]
        hi = starts[n + 1]
        if hi == lo:
            out[n] = 0.0
            continue
        if dp == -INF:
            # kinked demand: price cannot move up by cutting output
            q = 0.0
            if p > s_all[lo]:
                q = 0.0
            out[n] = q
        else:
            out[n] = best_output(s_all[lo:hi], cap_all[lo:hi], eps_all[n], p, dp)
        tot += out[n]
    return tot


@njit
def mean_value_iteration(fam, pa, pb, starts, s_all, cap_all, eps_all, b0, tol, max_iter, record):
    """Mean-value dynamics b <- Phi(b)/t + (1 - 1/t) b.

    Returns ``(b, Phi(b), iterations, converged, trace)``; the trace holds
    b(t) for every iteration when ``record`` is true.
    """
    n_mno = starts.shape[0] - 1
    out = np.empty(n_mno)
    trace = np.empty(max_iter + 1 if record else 1)
    b = b0
    phi = 0.0
    t = 0
    converged = False
    while t < max_iter:
        t += 1
        phi = phi_all(fam, pa, pb, starts, s_all, cap_all, eps_all, b, out)
        if record:
            trace[t - 1] = b
        if abs(b - phi) <= b * tol:
            converged = True
            break
        b = phi / t + (1.0 - 1.0 / t) * b
    if record:
        trace = trace[:t]
    return b, phi, t, converged, trace


@njit
def fixed_point_bisection(fam, pa, pb, starts, s_all, cap_all, eps_all, top, tol, max_iter):
    """Bracketing root of Phi(b) - b on [0, top]; returns (b, Phi(b), iterations, converged)."""
    n_mno = starts.shape[0] - 1
    out = np.empty(n_mno)
    lo = 0.0
    hi = top
    phi0 = phi_all(fam, pa, pb, starts, s_all, cap_all, eps_all, lo, out)
    if phi0 <= 0.0:
        return 0.0, phi0, 1, True
    phit = phi_all(fam, pa, pb, starts, s_all, cap_all, eps_all, hi, out)
    if abs(phit - hi) <= hi * tol:
        return hi, phit, 2, True
    b = 0.5 * (lo + hi)
    phi = 0.0
    for it in range(max_iter):
        b = 0.5 * (lo + hi)
        phi = phi_all(fam, pa, pb, starts, s_all, cap_all, eps_all, b, out)
        if abs(phi - b) <= b * tol:
            return b, phi, it + 3, True
        if phi > b:
            lo = b
        else:
            hi = b
        if hi - lo <= 1e-16 * top:
            break
    return b, phi, max_iter + 2, abs(phi - b) <= b * tol


# ---------------------------------------------------------------------------
# full pipeline on dense matrices: edges, interior point, polish, routing
# ---------------------------------------------------------------------------

@njit
def solve_traffic(mode, fam, pa, pb, W, C, tie, tol, max_iter, use_polish):
    """Dense-matrix driver around :func:`allocate_ipm`.

    Links with ``W = inf``, zero capacity, or ``W >= F'(0)`` are dropped; the
    resulting per-user totals are re-routed at minimum ``(W, tie)`` cost.
    Returns ``(x, iterations, status)``.
    """
    n = W.shape[0]
    m = W.shape[1]
    x = np.zeros((n, m))
    cnt = 0
    for i in range(n):
        f0 = f_d1(mode, fam[i], pa[i], pb[i], 0.0)
        for j in range(m):
            if np.isfinite(W[i, j]) and C[j] > 0.0 and W[i, j] < f0:
                cnt += 1
    if cnt == 0:
        return x, 0, 0
    eu = np.empty(cnt, dtype=np.int64)
    el = np.empty(cnt, dtype=np.int64)
    used = np.zeros(m, dtype=np.bool_)
    c = 0
    for i in range(n):
        f0 = f_d1(mode, fam[i], pa[i], pb[i], 0.0)
        for j in range(m):
            if np.isfinite(W[i, j]) and C[j] > 0.0 and W[i, j] < f0:
                eu[c] = i
                el[c] = j
                used[j] = True
                c += 1
    remap = -np.ones(m, dtype=np.int64)
    nl = 0
    for j in range(m):
        if used[j]:
            remap[j] = nl
            nl += 1
    Cc = np.empty(nl)
    for j in range(m):
        if used[j]:
            Cc[remap[j]] = C[j]
    elc = np.empty(cnt, dtype=np.int64)
    w = np.empty(cnt)
    for k in range(cnt):
        elc[k] = remap[el[k]]
        w[k] = W[eu[k], el[k]]
    xk, lamk, _mu, it, status = allocate_ipm(mode, fam, pa, pb, eu, elc, w, Cc, n, nl, tol, max_iter)
    if use_polish:
        cmx = 1.0
        for j in range(nl):
            if Cc[j] > cmx:
                cmx = Cc[j]
        xp, _lp, ok = polish_active_set(mode, fam, pa, pb, eu, elc, w, Cc, n, nl, xk, lamk, 1e-8 * cmx, 60)
        if ok:
            xk = xp
    load = np.zeros(m)
    for k in range(cnt):
        if xk[k] < 0.0:
            xk[k] = 0.0
        load[el[k]] += xk[k]
    for k in range(cnt):
        j = el[k]
        if load[j] > C[j]:
            xk[k] *= C[j] / load[j]
    y = np.zeros(n)
    for k in range(cnt):
        y[eu[k]] += xk[k]
        x[eu[k], el[k]] = xk[k]
    # re-route the totals over every open link by the lexicographic cost
    cnt2 = 0
    for i in range(n):
        for j in range(m):
            if np.isfinite(W[i, j]) and C[j] > 0.0:
                cnt2 += 1
    eu2 = np.empty(cnt2, dtype=np.int64)
    el2 = np.empty(cnt2, dtype=np.int64)
    c1 = np.empty(cnt2)
    c2 = np.empty(cnt2)
    c = 0
    for i in range(n):
        for j in range(m):
            if np.isfinite(W[i, j]) and C[j] > 0.0:
                eu2[c] = i
                el2[c] = j
                c1[c] = W[i, j]
                c2[c] = tie[i, j]
                c += 1
    flow, unrouted = route_min_cost(eu2, el2, c1, c2, y, C, n, m)
    tot = 0.0
    for i in range(n):
        tot += y[i]
    if unrouted <= 1e-9 * (1.0 + tot):
        for i in range(n):
            for j in range(m):
                x[i, j] = 0.0
        for k in range(cnt2):
            x[eu2[k], el2[k]] = flow[k]
    return x, it, status
