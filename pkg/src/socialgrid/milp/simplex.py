"""Dense two-phase tableau simplex with Bland's anti-cycling rule.

Meant for small programs and as an independent cross-check of the
production LP backend.
"""

import numpy as np

TOL = 1e-9


class NumericalError(RuntimeError):
    pass


def _standard_form(c, a, relations, b, lb, ub):
    """Rewrite as ``min c'y  s.t.  A'y = b', y >= 0`` and return the back-map."""
    n = c.size
    cols = []          # (variable, sign) per standard column
    shift = np.zeros(n)
    extra_rows = []    # (column, bound) for y <= bound
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    t = np.zeros((n, len(cols)))
    for k, (j, sign) in enumerate(cols):
        t[j, k] = sign

    rows, rhs, rels = [], [], []
    ad = a.toarray() if hasattr(a, "toarray") else np.asarray(a, dtype=float)
    if ad.size:
        rows.append(ad @ t)
        rhs.append(b - ad @ shift)
        rels += list(relations)
    for k, bound in extra_rows:
        row = np.zeros((1, len(cols)))
        row[0, k] = 1.0
        rows.append(row)
        rhs.append(np.array([bound]))
        rels.append("<=")
    m_rows = np.vstack(rows) if rows else np.zeros((0, len(cols)))
    rhs = np.concatenate(rhs) if rhs else np.zeros(0)

    n_slack = sum(r != "==" for r in rels)
    std = np.zeros((m_rows.shape[0], len(cols) + n_slack))
    std[:, :len(cols)] = m_rows
    s = len(cols)
    for i, rel in enumerate(rels):
        if rel == "<=":
            std[i, s] = 1.0
            s += 1
        elif rel == ">=":
            std[i, s] = -1.0
            s += 1
    cost = np.zeros(std.shape[1])
    cost[:len(cols)] = c @ t
    const = float(c @ shift)
    return cost, std, rhs, t, shift, const


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    others = np.flatnonzero(tab[:, col])
    for r in others:
        if r != row:
            tab[r] -= tab[r, col] * tab[row]
    basis[row] = col


def _iterate(tab, basis, n_cols, max_iter):
    """Run Bland-rule pivots on ``tab`` (objective in the last row)."""
    m = tab.shape[0] - 1
    for _ in range(max_iter):
        reduced = tab[-1, :n_cols]
        entering = np.flatnonzero(reduced < -TOL)
        if entering.size == 0:
            return "optimal"
        col = entering[0]
        column = tab[:m, col]
        positive = np.flatnonzero(column > TOL)
        if positive.size == 0:
            return "unbounded"
        ratios = tab[positive, -1] / column[positive]
        best = ratios.min()
        ties = positive[ratios <= best + TOL * max(1.0, abs(best))]
        row = ties[np.argmin(basis[ties])]
        _pivot(tab, basis, row, col)
    raise NumericalError(f"simplex did not converge in {max_iter} pivots")


def simplex(c, a, relations, b, lb, ub, max_iter=50_000):
    """Minimize ``c x`` subject to the rows and bounds.

    Returns ``(status, x, objective)`` with status ``optimal``,
    ``infeasible`` or ``unbounded``.
    """
    c = np.asarray(c, dtype=float)
    cost, std, rhs, t, shift, const = _standard_form(c, a, relations, np.asarray(b, dtype=float),
                                                     np.asarray(lb, dtype=float), np.asarray(ub, dtype=float))
    m, n = std.shape
    if not np.all(np.isfinite(std)) or not np.all(np.isfinite(rhs)):
        raise NumericalError("non-finite coefficients in the program")
    neg = rhs < 0
    std[neg] *= -1
    rhs = np.where(neg, -rhs, rhs)

    # phase 1: one artificial per row
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = std
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = rhs
    tab[-1, :n] = -std.sum(axis=0)
    tab[-1, -1] = -rhs.sum()
    basis = np.arange(n, n + m)
    _iterate(tab, basis, n + m, max_iter)
    scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))
    if -tab[-1, -1] > 1e-7 * scale:
        return "infeasible", None, None

    # drive artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            candidates = np.flatnonzero(np.abs(tab[r, :n]) > TOL)
            if candidates.size:
                _pivot(tab, basis, r, candidates[0])
            else:
                keep[r] = False
    rows = np.flatnonzero(keep)
    tab = np.vstack([np.hstack([tab[rows, :n], tab[rows, -1:]]), np.zeros((1, n + 1))])
    basis = basis[rows]

    # phase 2
    tab[-1, :n] = cost
    tab[-1, -1] = 0.0
    for r, col in enumerate(basis):
        if tab[-1, col] != 0:
            tab[-1] -= tab[-1, col] * tab[r]
    status = _iterate(tab, basis, n, max_iter)
    if status == "unbounded":
        return "unbounded", None, None
    y = np.zeros(n)
    y[basis] = tab[:-1, -1]
    x = shift + t @ y[:t.shape[1]]
    return "optimal", x, float(c @ x)
