"""Independent reference computations used only by the tests."""

import itertools

import numpy as np


def _patterns(k):
    """All sign patterns of length ``k``, fewest nonzeros first."""
    return sorted(itertools.product((0, 1, -1), repeat=k), key=lambda s: sum(x != 0 for x in s))


def enumerate_projection(prob, tol=1e-9, first_only=False):
    """Solve the projection QP by trying every active-set pattern.

    Each voltage-bounded bus is inactive / at its upper bound / at its lower
    bound, and each decision variable is free / at q_max / at q_min. For each
    pattern the equality-constrained least-distance problem is solved in
    closed form and the KKT conditions are checked. The QP is strictly convex,
    so every KKT point is the optimum. By default all accepted candidates are
    returned so the caller can check they agree; ``first_only`` stops at the
    first one.
    """
    m = prob.model
    A = m.X[:, prob.controllable]
    base = m.v0 + m.R @ prob.p_now + m.X @ prob.q_background
    n, nc = A.shape
    q0 = prob.q_proposed
    lo, hi = prob.q_min, prob.q_max
    found = []
    box_patterns = _patterns(nc)
    for vpat in _patterns(n):
        vidx = [i for i in range(n) if vpat[i]]
        if len(vidx) > nc:
            continue
        signs = np.array([vpat[i] for i in vidx], dtype=float)
        G = A[vidx] * signs[:, None]
        b = np.array([prob.v_upper[i] - base[i] if vpat[i] > 0 else base[i] - prob.v_lower[i]
                      for i in vidx])
        for bpat in box_patterns:
            fixed = np.array([s != 0 for s in bpat], dtype=bool)
            free = ~fixed
            if len(vidx) > free.sum():
                continue
            q = q0.copy()
            q[fixed] = np.where(np.array(bpat)[fixed] > 0, hi[fixed], lo[fixed])
            mu = np.zeros(len(vidx))
            if vidx:
                Gf = G[:, free]
                K = Gf @ Gf.T
                if np.linalg.matrix_rank(K) < len(vidx):
                    continue
                rhs = b - G[:, fixed] @ q[fixed]
                mu = np.linalg.solve(K, Gf @ q0[free] - rhs)
                q[free] = q0[free] - Gf.T @ mu
            if np.any(mu < -tol):
                continue
            if np.any(q < lo - tol) or np.any(q > hi + tol):
                continue
            v = base + A @ q
            if np.any(v > prob.v_upper + tol) or np.any(v < prob.v_lower - tol):
                continue
            grad = q0 - (G.T @ mu if vidx else 0.0)
            ok = True
            for j, s in enumerate(bpat):
                if s > 0 and grad[j] < hi[j] - tol:
                    ok = False
                if s < 0 and grad[j] > lo[j] + tol:
                    ok = False
            if ok:
                found.append((q, vpat, bpat))
                if first_only:
                    return found
    return found


def two_bus_flow(v0, r, x, p1, q1):
    """Closed-form DistFlow solution of a single line feeding one bus.

    With ``P = -p1 + r l`` and ``Q = -q1 + x l`` the current definition
    ``l v0 = P^2 + Q^2`` is a quadratic in ``l``; the physical root is the
    smaller one.
    """
    P0, Q0 = -p1, -q1
    a = r * r + x * x
    b = 2 * r * P0 + 2 * x * Q0 - v0
    c = P0 * P0 + Q0 * Q0
    disc = b * b - 4 * a * c
    # numerically stable smaller root
    l = 2 * c / (-b + np.sqrt(disc))
    P = P0 + r * l
    Q = Q0 + x * l
    v1 = v0 - 2 * (r * P + x * Q) + a * l
    return v1, P, Q, l


def random_projection_problem(rng, n=5, spread=0.03):
    """Random 5-bus projection instance with bounds placed near the operating point.

    Bounds are drawn within ``spread`` of the uncontrolled linear voltage so
    that a large random proposal usually hits one or more of them.
    """
    from saver.feeder import random_feeder
    from saver.linearization import build_sensitivity
    from saver.safety import ProjectionProblem

    k = int(rng.integers(2, n + 1))
    ctrl = sorted(rng.choice(np.arange(1, n + 1), size=k, replace=False).tolist())
    f = random_feeder(n, rng, controllable=ctrl, q_limit=float(rng.uniform(0.2, 1.0)))
    m = build_sensitivity(f)
    p = rng.uniform(-0.5, 0.2, n)
    base = m.v0 + m.R @ p
    lower = base - rng.uniform(0.0, spread, n)
    upper = base + rng.uniform(0.0, spread, n)
    q_prop = rng.uniform(-1.2, 1.2, k) * f.q_max
    return ProjectionProblem(q_prop, p, m, f.controllable, lower, upper, f.q_min, f.q_max)
