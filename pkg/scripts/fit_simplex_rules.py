"""Fit fully symmetric, positive, interior quadrature rules on the unit triangle.

Each rule is parameterized by its orbit structure in barycentric coordinates:
the centroid, orbits (a, a, 1-2a) of three points and orbits (a, b, 1-a-b) of
six points. Orbit parameters are found by least squares on the monomial moment
equations, restarted from random seeds until the residual hits rounding level.

Usage: python scripts/fit_simplex_rules.py > rules.txt
"""
import itertools
import math
import sys

import numpy as np
from scipy.optimize import least_squares

# degree -> (centroid?, number of 3-orbits, number of 6-orbits)
STRUCTURES = {
    4: (0, 2, 0),
    5: (1, 2, 0),
    6: (0, 2, 1),
    7: (0, 3, 1),
    8: (1, 3, 1),
    9: (1, 4, 1),
    10: (1, 2, 3),
}


def moments(degree):
    exps = [(i, k - i) for k in range(degree + 1) for i in range(k + 1)]
    exact = np.array([math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2) for a, b in exps])
    return exps, exact


def expand(params, structure):
    c0, n3, n6 = structure
    pts, wts = [], []
    k = 0
    if c0:
        pts.append((1 / 3, 1 / 3))
        wts.append(params[k])
        k += 1
    for _ in range(n3):
        a, w = params[k], params[k + 1]
        k += 2
        for bary in ((a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)):
            pts.append(bary[:2])
            wts.append(w)
    for _ in range(n6):
        a, b, w = params[k], params[k + 1], params[k + 2]
        k += 3
        for bary in itertools.permutations((a, b, 1 - a - b)):
            pts.append(bary[:2])
            wts.append(w)
    return np.array(pts), np.array(wts)


def residual(params, structure, exps, exact):
    pts, wts = expand(params, structure)
    vals = np.array([np.sum(wts * pts[:, 0] ** a * pts[:, 1] ** b) for a, b in exps])
    return (vals - exact) / exact


def fit(degree, seed=0, tries=2000):
    structure = STRUCTURES[degree]
    exps, exact = moments(degree)
    rng = np.random.default_rng(seed)
    c0, n3, n6 = structure
    for _ in range(tries):
        x0, lo, hi = [], [], []
        if c0:
            x0 += [rng.uniform(0.01, 0.2)]
            lo += [0.0]
            hi += [0.5]
        for _ in range(n3):
            x0 += [rng.uniform(0.01, 0.49), rng.uniform(0.005, 0.1)]
            lo += [0.0, 0.0]
            hi += [0.5, 0.5]
        for _ in range(n6):
            a = rng.uniform(0.0, 0.5)
            x0 += [a, rng.uniform(0.0, 1 - a), rng.uniform(0.005, 0.05)]
            lo += [0.0, 0.0, 0.0]
            hi += [1.0, 1.0, 0.5]
        sol = least_squares(residual, x0, args=(structure, exps, exact), bounds=(lo, hi), xtol=3e-16, ftol=3e-16, gtol=3e-16)
        pts, wts = expand(sol.x, structure)
        inside = np.all(pts > 1e-8) and np.all(pts.sum(axis=1) < 1 - 1e-8)
        if inside and np.all(wts > 0) and np.max(np.abs(sol.fun)) < 1e-14:
            # polish on the unconstrained problem
            sol = least_squares(residual, sol.x, args=(structure, exps, exact), method="lm", xtol=3e-16, ftol=3e-16, gtol=3e-16)
            return sol.x, np.max(np.abs(sol.fun))
    raise RuntimeError(f"no rule found for degree {degree}")


def main():
    print("_SYMMETRIC_ORBITS = {")
    for degree, structure in STRUCTURES.items():
        params, res = fit(degree)
        print(f"    # degree {degree}, max relative moment residual {res:.1e}")
        print(f"    {degree}: ({structure!r}, (")
        for p in params:
            print(f"        {float(p)!r},")
        print("    )),")
        sys.stdout.flush()
    print("}")


if __name__ == "__main__":
    main()
