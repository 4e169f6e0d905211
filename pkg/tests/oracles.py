"""Independent reference computations used by the tests.

Nothing here imports the package: mappings are written out as plain numpy
expressions and zeros are found by a grid scan refined with a finite-difference
real Newton iteration.
"""

from __future__ import annotations

import numpy as np


def wilmshurst_f(n):
    return lambda z: (z - 1) ** n + z ** n + np.conj(1j * (z - 1) ** n - 1j * z ** n)


def mpw_f(n, rho):
    return lambda z: z - np.conj(z ** (n - 1) / (z ** n - rho ** n))


def rhie_f(n, rho, eps):
    return lambda z: z - np.conj((1 - eps) * z ** (n - 1) / (z ** n - rho ** n) + eps / z)


def log_example_f(z):
    return z ** 2 + np.conj(1 / z + 1 / (z + 1)) + 2 * np.log(np.abs(z))


def chang_refsdal_f(z):
    return z - 1 / np.conj(z)


def chang_refsdal_preimages(eta: complex) -> np.ndarray:
    root = np.sqrt(1 + 4 / abs(eta) ** 2)
    return np.array([(1 + root) / 2 * eta, (1 - root) / 2 * eta])


def fd_jacobian_det(func, z, h=1e-6):
    """Determinant of the real 2x2 Jacobian of ``(Re f, Im f)`` by central differences."""
    h = h * (1 + abs(z))
    fx = (func(z + h) - func(z - h)) / (2 * h)
    fy = (func(z + 1j * h) - func(z - 1j * h)) / (2 * h)
    return fx.real * fy.imag - fx.imag * fy.real


def fd_newton(func, z, eta=0j, iters=60, tol=1e-14):
    """Real 2-D Newton with a finite-difference Jacobian; returns (z, residual)."""
    z = complex(z)
    for _ in range(iters):
        F = func(z) - eta
        h = 1e-7 * (1 + abs(z))
        fx = (func(z + h) - func(z - h)) / (2 * h)
        fy = (func(z + 1j * h) - func(z - 1j * h)) / (2 * h)
        J = np.array([[fx.real, fy.real], [fx.imag, fy.imag]])
        try:
            dx, dy = np.linalg.solve(J, [-F.real, -F.imag])
        except np.linalg.LinAlgError:
            break
        z += complex(dx, dy)
        if not np.isfinite(z):
            break
        if abs(complex(dx, dy)) <= tol * (1 + abs(z)):
            break
    with np.errstate(all="ignore"):
        return z, abs(func(z) - eta)


def grid_scan_zeros(func, bbox, m=600, threshold=np.inf, eta=0j, res_tol=1e-12):
    """Local minima of ``|f - eta|`` on an ``m x m`` grid, refined by :func:`fd_newton`.

    Returns the distinct refined solutions sorted by (Re, Im).
    """
    x0, x1, y0, y1 = bbox
    xs = np.linspace(x0, x1, m)
    ys = np.linspace(y0, y1, m)
    Z = xs[None, :] + 1j * ys[:, None]
    with np.errstate(all="ignore"):
        A = np.abs(func(Z) - eta)
    A[~np.isfinite(A)] = np.inf
    core = A[1:-1, 1:-1]
    is_min = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= core <= A[1 + di:m - 1 + di, 1 + dj:m - 1 + dj]
    is_min &= core < threshold
    found = []
    for z0 in Z[1:-1, 1:-1][is_min]:
        z, res = fd_newton(func, z0, eta)
        if res <= res_tol * (1 + abs(eta) + abs(z)) and x0 <= z.real <= x1 and y0 <= z.imag <= y1:
            if all(abs(z - w) > 1e-8 for w in found):
                found.append(z)
    return sort_complex(found)


def sort_complex(points) -> np.ndarray:
    pts = np.asarray(points, dtype=complex)
    return pts[np.lexsort((pts.imag, pts.real))]


def match_multisets(a, b, tol) -> bool:
    """Greedy one-to-one matching of two point sets within ``tol``."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return False
    for z in a:
        if not b:
            return False
        d = [abs(z - w) for w in b]
        k = int(np.argmin(d))
        if d[k] > tol:
            return False
        b.pop(k)
    return True


def polygon_winding(points, eta) -> int:
    """Winding number by the crossing-number rule (independent of angle sums)."""
    p = np.asarray(points, dtype=complex) - eta
    q = np.roll(p, -1)
    up = (p.imag <= 0) & (q.imag > 0)
    down = (p.imag > 0) & (q.imag <= 0)
    with np.errstate(all="ignore"):
        cross = p.real * q.imag - q.real * p.imag
    return int(np.sum(up & (cross > 0)) - np.sum(down & (cross < 0)))


def omega_sign_change_count(num, den, bbox, m=800):
    """Roots of ``num - den`` inside ``bbox`` from a grid argument-principle count.

    ``num`` and ``den`` are ascending coefficient arrays.  The count is the
    winding of ``P = num - den`` around the boundary of the box.
    """
    c = np.asarray(num, dtype=complex)
    d = np.asarray(den, dtype=complex)
    size = max(c.size, d.size)
    p = np.zeros(size, dtype=complex)
    p[: c.size] += c
    p[: d.size] -= d
    x0, x1, y0, y1 = bbox
    t = np.linspace(0, 1, m, endpoint=False)
    edge = np.concatenate([x0 + (x1 - x0) * t + 1j * y0, x1 + 1j * (y0 + (y1 - y0) * t),
                           x1 - (x1 - x0) * t + 1j * y1, x0 + 1j * (y1 - (y1 - y0) * t)])
    vals = np.polyval(p[::-1], edge)
    return int(round(np.angle(np.roll(vals, -1) / vals).sum() / (2 * np.pi)))
