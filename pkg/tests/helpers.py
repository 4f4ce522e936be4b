"""Shared generators and reference implementations for the tests."""
import numpy as np

from geotex.tps import kernel_value

ACCEPTANCE = []  # one summary line per acceptance criterion, printed at session end


def record(number, title, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def blob_contour(rng, k=400):
    """Star-shaped smooth closed curve, counter-clockwise on screen, in [0, 1]^2."""
    th = np.arange(k) / k * 2 * np.pi
    r = 1.0 + sum(rng.uniform(-0.15, 0.15) * np.cos(h * th + rng.uniform(0, 2 * np.pi)) for h in range(2, 5))
    p = np.stack([r * np.cos(th), -r * np.sin(th)], 1)
    return (p - p.min(0)) / (p.max(0) - p.min(0))


def random_tps(rng, norm=0.05, centers=6):
    """Displacement field x -> x + a + A x + sum w_j U(|x - c_j|).

    The bending weights are projected so they carry no affine part; the
    stacked coefficients (a, A, w) have Frobenius norm ``norm``.
    """
    c = rng.random((centers, 2))
    p = np.hstack([np.ones((centers, 1)), c])
    q, _ = np.linalg.qr(p, mode="complete")
    null = q[:, 3:]
    w = null @ rng.normal(size=(centers - 3, 2))
    aff = rng.normal(size=(3, 2))
    coef = np.vstack([aff, w])
    coef *= norm / np.linalg.norm(coef)
    aff, w = coef[:3], coef[3:]

    def apply(x):
        d = np.linalg.norm(x[:, None, :] - c[None], axis=2)
        return x + aff[0] + x @ aff[1:] + kernel_value(d) @ w

    return apply


def reference_erode(mask, se):
    h, w = mask.shape
    r = se.shape[0] // 2
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            ok = True
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    if se[di + r, dj + r]:
                        y, x = i + di, j + dj
                        if not (0 <= y < h and 0 <= x < w and mask[y, x]):
                            ok = False
            out[i, j] = ok
    return out


def reference_dilate(mask, se):
    h, w = mask.shape
    r = se.shape[0] // 2
    out = np.zeros_like(mask)
    for i, j in zip(*np.nonzero(mask)):
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                if se[di + r, dj + r] and 0 <= i + di < h and 0 <= j + dj < w:
                    out[i + di, j + dj] = True
    return out
