"""Principal branch of the Lambert W function for real arguments."""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, SolverError

_INV_E = math.exp(-1.0)
_MAX_ITER = 100


def _halley(x: float, w: float) -> float:
    for _ in range(_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0 or abs(f) <= 2e-16 * abs(x):
            return w
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 1e-15 * (1.0 + abs(w)):
            return w
    raise SolverError(f"Halley iteration for W({x}) did not converge")


def _newton_log(x: float) -> float:
    # w + ln w = ln x, well conditioned for large x and free of overflow.
    L1 = math.log(x)
    L2 = math.log(L1)
    w = L1 - L2 + L2 / L1
    prev = math.inf
    for _ in range(_MAX_ITER):
        dw = (w + math.log(w) - L1) / (1.0 + 1.0 / w)
        if abs(dw) >= prev:
            return w
        w -= dw
        if abs(dw) <= 4e-16 * w:
            return w
        prev = abs(dw)
    raise SolverError(f"Newton iteration for W({x}) did not converge")


def _lambert_scalar(x: float) -> float:
    if math.isnan(x):
        return math.nan
    if x < -_INV_E:
        # -1/e itself may round a hair below the true branch point.
        if x >= -_INV_E * (1 + 4e-16):
            return -1.0
        raise DomainError(f"Lambert W is real only for x >= -1/e, got {x}")
    if x == 0.0:
        return 0.0
    if x == math.inf:
        return math.inf
    if x > 1e3:
        return _newton_log(x)
    if x < -0.25:
        p = math.sqrt(max(2.0 * (1.0 + math.e * x), 0.0))
        w0 = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        l1 = math.log1p(x)
        w0 = l1 * (1.0 - math.log1p(l1) / (2.0 + l1))
    return _halley(x, w0)


def lambert_w(x):
    """Principal-branch W(x), the solution of ``w * exp(w) = x`` with ``w >= -1``.

    Accepts scalars or arrays; raises :class:`DomainError` for ``x < -1/e``.
    """
    if np.ndim(x) == 0:
        return _lambert_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_lambert_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


def lambert_w_offset(z: float) -> float:
    """``W(x) + 1`` for ``x = (z - 1) / e``, i.e. parameterised by ``z = 1 + e*x >= 0``.

    Near the branch point ``W + 1`` is tiny and computing it as ``W(x) + 1``
    loses most digits; taking ``z`` directly keeps full relative accuracy.
    """
    if z < 0:
        raise DomainError(f"offset argument must be nonnegative, got {z}")
    if z == 0:
        return 0.0
    if z < 1e-6:
        p = math.sqrt(2.0 * z)
        return p - p * p / 3.0 + 11.0 / 72.0 * p ** 3 - 43.0 / 540.0 * p ** 4
    if z < 10.0:
        # u = W + 1 solves u*e^u - expm1(u) = z.
        p = math.sqrt(2.0 * z)
        u = p - p * p / 3.0 + 11.0 / 72.0 * p ** 3 if z < 0.5 else _lambert_scalar((z - 1.0) * _INV_E) + 1.0
        prev = math.inf
        for _ in range(_MAX_ITER):
            eu = math.exp(u)
            f = u * eu - math.expm1(u) - z
            fp = u * eu
            fpp = (u + 1.0) * eu
            du = 2.0 * f * fp / (2.0 * fp * fp - f * fpp)
            if abs(du) >= prev:
                return u
            u -= du
            if abs(du) <= 4e-16 * u:
                return u
            prev = abs(du)
        raise SolverError(f"offset Lambert iteration did not converge for z={z}")
    return _lambert_scalar((z - 1.0) * _INV_E) + 1.0
