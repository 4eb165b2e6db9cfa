"""Optional numba-accelerated inner kernels with pure-numpy fallbacks.

The backend is chosen once at import time: numba is used when importable
unless the environment variable ``KINAP_NUMBA`` is set to ``0``/``false``/
``off``.  Every jitted kernel has a numpy twin with identical semantics;
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("KINAP_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

try:  # pragma: no cover - import guard
    if _want_numba:
        from numba import njit, prange
        USING_NUMBA = True
    else:
        raise ImportError
except ImportError:  # pragma: no cover
    USING_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range  # type: ignore


def _as3d(a: np.ndarray):
    if a.ndim == 2:
        return a[None, :, :], True
    if a.ndim == 3:
        return a, False
    lead = a.shape[:-2]
    return a.reshape((-1,) + a.shape[-2:]), lead


def fp_apply_numpy(h: np.ndarray, sqrt_m: np.ndarray, dv: float) -> np.ndarray:
    """Symmetric Fokker-Planck stencil in flux form, added per velocity axis.

    Along each axis with u = h / sqrt_m and edge coefficients sqrt_m of the
    neighbors: out[j] = (sm[j+1]*(u[j+1]-u[j]) - sm[j-1]*(u[j]-u[j-1])) / dv^2,
    with no flux through the box boundary.  u is constant when h = sqrt_m, so
    the operator annihilates sqrt_m exactly.
    """
    u = h / sqrt_m
    out = np.zeros_like(h)
    inv = 1.0 / dv**2
    for ax in (-2, -1):
        um = np.moveaxis(u, ax, -1)
        sm = np.moveaxis(sqrt_m, ax, -1)
        o = np.moveaxis(out, ax, -1)
        du = um[..., 1:] - um[..., :-1]
        flux = sm[..., 1:] * du
        o[..., 0] += inv * flux[..., 0]
        o[..., 1:-1] += inv * (sm[..., 2:] * du[..., 1:] - sm[..., :-2] * du[..., :-1])
        o[..., -1] += inv * (-sm[..., -2] * du[..., -1])
    return out


@njit(cache=True)
def _fp_apply_3d(h, sm, dv):  # pragma: no cover - exercised via dispatch
    ns, n1, n2 = h.shape
    out = np.zeros_like(h)
    inv = 1.0 / (dv * dv)
    for s in range(ns):
        u = h[s] / sm[s]
        for i in range(n1):
            for j in range(n2):
                acc = 0.0
                if i == 0:
                    acc += sm[s, 1, j] * (u[1, j] - u[0, j])
                elif i == n1 - 1:
                    acc += -sm[s, n1 - 2, j] * (u[n1 - 1, j] - u[n1 - 2, j])
                else:
                    acc += sm[s, i + 1, j] * (u[i + 1, j] - u[i, j]) - sm[
                        s, i - 1, j
                    ] * (u[i, j] - u[i - 1, j])
                if j == 0:
                    acc += sm[s, i, 1] * (u[i, 1] - u[i, 0])
                elif j == n2 - 1:
                    acc += -sm[s, i, n2 - 2] * (u[i, n2 - 1] - u[i, n2 - 2])
                else:
                    acc += sm[s, i, j + 1] * (u[i, j + 1] - u[i, j]) - sm[
                        s, i, j - 1
                    ] * (u[i, j] - u[i, j - 1])
                out[s, i, j] = acc * inv
    return out


def fp_apply_numba(h: np.ndarray, sqrt_m: np.ndarray, dv: float) -> np.ndarray:
    a, lead = _as3d(np.ascontiguousarray(h))
    b, _ = _as3d(np.ascontiguousarray(sqrt_m))
    out = _fp_apply_3d(a, b, float(dv))
    if lead is True:
        return out[0]
    if lead is False:
        return out
    return out.reshape(h.shape)


def minmod_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Slope limiter: the smaller-magnitude argument when signs agree, else 0."""
    same = a * b > 0.0
    return np.where(same, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


@njit(cache=True)
def _minmod_flat(a, b):  # pragma: no cover - exercised via dispatch
    out = np.zeros_like(a)
    for i in range(a.size):
        x = a[i]
        y = b[i]
        if x * y > 0.0:
            out[i] = x if abs(x) < abs(y) else y
    return out


def minmod_numba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = _minmod_flat(
        np.ascontiguousarray(a).ravel(), np.ascontiguousarray(b).ravel()
    )
    return out.reshape(a.shape)


if USING_NUMBA:
    fp_apply = fp_apply_numba
    minmod = minmod_numba
else:
    fp_apply = fp_apply_numpy
    minmod = minmod_numpy
