"""Linear algebra and signal primitives shared by the rest of the package.

Everything here is a pure function of its inputs. Complex matrices are plain
``numpy.ndarray`` objects; no wrapper type is imposed on callers.
"""

from typing import Tuple

import numpy as np

__all__ = [
    "RankError",
    "DegenerateFitError",
    "RANK_TOL",
    "fft",
    "qr_tall",
    "zf_pseudo_inverse",
    "line_fit",
    "unwrap_phase",
    "wrap_phase",
]

# Relative tolerance on |R_kk| / ||A||_F below which a matrix is rank deficient.
RANK_TOL = 1e-9


class RankError(ValueError):
    """Raised when a matrix does not have full column rank."""


class DegenerateFitError(ValueError):
    """Raised when a line fit has fewer than two distinct abscissae."""


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft(v, inverse: bool = False) -> np.ndarray:
    """Unitary DFT (or inverse DFT) of a power-of-two length vector.

    Both directions are scaled by ``1/sqrt(N)`` so that the transform
    preserves energy.
    """
    v = np.asarray(v, dtype=complex)
    n = v.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    if inverse:
        return np.fft.ifft(v, norm="ortho")
    return np.fft.fft(v, norm="ortho")


def qr_tall(a) -> Tuple[np.ndarray, np.ndarray]:
    """Thin QR factorization with a real non-negative diagonal in ``R``.

    Parameters
    ----------
    a : array_like, shape (M, K)
        Complex matrix with ``M >= K`` and full column rank.

    Returns
    -------
    q : np.ndarray, shape (M, K)
        Orthonormal columns, ``q^H q = I``.
    r : np.ndarray, shape (K, K)
        Upper triangular with ``diag(r) >= 0`` (real).

    Raises
    ------
    RankError
        If any ``|r_kk|`` falls below ``RANK_TOL * ||a||_F``.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError("qr_tall expects a 2-D matrix")
    m, k = a.shape
    if m < k:
        raise ValueError(f"qr_tall needs M >= K, got {m}x{k}")
    # LAPACK Householder, then rotate each column so diag(R) is real >= 0.
    q, r = np.linalg.qr(a, mode="reduced")
    d = np.diagonal(r)
    mag = np.abs(d)
    norm = np.linalg.norm(a)
    if norm == 0 or np.any(mag < RANK_TOL * norm):
        raise RankError("matrix is rank deficient")
    phase = d / mag
    q = q * phase[np.newaxis, :]
    r = np.conj(phase)[:, np.newaxis] * r
    r[np.diag_indices(k)] = mag
    return q, np.triu(r)


def zf_pseudo_inverse(h) -> np.ndarray:
    """Return ``H (H^H H)^{-1}`` so that ``H^H @ result = I``.

    Computed as ``Q R^{-H}`` from :func:`qr_tall`, which avoids forming
    the Gram matrix explicitly.
    """
    h = np.asarray(h, dtype=complex)
    m, k = h.shape
    if k > m:
        raise ValueError(f"zero forcing needs K <= M, got M={m}, K={k}")
    q, r = qr_tall(h)
    # R^{-H} = (R^{-1})^H; solve R X = I for the upper triangular inverse.
    r_inv = np.linalg.solve(r, np.eye(k))
    return q @ r_inv.conj().T


def line_fit(xs, ys) -> Tuple[float, float]:
    """Ordinary least-squares line ``y = slope * x + intercept``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D sequences of equal length")
    if x.size < 2:
        raise DegenerateFitError("need at least two points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 0.0:
        raise DegenerateFitError("all x values are equal")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    return slope, intercept


def wrap_phase(phi):
    """Map angles to ``(-pi, pi]``."""
    phi = np.asarray(phi, dtype=float)
    return np.pi - np.mod(np.pi - phi, 2.0 * np.pi)


def unwrap_phase(phases) -> np.ndarray:
    """Remove 2*pi jumps so successive differences lie in ``(-pi, pi]``.

    The first sample is kept as is. Unlike :func:`numpy.unwrap`, a jump of
    exactly ``-pi`` is interpreted as ``+pi``.
    """
    p = np.asarray(phases, dtype=float)
    if p.size < 2:
        return p.copy()
    steps = wrap_phase(np.diff(p))
    out = np.empty_like(p)
    out[0] = p[0]
    out[1:] = p[0] + np.cumsum(steps)
    return out
