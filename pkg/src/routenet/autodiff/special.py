"""Log-gamma (Lanczos, g=7) and digamma for float64 arrays."""
import numpy as np

_G = 7.0
_LANCZOS = np.array([
    0.99999999999980993, 676.5203681218851, -1259.1392167224028, 771.32342877765313,
    -176.61502916214059, 12.507343278686905, -0.13857109526572012, 9.9843695780195716e-6,
    1.5056327351493116e-7,
])
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _lgamma_right(x):
    # valid for x >= 0.5
    x = x - 1.0
    a = np.full(x.shape, _LANCZOS[0])
    for i in range(1, len(_LANCZOS)):
        a = a + _LANCZOS[i] / (x + i)
    t = x + _G + 0.5
    return _HALF_LOG_2PI + (x + 0.5) * np.log(t) - t + np.log(a)


def lgamma(x):
    """log|Gamma(x)|, reflecting below 0.5."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape)
    right = x >= 0.5
    out[right] = _lgamma_right(x[right])
    left = ~right
    if np.any(left):
        xl = x[left]
        out[left] = np.log(np.pi / np.abs(np.sin(np.pi * xl))) - _lgamma_right(1.0 - xl)
    return out if out.ndim else float(out)


def digamma(x):
    """d/dx log Gamma(x) for x > 0: upward recurrence then the asymptotic series."""
    x = np.array(x, dtype=float)
    acc = np.zeros(x.shape)
    small = x < 10.0
    while np.any(small):
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < 10.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))))
    out = acc + np.log(x) - 0.5 * inv - series
    return out if out.ndim else float(out)
