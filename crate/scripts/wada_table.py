"""Regenerates the WADA statistic table embedded in crates/core/src/augment/wada.rs.

Speech is modelled as a symmetric gamma-amplitude signal (shape 0.4) and noise
as Gaussian. For each SNR on a 1 dB grid from -20 to 100 dB this evaluates
G = ln E|z| - E ln|z| for z = speech + noise by nested quadrature.
"""
import numpy as np
from scipy import integrate, special

ALPHA = 0.4


def statistic(db):
    xi = 10 ** (db / 10)
    sig = np.sqrt(ALPHA * (ALPHA + 1) / xi)

    def mean_abs(g):
        return sig * np.sqrt(2 / np.pi) * np.exp(-g * g / (2 * sig * sig)) + g * special.erf(
            g / (sig * np.sqrt(2))
        )

    def mean_log_abs(g):
        f = lambda z: np.log(abs(g + sig * z) + 1e-300) * np.exp(-z * z / 2) / np.sqrt(2 * np.pi)
        c = -g / sig
        pts = [c] if -12 < c < 12 else None
        return integrate.quad(f, -12, 12, points=pts, limit=400, epsabs=1e-13)[0]

    # substitute g = t^(1/alpha) to remove the gamma density singularity at 0
    w = lambda t: np.exp(-(t ** (1 / ALPHA))) / special.gamma(ALPHA + 1)
    top = 60**ALPHA
    e_abs = integrate.quad(lambda t: mean_abs(t ** (1 / ALPHA)) * w(t), 0, top, limit=400, epsabs=1e-13)[0]
    e_log = integrate.quad(lambda t: mean_log_abs(t ** (1 / ALPHA)) * w(t), 0, top, limit=400, epsabs=1e-12)[0]
    return np.log(e_abs) - e_log


if __name__ == "__main__":
    vals = [statistic(db) for db in range(-20, 101)]
    for i in range(0, len(vals), 6):
        print("    " + " ".join("%.8f," % v for v in vals[i : i + 6]))
