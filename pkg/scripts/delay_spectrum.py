"""Multiplier spectrum of z'(t) = -g z(t - 1) across the gain g.

The exact Hopf threshold is g = pi/2, where a conjugate multiplier pair
crosses the unit circle at +-i. Prints the dominant magnitude per gain and
the numerically bracketed threshold.
"""
import argparse

import numpy as np

from gfloquet import DelayTap, LinearMemorySystem, PeriodicGrid, floquet_spectrum


def dominant(gain, n):
    tap = DelayTap(1.0, lambda t, g=gain: np.array([[-g]]))
    system = LinearMemorySystem(1, lambda t: np.array([[0.0]]), delay_taps=(tap,))
    dec = floquet_spectrum(system, PeriodicGrid(1.0, n, 1.0), modes=2)
    return float(np.max(np.abs(dec.retained)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g-min", type=float, default=0.5)
    ap.add_argument("--g-max", type=float, default=2.5)
    ap.add_argument("--count", type=int, default=21)
    ap.add_argument("--grid", type=int, default=128)
    args = ap.parse_args()

    gains = np.linspace(args.g_min, args.g_max, args.count)
    mags = [dominant(g, args.grid) for g in gains]
    for g, m in zip(gains, mags):
        marker = "unstable" if m > 1.0 + 1e-6 else "stable"
        print(f"g = {g:6.3f}  max|mu| = {m:.6f}  ({marker})")

    lo, hi = args.g_min, args.g_max
    if dominant(lo, args.grid) < 1.0 < dominant(hi, args.grid):
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if dominant(mid, args.grid) < 1.0 else (lo, mid)
        print(f"threshold gain = {0.5 * (lo + hi):.8f} (exact pi/2 = {np.pi / 2:.8f})")


if __name__ == "__main__":
    main()
