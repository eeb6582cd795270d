"""Stability chart of z'' + (delta + eps cos sigma) z = 0.

Sweeps the (delta, eps) plane with the period-map spectrum and prints the
first instability tongue's edges per eps row. Writes a CSV of max |mu| over
the grid for external plotting.
"""
import argparse
import csv

import numpy as np

from gfloquet import LinearMemorySystem, PeriodicGrid, build_monodromy


def max_multiplier(delta, eps, n):
    def coefficient(s):
        return np.array([[0.0, 1.0], [-(delta + eps * np.cos(s)), 0.0]])

    op = build_monodromy(LinearMemorySystem(2, coefficient),
                         PeriodicGrid(2.0 * np.pi, n, 0.0))
    return float(np.max(np.abs(np.linalg.eigvals(op.matrix))))


def tongue_edges(eps, deltas, mus):
    unstable = mus > 1.0 + 1e-6
    edges = []
    for i in range(len(deltas) - 1):
        if unstable[i] != unstable[i + 1]:
            edges.append(0.5 * (deltas[i] + deltas[i + 1]))
    return edges


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--delta-max", type=float, default=1.2)
    ap.add_argument("--n-delta", type=int, default=121)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.4])
    ap.add_argument("--grid", type=int, default=128)
    ap.add_argument("--out", default="mathieu_chart.csv")
    args = ap.parse_args()

    deltas = np.linspace(0.0, args.delta_max, args.n_delta)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "delta", "max_multiplier"])
        for eps in args.eps:
            mus = np.array([max_multiplier(d, eps, args.grid) for d in deltas])
            for d, m in zip(deltas, mus):
                writer.writerow([f"{eps:.6g}", f"{d:.6g}", f"{m:.9g}"])
            edges = tongue_edges(eps, deltas, mus)
            print(f"eps = {eps:.3g}: tongue edges near delta =",
                  ", ".join(f"{e:.4f}" for e in edges) or "none in range")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
