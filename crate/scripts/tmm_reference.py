#!/usr/bin/env python3
"""Independent normal-incidence transmission reference.

Uses the characteristic-matrix (Abeles) formulation rather than the
interface/propagation product of the Rust code, with indices linearly
interpolated from the shipped tables.

    python3 scripts/tmm_reference.py 54,44,54,57,43,35,44,64 > golden.csv
"""
import csv
import pathlib
import sys

import numpy as np

DATA = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "data"


def table(name):
    with open(DATA / f"{name}.csv") as f:
        rows = list(csv.DictReader(f))
    wl = np.array([float(r["wl"]) for r in rows])
    n = np.array([float(r["n"]) for r in rows])
    k = np.array([float(r.get("k") or 0.0) for r in rows])
    return wl, n, k


def index(name, wavelengths):
    wl, n, k = table(name)
    return np.interp(wavelengths, wl, n) + 1j * np.interp(wavelengths, wl, k)


def transmittance(thicknesses, wavelengths):
    indices = [index("sio2" if i % 2 == 0 else "tio2", wavelengths) for i in range(len(thicknesses))]
    out = []
    for j, lam in enumerate(wavelengths):
        m = np.eye(2, dtype=complex)
        for d, n in zip(thicknesses, indices):
            delta = 2 * np.pi * n[j] * d / lam
            layer = np.array([[np.cos(delta), -1j * np.sin(delta) / n[j]], [-1j * n[j] * np.sin(delta), np.cos(delta)]])
            m = m @ layer
        eta0 = etas = 1.0
        t = 2 * eta0 / (eta0 * m[0, 0] + eta0 * etas * m[0, 1] + m[1, 0] + etas * m[1, 1])
        out.append((etas / eta0) * abs(t) ** 2)
    return out


def main():
    thicknesses = [float(x) for x in sys.argv[1].split(",")]
    wavelengths = np.arange(400, 801, dtype=float)
    print("wl,T")
    for lam, t in zip(wavelengths, transmittance(thicknesses, wavelengths)):
        print(f"{int(lam)},{t:.15e}")


if __name__ == "__main__":
    main()
