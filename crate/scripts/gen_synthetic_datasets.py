"""Regenerate the synthetic stand-in tables bundled under crates/core/data.

Hubble, Kepler and Bode are transcribed tables and are not produced here.
Langmuir, dual-site Langmuir and Nikuradse are generated from their
physical model families with seeded multiplicative noise.
"""
import math
import os

import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")


def write(name, header, rows, fmt):
    with open(os.path.join(OUT, name + ".csv"), "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f.format(v) for f, v in zip(fmt, row)) + "\n")


def langmuir(rng):
    p = np.array([1.2, 2.5, 4.0, 6.1, 8.5, 12.0, 17.3, 23.9, 33.1, 45.2, 61.0, 82.4, 110.7])
    q = 38.4 * p / (14.6 + p)
    q *= 1.0 + 0.012 * rng.standard_normal(p.size)
    write("langmuir", ["x1", "y"], zip(p, q), ["{:.1f}", "{:.3f}"])


def dual_site(rng):
    p = np.geomspace(0.1, 100.0, 18)
    q = 2.1 * p / (0.45 + p) + 3.2 * p / (18.0 + p)
    q *= 1.0 + 0.006 * rng.standard_normal(p.size)
    write("dual_site_langmuir", ["x1", "y"], zip(p, q), ["{:.4f}", "{:.4f}"])


def colebrook(re, rel_rough):
    lam = 0.02
    for _ in range(100):
        lam = (-2.0 * math.log10(rel_rough / 3.7 + 2.51 / (re * math.sqrt(lam)))) ** -2
    return lam


def nikuradse(rng):
    groups = [(15.0, 60), (30.6, 60), (60.0, 60), (126.0, 61), (252.0, 61), (507.0, 60)]
    rows = []
    for r_over_k, count in groups:
        log_re = np.linspace(2.6, 6.0, count)
        for lr in log_re:
            re = 10.0 ** lr
            lam = 64.0 / re if re < 2300.0 else colebrook(re, 1.0 / (2.0 * r_over_k))
            lam *= 1.0 + 0.01 * rng.standard_normal()
            rows.append((lr, r_over_k, math.log10(100.0 * lam)))
    write("nikuradse", ["x1", "x2", "y"], rows, ["{:.4f}", "{:.1f}", "{:.5f}"])


if __name__ == "__main__":
    rng = np.random.default_rng(1918)
    langmuir(rng)
    dual_site(rng)
    nikuradse(rng)
