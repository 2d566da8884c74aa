"""Regenerate the free Green function fixture shipped with the package.

Every value comes from the direct tensor quadrature of the lattice
Fourier integral, not from the radial route the library uses at run
time, so the fixture doubles as an independent cross-check.  Errors are
the quadrature's own two-rule comparison.

Usage: python3 scripts/build_green_fixture.py
"""

from __future__ import annotations

import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from usflab.harmonic import _CACHE_FORMAT, green_free_quadrature

DISPLACEMENTS = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (1, 1, 1),
    (2, 0, 0),
    (2, 1, 1),
    (0, 0, 0, 0, 0),
    (1, 0, 0, 0, 0),
    (1, 1, 0, 0, 0),
    (1, 1, 1, 1, 1),
    (2, 0, 0, 0, 0),
    (2, 1, 1, 0, 0),
    (3, 0, 0, 0, 0),
    (3, 2, 1, 1, 0),
    (4, 0, 0, 0, 0),
]


def main() -> None:
    out_path = os.path.join(
        os.path.dirname(__file__), "..", "src", "usflab", "data",
        "green_free_fixture.txt")
    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    lines = [f"# {_CACHE_FORMAT}"]
    for x in DISPLACEMENTS:
        t0 = time.time()
        value, err = green_free_quadrature(x)
        coords = " ".join(str(c) for c in sorted((abs(c) for c in x), reverse=True))
        lines.append(f"{len(x)} {coords} {value:.17e} {err:.3e}")
        print(f"{x}: {value:.12e} +- {err:.1e}  [{time.time() - t0:.1f}s]")
    with open(out_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
