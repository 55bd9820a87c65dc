"""Regenerate the bundled instance corpus.

    python -m branchlab.instances.generate [outdir]

25 pure-integer instances, at most 10 integer variables and 10 rows, all
data integral, all variables boxed so a lattice enumeration oracle can
certify optima.  Generation is seeded and deterministic; instances whose
LP relaxation is infeasible, unbounded, or already integral are rejected
and redrawn.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from branchlab.lp import LpStatus, solve
from branchlab.model import MipProblem, detect_fractional
from branchlab.mps import write_mps

SEED = 20240229
COUNT = 25


def draw_instance(rng, index: int) -> MipProblem | None:
    kind = index % 3
    if kind == 0:
        n = int(rng.integers(4, 7))
        hi = 4
    elif kind == 1:
        n = int(rng.integers(7, 11))
        hi = 1                      # binaries
    else:
        n = int(rng.integers(3, 6))
        hi = int(rng.integers(3, 6))
    m = int(rng.integers(2, min(10, n + 3)))
    obj = rng.integers(-9, 10, size=n).astype(float)
    if not obj.any():
        obj[0] = 1.0
    rows = rng.integers(-5, 6, size=(m, n)).astype(float)
    mid = rng.uniform(0.3 * hi, 0.8 * hi, size=n)
    rhs = np.floor(rows @ mid - rng.uniform(0.5, 2.5, size=m))
    p = MipProblem(name=f"lab{index:02d}", obj=obj, rows=rows, rhs=rhs,
                   lower=np.zeros(n), upper=np.full(n, float(hi)),
                   integer_mask=np.ones(n, bool))
    sol = solve(p.to_lp())
    if sol.status is not LpStatus.OPTIMAL:
        return None
    if not detect_fractional(sol, p):
        return None                 # integral root: nothing to compare
    return p


def build_corpus(outdir: Path) -> list[Path]:
    rng = np.random.default_rng(SEED)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    index = 0
    while index < COUNT:
        p = draw_instance(rng, index)
        if p is None:
            continue
        path = outdir / f"{p.name}.mps"
        path.write_text(write_mps(p))
        written.append(path)
        index += 1
    return written


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).parent
    paths = build_corpus(target)
    print(f"wrote {len(paths)} instances to {target}")
