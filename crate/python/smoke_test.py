"""Smoke test for the cs_lab extension.

Uses an installed cs_lab if there is one, otherwise the library left by
`cargo build -p cs-lab-py --release`.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys


def load():
    try:
        import cs_lab

        return cs_lab
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        lib = root / "target" / profile / "libcs_lab.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("cs_lab", str(lib))
            spec = importlib.util.spec_from_file_location("cs_lab", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["cs_lab"] = module
            return module
    sys.exit("cs_lab not found: build it with `cargo build -p cs-lab-py --release`")


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}".rstrip())
    return ok


def main():
    cs = load()
    results = []

    c = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0, 2.0]
    back = cs.fwht(cs.fwht(c, "analysis"), "synthesis")
    results.append(check("fwht round trip", max(abs(a - b) for a, b in zip(c, back)) < 1e-14))

    haar = cs.WaveletSystem(1, 2)
    sec = haar.section(16, 16)
    u = sec.entries()
    gram_dev = max(
        abs(sum(u[i][a] * u[i][b] for i in range(16)) - (a == b))
        for a in range(16)
        for b in range(16)
    )
    results.append(check("haar section is orthogonal", gram_dev < 1e-12, f"{gram_dev:.1e}"))

    mu = sec.coherence([8, 16], [8, 16])
    results.append(check("haar coherence is block diagonal", abs(mu[0][1]) < 1e-15 and abs(mu[1][0]) < 1e-15))

    db4 = cs.WaveletSystem(4, 4)
    results.append(check("db4 filter", abs(sum(db4.lowpass) - math.sqrt(2)) < 1e-14, repr(db4)))
    theta = db4.section(64, 32).balancing(64, 32)["theta"]
    results.append(check("db4 balancing", 0.0 < theta <= 1.0, f"theta={theta:.4f}"))
    q, trace = db4.balancing_scan(5, 0.5)
    results.append(check("db4 scan", q is not None and trace[-1][1] >= 0.5, f"q={q}"))

    a = [[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]
    rep = cs.solve(a, [1.0, 1.0], 0.0)
    results.append(check("solve", rep["status"] == "converged" and abs(rep["objective"] - 1.0) < 1e-6, str(rep["x"])))

    alloc = cs.allocate([16, 32, 64], [2, 2, 1], 0.8, r0=1)
    results.append(check("allocate", alloc["m"][0] == 16 and len(alloc["m"]) == 3, str(alloc["m"])))

    rec = cs.reconstruct(db4, [("scaling", 4, 4, 1.0)], list(range(16)))
    results.append(check("reconstruct", rec["grid_error"] < 1e-3, f"err={rec['grid_error']:.2e}"))

    try:
        cs.WaveletSystem(4, 1)
        results.append(check("invalid system rejected", False))
    except ValueError:
        results.append(check("invalid system rejected", True))

    if not all(results):
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
