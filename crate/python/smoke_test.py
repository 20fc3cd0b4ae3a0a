"""Smoke test for the pinchlab_py extension module.

Build first with `cargo build --release -p pinchlab-python`, then run
`python3 python/smoke_test.py`. The script copies the built shared library
to a temporary directory under the importable name `pinchlab_py.so`.
"""

import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpinchlab_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libpinchlab_py.so not found; run `cargo build --release -p pinchlab-python`")
    tmp = tempfile.mkdtemp()
    shutil.copy(lib, pathlib.Path(tmp) / "pinchlab_py.so")
    sys.path.insert(0, tmp)
    import pinchlab_py

    return pinchlab_py


def main():
    pl = load_module()
    p0 = pl.FlowParams(0.0)
    assert pl.rhs((1.0, 1.0, 1.0), p0) == (4.0, 4.0, 4.0)
    assert abs(pl.isotropic_solution(1.0, p0, 0.2) - 5.0) < 1e-12

    traj = pl.integrate((1.0, 1.0, 1.0), p0, 0.2)
    assert traj.terminal["kind"] == "reached_end"
    lam, _, _ = traj.eval_at(0.1)
    assert abs(lam - 1.0 / (1.0 - 0.4)) < 1e-8

    pm = pl.FlowParams(-1.0)
    x = pl.f_inverse(3.0, pm)
    assert abs(pl.f_pinch(x, pm) - 3.0) < 1e-10
    assert abs(pl.lambda_pinch((2.0, -1.0, -1.0), pm) - (1.0 - math.log(2.0) / 6.0)) < 1e-12

    m = pl.membership("K", (-1.0, -1.0, -1.0), p0, 0.0)
    assert m["member"] and m["margin"] == 0.0

    r = pl.scan("j-nonneg-trace", pm, resolution=60)
    assert r["violations"] == 0

    inv = pl.verify_set("W", pm, samples=64, horizon=0.05, seed=42)
    assert inv["passed"], inv["worst_drift"]

    est = pl.verify_estimate("nonneg-rho", p0, count=10)
    assert est["passed"]

    try:
        pl.f_pinch(0.0, pm)
    except ValueError:
        pass
    else:
        raise AssertionError("domain error not raised")

    print("pinchlab_py", pl.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
