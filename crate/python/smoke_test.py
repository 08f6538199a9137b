"""Smoke test for the kacanov_py extension.

Build first:
    cargo build --release -p kacanov-py --features extension-module
then run `python3 python/smoke_test.py`. An installed `kacanov_py` takes
precedence over the build tree.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        import kacanov_py

        return kacanov_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        for name in ("libkacanov_py.so", "libkacanov_py.dylib", "kacanov_py.dll"):
            path = ROOT / "target" / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("kacanov_py", str(path))
                spec = importlib.util.spec_from_file_location("kacanov_py", path, loader=loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                sys.modules["kacanov_py"] = module
                return module
    sys.exit("kacanov_py not found; build it with --features extension-module")


def main():
    k = load()

    mu1 = k.DiffusionModel("mu1")
    assert mu1.m_mu == 0.375 and mu1.M_mu == 1.5
    assert abs(mu1.mu(0.0) - 1.5) < 1e-15
    nu, lip, alpha, beta, delta_min = mu1.constants()
    assert abs(delta_min - alpha / (4 * lip)) < 1e-15

    try:
        k.DiffusionModel("mu9")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown model accepted")

    mesh = k.Mesh(2)
    assert mesh.n_triangles == 96 and len(mesh.triangles()) == 96

    p = k.Problem(mu1, 3)
    ref, steps, dual = p.reference()
    print(f"reference: {steps} Zarantonello steps, dual residual {dual:.2e}")
    u_star = p.exact_interpolant()
    print(f"|u_h - I u*|_1 = {p.h1_distance(ref, u_star):.3e}")

    traces = {s: p.run(s, ref, max_iters=30) for s in ("undamped", "taylor", "prediction_correction")}
    for name, t in traces.items():
        print(f"{name:>22}: {t.steps:2d} steps, final error {t.final_error:.2e}")
        assert t.final_error < 1e-8, name
        if name != "undamped":
            assert t.reached_tolerance and all(r.decay_ok for r in t.records()[1:]), name
    assert abs(traces["taylor"].deltas()[1] - 1.0) < 1e-12

    # energy is minimised at the reference
    e0 = p.energy(ref)
    bumped = [v + 1e-3 for v in ref]
    assert p.energy(bumped) > e0
    assert max(abs(x) for x in p.residual(ref)) < 1e-9

    with tempfile.TemporaryDirectory() as out:
        runs, files = k.run_experiment("mu2", level=2, max_iters=10, output_dir=out, cache=False)
        assert [name for name, _ in runs] == ["undamped", "taylor", "prediction_correction"]
        assert all(pathlib.Path(f).exists() for f in files)
        ratio = runs[1][1].trailing_ratio()
        assert ratio is not None and math.isfinite(ratio)
    print("smoke test passed")


if __name__ == "__main__":
    main()
