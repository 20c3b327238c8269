"""Time the compiled and numpy element kernels on cube meshes.

    python3 benchmarks/bench_kernels.py --sizes 4 8 12 --repeat 5
"""

import argparse
import timeit

import numpy as np

from derham_shape._kernels import fallback, get_backend
from derham_shape.mesh import generate_cube_mesh


def kernel_calls(mesh, impl):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((mesh.n_tets, 3, 3))
    W = np.ascontiguousarray(a @ np.swapaxes(a, 1, 2) + np.eye(3))
    w = rng.uniform(0.5, 2.0, mesh.n_tets)
    vol = np.ascontiguousarray(mesh.volumes)
    grads = np.ascontiguousarray(mesh.barycentric_gradients)
    el = np.ascontiguousarray(mesh.tet_edge_local)
    fl = np.ascontiguousarray(mesh.tet_face_local)
    return {
        "mass0": lambda: impl.local_mass_0(vol, w),
        "mass1": lambda: impl.local_mass_1(grads, vol, W, el),
        "mass2": lambda: impl.local_mass_2(grads, vol, W, fl),
        "mass3": lambda: impl.local_mass_3(vol, w),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 12])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        ext = get_backend("cython")
    except ImportError:
        ext = None
        print("compiled kernels not built; timing numpy only")
    print(f"{'n':>3} {'tets':>7} {'kernel':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for n in args.sizes:
        mesh = generate_cube_mesh(n)
        py = kernel_calls(mesh, fallback)
        cy = kernel_calls(mesh, ext) if ext else {}
        for name, fn in py.items():
            t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
            if ext:
                t_cy = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) * 1e3
                print(f"{n:>3} {mesh.n_tets:>7} {name:>6} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy:>7.1f}x")
            else:
                print(f"{n:>3} {mesh.n_tets:>7} {name:>6} {t_py:>10.3f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
