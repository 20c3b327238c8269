"""Command-line interface.

Every subcommand prints a JSON report (sorted keys) on stdout and writes it
to ``--out`` when given.  Failures print ``{"error": {...}}`` on stderr and
exit with the status attached to the error class.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import CoefficientSet, mass_matrix
from .derham import build_complex, dump_operators
from .eigsolve import (
    GAP_TOL,
    ZERO_TOL,
    EigenPair,
    dual_eigenvector,
    laplace_spectrum,
    maxwell_spectrum,
    vector_laplacian_spectrum,
)
from .errors import ConfigError, DerhamShapeError, MultiplicityError, VerificationFailure
from .hodge import cohomology_dim, helmholtz_decompose
from .mesh import BoundaryPartition, generate_cube_mesh, plane_selector, read_mesh_file, save_mesh, tag_boundary
from .shapederiv import HADAMARD, PROBLEMS, fd_check, hellmann_feynman_value, spectral_discrepancy
from .transform import VertexField, make_map, transform_coefficients

COMMANDS = ("mesh-gen", "spectrum", "shape-grad", "fd-check", "equivalence-check", "helmholtz", "verify")


@dataclass
class RunConfig:
    command: str
    gen_cube: int | None = None
    mesh: str | None = None
    gamma_t: str | None = None
    coeffs: str = "identity"
    problem: str = "laplace"
    count: int = 6
    eigen_index: int = 0
    method: str = "dense"
    rho: float = 1.0
    psi: str = "dilate"
    t: list = field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])
    zero_tol: float = ZERO_TOL
    gap_tol: float = GAP_TOL
    residual_tol: float = 1e-8
    seed: int = 0
    out: str | None = None
    csv: str | None = None
    dump_ops: str | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}")
        if (self.gen_cube is None) == (self.mesh is None):
            raise ConfigError("mesh: give exactly one of gen_cube and mesh")
        if self.gen_cube is not None and not (isinstance(self.gen_cube, int) and self.gen_cube >= 1):
            raise ConfigError(f"gen_cube: must be a positive integer, got {self.gen_cube!r}")
        for name in ("zero_tol", "gap_tol", "residual_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name}: must be positive, got {v!r}")
        if not (isinstance(self.rho, (int, float)) and self.rho > 0):
            raise ConfigError(f"rho: must be positive, got {self.rho!r}")
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: must be one of {', '.join(PROBLEMS)}, got {self.problem!r}")
        if not isinstance(self.t, list) or not self.t or any(not (isinstance(v, (int, float)) and v > 0) for v in self.t):
            raise ConfigError(f"t: values must be strictly positive, got {self.t!r}")
        if not isinstance(self.count, int) or self.count < 1:
            raise ConfigError(f"count: must be at least 1, got {self.count!r}")
        if not isinstance(self.eigen_index, int) or self.eigen_index < 0:
            raise ConfigError(f"eigen_index: must be non-negative, got {self.eigen_index!r}")
        if self.method not in ("dense", "shift-invert"):
            raise ConfigError(f"method: must be dense or shift-invert, got {self.method!r}")


# -- parsing -----------------------------------------------------------------

def _t_list(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad t list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="derham-shape",
                                     description="Whitney-form de Rham eigenproblems and shape derivatives.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--gen-cube", type=int, metavar="N", help="generate the Kuhn-split unit cube with N cells per side")
        src.add_argument("--mesh", help="mesh JSON file")
        p.add_argument("--config", help="JSON file whose keys mirror the flags; flags win")
        p.add_argument("--gamma-t", help="all | none | planes such as x0,z1; default all, or the tags stored in --mesh")
        p.add_argument("--coeffs", help="identity | random[:SEED] | coefficient JSON file")
        p.add_argument("--problem", choices=PROBLEMS)
        p.add_argument("--count", type=int)
        p.add_argument("--eigen-index", type=int)
        p.add_argument("--method", choices=("dense", "shift-invert"))
        p.add_argument("--rho", type=float)
        p.add_argument("--psi", help="dilate | translate | shear | stretch | random[:SEED] | vertex-field JSON")
        p.add_argument("--t", type=_t_list, help="comma-separated step sizes")
        p.add_argument("--zero-tol", type=float)
        p.add_argument("--gap-tol", type=float)
        p.add_argument("--residual-tol", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--csv", help="write the fd table here (fd-check)")
        p.add_argument("--dump-ops", help="write the incidence matrices as triplets (mesh-gen)")
    return parser


def config_from_args(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        known = {f.name for f in fields(RunConfig)} - {"command"}
        for key, val in data.items():
            k = key.replace("-", "_")
            if k not in known:
                raise ConfigError(f"{key}: unknown config field")
            values[k] = val
        if isinstance(values.get("t"), str):
            values["t"] = _t_list(values["t"])
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.gen_cube is not None:
        values.pop("mesh", None)
    if args.mesh is not None:
        values.pop("gen_cube", None)
    try:
        cfg = RunConfig(command=args.command, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


# -- setup helpers --------------------------------------------------------------

def _partition(mesh, spec: str):
    spec = spec.strip()
    if spec == "all":
        return tag_boundary(mesh, True)
    if spec == "none":
        return tag_boundary(mesh, False)
    sels = []
    for tok in spec.split(","):
        tok = tok.strip()
        if len(tok) < 2 or tok[0] not in "xyz":
            raise ConfigError(f"gamma_t: cannot parse {tok!r}; use all, none or planes like x0,z1")
        try:
            value = float(tok[1:])
        except ValueError as exc:
            raise ConfigError(f"gamma_t: cannot parse {tok!r}") from exc
        sels.append(plane_selector("xyz".index(tok[0]), value))
    return tag_boundary(mesh, lambda c: any(s(c) for s in sels))


def load_setup(cfg: RunConfig):
    if cfg.mesh is not None:
        mesh, part = read_mesh_file(cfg.mesh)
        if cfg.gamma_t is not None:
            part = _partition(mesh, cfg.gamma_t)
    else:
        mesh = generate_cube_mesh(cfg.gen_cube)
        part = _partition(mesh, cfg.gamma_t or "all")
    return mesh, part


def load_coeffs(spec: str, n_tets: int) -> CoefficientSet:
    if spec == "identity":
        return CoefficientSet.identity(n_tets)
    if spec.startswith("random"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 0
        return CoefficientSet.random(n_tets, np.random.default_rng(seed))
    try:
        data = json.loads(Path(spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"coeffs: cannot read {spec}: {exc}") from exc
    return CoefficientSet.from_json(data, n_tets)


def load_psi(spec: str, mesh) -> VertexField:
    presets = {
        "dilate": VertexField.dilation,
        "translate": VertexField.translation,
        "shear": VertexField.shear,
        "stretch": VertexField.stretch,
    }
    if spec in presets:
        return presets[spec](mesh)
    if spec.startswith("random"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 0
        return VertexField.random_smooth(mesh, seed, 0.3)
    try:
        data = json.loads(Path(spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"psi: cannot read {spec}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("psi: file must hold an object with a 'psi' array")
    return VertexField.from_json(mesh, data)


def _mesh_info(mesh, part) -> dict:
    return {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "faces": mesh.n_faces,
        "tets": mesh.n_tets,
        "boundary_faces": int(len(mesh.boundary_faces)),
        "gamma_t_faces": int(len(part.gamma_t)),
    }


# -- commands --------------------------------------------------------------------

def cmd_mesh_gen(cfg, mesh, part, coeffs):
    cx = build_complex(mesh, part)
    if cfg.out:
        save_mesh(mesh, cfg.out, part)
    if cfg.dump_ops:
        Path(cfg.dump_ops).write_text(dump_operators(cx))
    info = _mesh_info(mesh, part)
    info["euler_characteristic"] = mesh.n_vertices - mesh.n_edges + mesh.n_faces - mesh.n_tets
    info["volume"] = float(mesh.volumes.sum())
    return {"mesh": info}, False


def _spectrum(cfg, cx, coeffs):
    if cfg.problem == "laplace":
        return laplace_spectrum(cx, coeffs, "primal", cfg.zero_tol, cfg.gap_tol, cfg.method, cfg.count)
    if cfg.problem == "laplace-dual":
        return laplace_spectrum(cx, coeffs, "dual", cfg.zero_tol, cfg.gap_tol, cfg.method, cfg.count)
    if cfg.problem == "maxwell":
        return maxwell_spectrum(cx, coeffs, cfg.zero_tol, cfg.gap_tol)
    return vector_laplacian_spectrum(cx, coeffs, cfg.rho, cfg.zero_tol, cfg.gap_tol)


def cmd_spectrum(cfg, mesh, part, coeffs):
    cx = build_complex(mesh, part)
    res = _spectrum(cfg, cx, coeffs)
    report = res.report(cfg.problem, cfg.count)
    report["values_over_pi2"] = [v / np.pi**2 for v in report["values"]]
    report["residual_ok"] = bool(res.residual_max <= cfg.residual_tol)
    if cfg.method == "shift-invert" and cfg.problem.startswith("laplace"):
        # only the requested window was computed; the kernel count is not known
        report["kernel_dim"] = None
    return {"mesh": _mesh_info(mesh, part), "spectrum": report}, not report["residual_ok"]


def cmd_shape_grad(cfg, mesh, part, coeffs):
    cx = build_complex(mesh, part)
    psi = load_psi(cfg.psi, mesh)
    problem, scale, branch = cfg.problem, 1.0, None
    if problem == "vector-laplacian":
        merged = vector_laplacian_spectrum(cx, coeffs, cfg.rho, cfg.zero_tol, cfg.gap_tol)
        merged.pair(cfg.eigen_index)  # range check
        branch = merged.branches[cfg.eigen_index]
        if branch not in ("laplace", "maxwell"):
            raise MultiplicityError(f"value {merged.values[cfg.eigen_index]!r} is shared by both branches")
        problem = branch
        scale = cfg.rho if branch == "laplace" else 1.0
    if problem == "maxwell":
        res = maxwell_spectrum(cx, coeffs, cfg.zero_tol, cfg.gap_tol)
    else:
        res = laplace_spectrum(cx, coeffs, "primal", cfg.zero_tol, cfg.gap_tol)
    if branch is not None:
        target = merged.values[cfg.eigen_index] / scale
        index = int(np.argmin(np.abs(res.values - target)))
    else:
        index = cfg.eigen_index
    pair = res.pair(index)
    if problem == "laplace-dual":
        if pair.multiplicity == 1:
            pair = EigenPair(pair.value, dual_eigenvector(cx, coeffs, 0, pair, cfg.zero_tol), 1, 1)
        else:
            pair = EigenPair(pair.value, pair.vector, pair.multiplicity, 1)
    rep = HADAMARD[problem](cx, coeffs, pair, psi)
    hf = hellmann_feynman_value(problem, cx, coeffs, pair, psi)
    out = rep.to_json()
    for key in ("lam", "dlambda", "stiffness_term", "mass_term"):
        out[key] *= scale
    out["problem"] = cfg.problem
    out["eigen_index"] = cfg.eigen_index
    out["branch"] = branch
    out["dlambda_over_lambda"] = rep.dlambda / rep.lam
    out["hellmann_feynman_deviation"] = abs(hf - rep.dlambda) * scale
    return {"mesh": _mesh_info(mesh, part), "shape_derivative": out}, False


def cmd_fd_check(cfg, mesh, part, coeffs):
    cx = build_complex(mesh, part)
    psi = load_psi(cfg.psi, mesh)
    rep = fd_check(cfg.problem, cx, coeffs, psi, cfg.t, cfg.eigen_index, rho=cfg.rho,
                   zero_tol=cfg.zero_tol, gap_tol=cfg.gap_tol)
    if cfg.csv:
        Path(cfg.csv).write_text(rep.csv())
    return {"mesh": _mesh_info(mesh, part), "fd_check": rep.to_json()}, False


def equivalence_report(mesh, part, coeffs, psi, t, zero_tol=ZERO_TOL, gap_tol=GAP_TOL, count=10) -> dict:
    phi = make_map(mesh, psi, t)
    cx = build_complex(mesh, part)
    deformed = phi.deformed
    cx_def = build_complex(deformed, BoundaryPartition(deformed, part.gamma_t))
    tc = transform_coefficients(coeffs, phi)
    out = {"t": t}
    for name, solve in (("laplace", lambda c, k: laplace_spectrum(c, k, "primal", zero_tol, gap_tol)),
                        ("maxwell", lambda c, k: maxwell_spectrum(c, k, zero_tol, gap_tol))):
        a, b = solve(cx_def, coeffs), solve(cx, tc)
        out[f"{name}_spectrum_rel_dev"] = spectral_discrepancy(a, b, count)
    for q, w_def, w_ref in ((0, coeffs.nu, tc.nu), (1, coeffs.eps, tc.eps),
                           (2, coeffs.mu_inv, tc.mu_inv), (3, 1.0 / coeffs.kappa, 1.0 / tc.kappa)):
        A = mass_matrix(deformed, q, w_def)
        B = mass_matrix(mesh, q, w_ref)
        scale = abs(A).max()
        out[f"mass{q}_rel_dev"] = float(abs(A - B).max() / scale) if scale else 0.0
    return out


def cmd_equivalence(cfg, mesh, part, coeffs):
    psi = load_psi(cfg.psi, mesh)
    rows = [equivalence_report(mesh, part, coeffs, psi, t, cfg.zero_tol, cfg.gap_tol) for t in cfg.t]
    spec_dev = max(max(r["laplace_spectrum_rel_dev"], r["maxwell_spectrum_rel_dev"]) for r in rows)
    mass_dev = max(r[f"mass{q}_rel_dev"] for r in rows for q in range(4))
    ok = spec_dev <= 1e-10 and mass_dev <= 1e-12
    return {"mesh": _mesh_info(mesh, part),
            "equivalence": {"rows": rows, "spectrum_max": spec_dev, "mass_max": mass_dev, "pass": ok}}, not ok


def helmholtz_report(mesh, part, coeffs, seed=0) -> dict:
    cx = build_complex(mesh, part)
    x = np.random.default_rng(seed).standard_normal(len(cx.free(1)))
    split = helmholtz_decompose(cx, coeffs, x)
    norms = split.norms
    pyth = abs(norms["x"] ** 2 - norms["grad"] ** 2 - norms["harm"] ** 2 - norms["curl"] ** 2) / norms["x"] ** 2
    return {
        "norms": norms,
        "orthogonality": split.orthogonality(),
        "pythagoras_rel": pyth,
        "cohomology_dim": cohomology_dim(cx, coeffs),
        "free_vertices": int(len(cx.free(0))),
        "maxwell_kernel_dim": int(maxwell_spectrum(cx, coeffs).kernel_dim),
    }


def cmd_helmholtz(cfg, mesh, part, coeffs):
    rep = helmholtz_report(mesh, part, coeffs, cfg.seed)
    ok = rep["orthogonality"] <= 1e-10 and rep["pythagoras_rel"] <= 1e-9
    rep["pass"] = ok
    return {"mesh": _mesh_info(mesh, part), "helmholtz": rep}, not ok


def run_verify(mesh, part, coeffs, seed=0) -> list:
    """Batch of invariant checks; each entry is (name, value, tolerance, passed)."""
    checks = []

    def add(name, value, tol):
        checks.append({"check": name, "value": float(value), "tol": tol, "pass": bool(value <= tol)})

    cx = build_complex(mesh, part)
    add("complex.curl_grad", abs(cx.C @ cx.G).max() if cx.C.nnz else 0, 0)
    add("complex.div_curl", abs(cx.D @ cx.C).max() if cx.D.nnz else 0, 0)
    psi_r = VertexField.random_smooth(mesh, seed, 0.3)
    eq = equivalence_report(mesh, part, coeffs, psi_r, 0.1)
    add("equivalence.spectrum", max(eq["laplace_spectrum_rel_dev"], eq["maxwell_spectrum_rel_dev"]), 1e-10)
    add("equivalence.mass", max(eq[f"mass{q}_rel_dev"] for q in range(4)), 1e-12)
    hz = helmholtz_report(mesh, part, coeffs, seed)
    add("hodge.orthogonality", hz["orthogonality"], 1e-10)
    add("hodge.pythagoras", hz["pythagoras_rel"], 1e-9)
    add("hodge.kernel_dim", abs(hz["maxwell_kernel_dim"] - hz["free_vertices"] - hz["cohomology_dim"]), 0)
    lap = laplace_spectrum(cx, coeffs)
    mx = maxwell_spectrum(cx, coeffs)
    pairs = {}
    if len(lap.values) and lap.multiplicities[0] == 1:
        pairs["laplace"] = lap.pair(0)
        pairs["laplace-dual"] = EigenPair(lap.values[0], dual_eigenvector(cx, coeffs, 0, lap.pair(0)), 1, 1)
    simple = [i for i, d in enumerate(mx.multiplicities) if d == 1]
    if simple:
        pairs["maxwell"] = mx.pair(simple[0])
    identity = np.allclose(coeffs.eps, np.eye(3)) and np.allclose(coeffs.mu, np.eye(3)) \
        and np.allclose(coeffs.nu, 1.0)
    dil, tr = VertexField.dilation(mesh), VertexField.translation(mesh)
    for name, pair in pairs.items():
        if identity:
            r = HADAMARD[name](cx, coeffs, pair, dil)
            add(f"dilation.{name}", abs(r.dlambda / r.lam + 2.0), 1e-10)
        add(f"translation.{name}", abs(HADAMARD[name](cx, coeffs, pair, tr).dlambda), 0)
        had = HADAMARD[name](cx, coeffs, pair, psi_r).dlambda
        add(f"hellmann_feynman.{name}",
            abs(had - hellmann_feynman_value(name, cx, coeffs, pair, psi_r)) / pair.value, 1e-12)
    if "laplace" in pairs:
        a = HADAMARD["laplace"](cx, coeffs, pairs["laplace"], psi_r).dlambda
        b = HADAMARD["laplace-dual"](cx, coeffs, pairs["laplace-dual"], psi_r).dlambda
        add("primal_dual.laplace", abs(a - b) / max(abs(a), 1e-300), 1e-9)
    return checks


def cmd_verify(cfg, mesh, part, coeffs):
    checks = run_verify(mesh, part, coeffs, cfg.seed)
    ok = all(c["pass"] for c in checks)
    return {"mesh": _mesh_info(mesh, part), "verify": {"checks": checks, "pass": ok}}, not ok


HANDLERS = {
    "mesh-gen": cmd_mesh_gen,
    "spectrum": cmd_spectrum,
    "shape-grad": cmd_shape_grad,
    "fd-check": cmd_fd_check,
    "equivalence-check": cmd_equivalence,
    "helmholtz": cmd_helmholtz,
    "verify": cmd_verify,
}


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)


def run(cfg: RunConfig) -> tuple[int, dict]:
    mesh, part = load_setup(cfg)
    coeffs = load_coeffs(cfg.coeffs, mesh.n_tets)
    payload, failed = HANDLERS[cfg.command](cfg, mesh, part, coeffs)
    payload["command"] = cfg.command
    if cfg.out and cfg.command != "mesh-gen":
        Path(cfg.out).write_text(dumps(payload) + "\n")
    if failed:
        return VerificationFailure.exit_status, payload
    return 0, payload


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        status, payload = run(cfg)
    except DerhamShapeError as exc:
        err = {"error": {"code": exc.code, "module": exc.module, "message": str(exc)}}
        print(dumps(err), file=sys.stderr)
        return exc.exit_status
    print(dumps(payload))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
