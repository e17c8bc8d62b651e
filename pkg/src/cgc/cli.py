"""Command-line front end.

Subcommands: mesh, basis, solve, end, volumes, verify, pairing.  Exit codes:
0 all selected checks pass, 1 a check failed its tolerance, 2 usage or
configuration error, 3 solver failure.  Reports are JSON with every float
printed to 17 significant digits; tables are CSV.  Configuration can come
from a key=value text file (--config) with command-line flags winning.
Set CGC_THREADS to parallelize independent reconstructions (0 = serial,
the default, which is bitwise deterministic).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import mesh as mesh_mod
from . import hodge, wolf, hyper3d, symplectic
from . import tensor as tz

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


class ConfigError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _json(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        items = [f'{pad}  "{k}": {_json(v, indent + 1).lstrip()}'
                 for k, v in obj.items()]
        return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        items = [_json(v, indent + 1) for v in obj]
        return pad + "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return pad + ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return pad + str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return pad + _fmt(obj)
    return pad + '"' + str(obj) + '"'


def _write_json(path, obj):
    Path(path).write_text(_json(obj) + "\n")


def _load_config(path):
    cfg = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("CONFIG_PARSE", f"bad config line: {line!r}")
        k, v = line.split("=", 1)
        cfg[k.strip()] = v.strip()
    return cfg


def _resolve(args, key, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    if getattr(args, "config", None):
        cfg = _load_config(args.config)
        if key in cfg:
            return cfg[key]
    return default


def _get_mesh(args) -> mesh_mod.SurfaceMesh:
    mesh_path = _resolve(args, "mesh")
    if mesh_path:
        return mesh_mod.SurfaceMesh.load(mesh_path)
    refine = int(_resolve(args, "refine", 3))
    if refine < 0 or refine > mesh_mod.REFINEMENT_CAP:
        raise ConfigError("REFINE_OUT_OF_RANGE",
                          f"refinement must be in [0, {mesh_mod.REFINEMENT_CAP}]")
    return mesh_mod.build_bolza(refine)


def _parse_k(text) -> float:
    k = float(text)
    if not (-1.0 < k < 0.0):
        raise ConfigError("K_OUT_OF_RANGE", f"k = {k} outside (-1, 0)")
    return k


def _parse_q(text, basis):
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 6:
        raise ConfigError("Q_COEFFS_LENGTH", "expected 6 q coefficients")
    coeffs = [parts[2 * i] + 1j * parts[2 * i + 1] for i in range(3)]
    return hodge.combine_basis(coeffs, basis)


def _threads() -> int:
    try:
        return max(0, int(os.environ.get("CGC_THREADS", "0")))
    except ValueError:
        return 0


def _pmap(fn, items):
    n = _threads()
    if n > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_mesh(args):
    refine = int(_resolve(args, "refine", 0))
    if refine < 0 or refine > mesh_mod.REFINEMENT_CAP:
        raise ConfigError("REFINE_OUT_OF_RANGE",
                          f"refinement must be in [0, {mesh_mod.REFINEMENT_CAP}]")
    m = mesh_mod.build_bolza(refine)
    m.save(args.out)
    print(f"wrote {args.out}: {m.face_count} faces, chi = "
          f"{m.n_qverts - m.n_edges + m.face_count}")
    return EXIT_OK


def cmd_basis(args):
    m = _get_mesh(args)
    basis, info = hodge.holomorphic_qd_basis(m)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, q in enumerate(basis):
        lines = ["face,RePhi,ImPhi"]
        for f in range(m.face_count):
            lines.append(f"{f},{_fmt(q.phi[f].real)},{_fmt(q.phi[f].imag)}")
        (outdir / f"basis_{i}.csv").write_text("\n".join(lines) + "\n")
    _write_json(outdir / "basis_info.json", {
        "gramCondition": info["gram_condition"],
        "holomorphyResiduals": [float(r) for r in info["holomorphy"]],
    })
    print(f"wrote 3 basis elements to {outdir}")
    return EXIT_OK


def _end_report(args):
    m = _get_mesh(args)
    basis, _ = hodge.holomorphic_qd_basis(m)
    k = _parse_k(_resolve(args, "k", "-0.5"))
    q = _parse_q(_resolve(args, "q", "0,0,0,0,0,0"), basis)
    point = wolf.ConfCotangentPoint(m, q, k)
    return m, wolf.end_report(point)


def cmd_solve(args):
    m, rep = _end_report(args)
    surf = rep.pop("surface")
    _write_json(args.out, rep)
    print(f"k={rep['k']}: newtonIters={rep['newtonIters']} "
          f"curvatureResidual={rep['curvatureResidual']:.3e}")
    return EXIT_OK


def _write_tensor_csv(path, values):
    lines = ["face,a11,a12,a22"]
    for f, v in enumerate(values):
        lines.append(f"{f},{_fmt(v[0, 0])},{_fmt(v[0, 1])},{_fmt(v[1, 1])}")
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_end(args):
    m, rep = _end_report(args)
    surf = rep.pop("surface")
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "report.json", rep)
    _write_tensor_csv(outdir / "I.csv", surf.I.values)
    _write_tensor_csv(outdir / "II.csv", surf.II.values)
    _write_tensor_csv(outdir / "III.csv", surf.III.values)
    _write_tensor_csv(outdir / "B.csv", surf.B.values)
    print(f"wrote end reconstruction to {outdir}")
    return EXIT_OK


def cmd_volumes(args):
    grid = [_parse_k(x) for x in str(_resolve(args, "k_grid", "-0.5")).split(",")]
    chi = int(_resolve(args, "chi", 4))
    m = _get_mesh(args)
    lines = ["k,epsilon,V,meanH,W,Vstar,Wtilde"]
    rows = _pmap(lambda k: hyper3d.volume_report(k, chi, m), grid)
    for rep in rows:
        cc = rep.cross_check
        lines.append(",".join(_fmt(x) for x in
                              [rep.k, rep.epsilon, cc["V"], cc["meanH"],
                               cc["W"], cc["Vstar"], cc["Wtilde"]]))
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out} ({len(grid)} rows)")
    return EXIT_OK


def cmd_pairing(args):
    m = _get_mesh(args)
    basis, info = hodge.holomorphic_qd_basis(m)
    sig = tz.TensorField(m.sigma)
    gram = [[symplectic.pairing_tensor(qi, tz.TensorField(2 * tz.real_part_tensor(qj.phi)), sig, m)
             for qj in basis] for qi in basis]
    worst = 0.0
    for qi in basis:
        for qj in basis:
            dg = tz.TensorField(2 * tz.real_part_tensor(qj.phi))
            a = symplectic.pairing_tensor(qi, dg, sig, m)
            b = symplectic.pairing_beltrami(
                qi, symplectic.beltrami_from_variation(sig, dg)).real
            worst = max(worst, abs(a - b))
    _write_json(args.out, {"gram": gram, "lemmaA1MaxMismatch": worst})
    print(f"wrote {args.out}; Lemma A.1 max mismatch {worst:.3e}")
    return EXIT_OK


# ----------------------------------------------------------------------
# verify suites
# ----------------------------------------------------------------------

def _suite_pairings(m, tol):
    basis, _ = hodge.holomorphic_qd_basis(m)
    sig = tz.TensorField(m.sigma)
    checks = []
    worst = 0.0
    for i, qi in enumerate(basis):
        for j, qj in enumerate(basis):
            dg = tz.TensorField(2 * tz.real_part_tensor(qj.phi))
            a = symplectic.pairing_tensor(qi, dg, sig, m)
            b = symplectic.pairing_beltrami(
                qi, symplectic.beltrami_from_variation(sig, dg)).real
            worst = max(worst, abs(a - b))
    checks.append(("lemmaA1_basis_pairs", worst, tol.get("pairings", 1e-8)))
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for _ in range(20):
        A = rng.normal(size=(m.face_count, 2, 2))
        dg = tz.TensorField(0.5 * (A + np.swapaxes(A, 1, 2)))
        qi = basis[int(rng.integers(0, 3))]
        a = symplectic.pairing_tensor(qi, dg, sig, m)
        b = symplectic.pairing_beltrami(
            qi, symplectic.beltrami_from_variation(sig, dg)).real
        worst = max(worst, abs(a - b))
    checks.append(("lemmaA1_random_variations", worst, tol.get("pairings", 1e-8)))
    G = np.array([[symplectic.pairing_tensor(
        qi, tz.TensorField(2 * tz.real_part_tensor(qj.phi)), sig, m)
        for qj in basis] for qi in basis])
    sym = float(np.max(np.abs(G - G.T)))
    mineig = float(np.linalg.eigvalsh(0.5 * (G + G.T)).min())
    checks.append(("pairing_gram_symmetric", sym, 1e-10))
    checks.append(("pairing_gram_positive", -min(mineig, 0.0), 0.0))
    return checks


def _suite_exactness(m, tol):
    basis, _ = hodge.holomorphic_qd_basis(m)
    q0 = hodge.QuadraticDifferential(np.zeros(m.face_count, complex), m)
    t = tol.get("exactness", 5e-3)
    combos = [
        (q0, basis[0], -0.5),
        (0.1 * basis[0], basis[1], -0.5),
        (0.1 * basis[0], basis[0], -0.5),
    ]
    def run(c):
        q, d, k = c
        pt = wolf.ConfCotangentPoint(m, q, k)
        return symplectic.exactness_check(pt, d, 1e-3)
    results = _pmap(run, combos)
    return [(f"exactness_{i}", r.residual, t) for i, r in enumerate(results)]


def _suite_hamiltonian(m, tol):
    rows = symplectic.hamiltonian_check_fuchsian(
        [-0.75, -0.5, -0.25], 4, step=1e-5)
    t = tol.get("hamiltonian", 1e-4)
    out = []
    for r in rows:
        out.append((f"eq61_k={r['k']}", r["eq61_relerr"], t))
        out.append((f"eq62_k={r['k']}", r["eq62_relerr"], t))
    return out


def cmd_verify(args):
    m = _get_mesh(args)
    tol = {}
    if args.tol is not None:
        tol = {"pairings": args.tol, "exactness": args.tol, "hamiltonian": args.tol}
    suites = {"pairings": _suite_pairings, "exactness": _suite_exactness,
              "hamiltonian": _suite_hamiltonian}
    names = list(suites) if args.suite == "all" else [args.suite]
    checks = []
    for name in names:
        checks.extend(suites[name](m, tol))
    report = [{"check": c, "residual": r, "tolerance": t, "pass": bool(r <= t)}
              for c, r, t in checks]
    if args.out:
        _write_json(args.out, report)
    ok = True
    for row in report:
        status = "PASS" if row["pass"] else "FAIL"
        print(f"{status} {row['check']}: residual={row['residual']:.3e} "
              f"tol={row['tolerance']:.1e}")
        ok = ok and row["pass"]
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="cgc",
                                description="constant-curvature foliation laboratory")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--mesh", help="CGC-MESH v1 file")
        sp.add_argument("--refine", type=int, help="build Bolza mesh at this level")

    sp = sub.add_parser("mesh", help="build and save a Bolza mesh")
    sp.add_argument("--config")
    sp.add_argument("--refine", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_mesh)

    sp = sub.add_parser("basis", help="holomorphic quadratic differentials")
    common(sp)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(fn=cmd_basis)

    sp = sub.add_parser("solve", help="reconstruct an end and report residuals")
    common(sp)
    sp.add_argument("--q", help="a0,b0,a1,b1,a2,b2 against the basis")
    sp.add_argument("--k", help="curvature in (-1,0)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("end", help="reconstruct an end and dump its tensors")
    common(sp)
    sp.add_argument("--q")
    sp.add_argument("--k")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(fn=cmd_end)

    sp = sub.add_parser("volumes", help="Fuchsian volume scan")
    common(sp)
    sp.add_argument("--k-grid", dest="k_grid", help="comma list of k values")
    sp.add_argument("--chi", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_volumes)

    sp = sub.add_parser("verify", help="run a verification suite")
    common(sp)
    sp.add_argument("--suite", choices=["pairings", "exactness", "hamiltonian", "all"],
                    default="all")
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("pairing", help="basis pairing matrix and identity check")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_pairing)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error [{e.code}]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (wolf.NonConvergenceError, wolf.PositivityLossError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, mesh_mod.MeshError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
