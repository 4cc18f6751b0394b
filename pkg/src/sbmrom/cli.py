"""Command line driver: ``offline``, ``online`` and ``validate``.

Exit codes: 0 success, 1 validation/run failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import load_config, offline_payload
from .errors import ArtifactMismatchError, ConfigError, SbmRomError
from .output import write_csv, write_vtk
from .persist import (
    check_sidecar,
    config_hash,
    load_array,
    save_array,
    write_sidecar,
)
from .pipeline import OfflineData, Study, run_offline, run_online
from .rom import PodBasis
from .mesh import assemble_mass
from .validate import run_validation

ARRAY_FILES = {
    "s_u": "snapshots_velocity.bin",
    "s_p": "snapshots_pressure.bin",
    "s_sup": "snapshots_enrichment.bin",
    "basis_u": "basis_velocity.bin",
    "basis_p": "basis_pressure.bin",
    "basis_sup": "basis_enrichment.bin",
    "eig_u": "eigenvalues_velocity.bin",
    "eig_p": "eigenvalues_pressure.bin",
    "eig_sup": "eigenvalues_enrichment.bin",
}


def _parser():
    parser = argparse.ArgumentParser(
        prog="sbmrom",
        description="Embedded-boundary Stokes flow with POD-Galerkin reduction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("offline", "collect snapshots and build the reduced bases"),
        ("online", "run the mode-count/error/timing sweep from stored bases"),
        ("validate", "run the invariant suite against a configuration"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON study configuration")
        p.add_argument("--output", default=None, help="override the output directory")
        p.add_argument("--seed", type=int, default=None, help="override sampling seed")
        if name == "offline":
            p.add_argument("--jobs", type=int, default=1, help="parallel sample solves")
    return parser


def _outdir(study: Study) -> Path:
    if not study.output_dir:
        raise ConfigError("no output directory configured (set output_dir or --output)")
    out = Path(study.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_offline(study: Study, raw: dict, jobs: int) -> int:
    out = _outdir(study)
    mesh_hash = study.mesh.content_hash()
    cfg_hash = config_hash(offline_payload(raw))
    manifest_path = out / "manifest.json"
    t0 = time.perf_counter()
    try:
        off = run_offline(study, jobs=jobs)
        samples = off.samples
        arrays = {
            "s_u": off.s_u,
            "s_p": off.s_p,
            "s_sup": off.s_sup,
            "basis_u": off.basis_u.modes,
            "basis_p": off.basis_p.modes,
            "basis_sup": off.basis_sup.modes,
            "eig_u": off.basis_u.eigenvalues[:, None],
            "eig_p": off.basis_p.eigenvalues[:, None],
            "eig_sup": off.basis_sup.eigenvalues[:, None],
        }
        for key, fname in ARRAY_FILES.items():
            save_array(out / fname, arrays[key])
            write_sidecar(
                out / (fname + ".json"), mesh_hash, cfg_hash, samples, {"kind": key}
            )
        manifest = {
            "status": "complete",
            "mesh_hash": mesh_hash,
            "config_hash": cfg_hash,
            "samples": [list(map(float, mu)) for mu in samples],
            "files": dict(ARRAY_FILES),
            "timings_s": {
                **off.timings,
                "total_s": time.perf_counter() - t0,
            },
            "counts": {
                "snapshots": int(samples.shape[0]),
                "velocity_modes": off.basis_u.n_modes,
                "pressure_modes": off.basis_p.n_modes,
                "enrichment_modes": off.basis_sup.n_modes,
            },
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except SbmRomError as exc:
        manifest_path.write_text(
            json.dumps({"status": "stale", "error": str(exc)}, indent=2) + "\n"
        )
        print(f"offline stage failed: {exc}", file=sys.stderr)
        return 1
    print(f"offline artifacts written to {out}")
    return 0


def load_offline(study: Study, raw: dict) -> OfflineData:
    out = _outdir(study)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise ArtifactMismatchError(f"{manifest_path} is missing; run offline first")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("status") != "complete":
        raise ArtifactMismatchError(
            f"offline artifacts in {out} are stale: {manifest.get('error', 'unknown')}"
        )
    mesh_hash = study.mesh.content_hash()
    cfg_hash = config_hash(offline_payload(raw))
    if manifest.get("mesh_hash") != mesh_hash or manifest.get("config_hash") != cfg_hash:
        raise ArtifactMismatchError(
            f"offline artifacts in {out} belong to a different mesh/config"
        )
    arrays = {}
    for key, fname in ARRAY_FILES.items():
        check_sidecar(out / (fname + ".json"), mesh_hash, cfg_hash)
        arrays[key] = load_array(out / fname)
    samples = np.asarray(manifest["samples"], dtype=np.float64)
    basis_u = PodBasis(arrays["basis_u"], arrays["eig_u"][:, 0], "mass-x2", 2)
    basis_p = PodBasis(arrays["basis_p"], arrays["eig_p"][:, 0], "mass", 1)
    basis_sup = PodBasis(arrays["basis_sup"], arrays["eig_sup"][:, 0], "mass-x2", 2)
    return OfflineData(
        samples=samples,
        s_u=arrays["s_u"],
        s_p=arrays["s_p"],
        s_sup=arrays["s_sup"],
        basis_u=basis_u,
        basis_p=basis_p,
        basis_sup=basis_sup,
        mass=assemble_mass(study.mesh),
        timings=manifest.get("timings_s", {}),
    )


def cmd_online(study: Study, raw: dict) -> int:
    out = _outdir(study)
    try:
        off = load_offline(study, raw)
        rows = run_online(study, off)
    except SbmRomError as exc:
        print(f"online stage failed: {exc}", file=sys.stderr)
        return 1
    write_csv(
        out / "errors.csv",
        ["j", "n_u", "n_p", "n_sup", "mean_e_u", "mean_e_p"],
        [[r.j, r.n_u, r.n_p, r.n_sup, r.mean_e_u, r.mean_e_p] for r in rows],
    )
    # wall-clock medians; nondeterministic across runs by nature
    write_csv(
        out / "timings.csv",
        [
            "j",
            "t_fom_assembly_s",
            "t_fom_solve_s",
            "t_fom_s",
            "t_projection_s",
            "t_reduced_solve_s",
            "t_rom_s",
        ],
        [
            [
                r.j,
                r.t_fom_assembly,
                r.t_fom_solve,
                r.t_fom,
                r.t_projection,
                r.t_reduced_solve,
                r.t_rom,
            ]
            for r in rows
        ],
    )
    if rows:
        _write_fields(study, off, out)
    for r in rows:
        print(
            f"j={r.j:4d} modes=({r.n_u},{r.n_p},{r.n_sup}) "
            f"e_u={r.mean_e_u:.4e} e_p={r.mean_e_p:.4e} "
            f"t_fom={r.t_fom:.3f}s t_rom={r.t_rom:.3f}s"
        )
    print(f"online tables written to {out}")
    return 0


def _write_fields(study: Study, off: OfflineData, out: Path):
    """Full, reduced and absolute-error fields at the first test sample."""
    from .pipeline import assemble_for, mode_counts
    from .rom import enrich, project, sample_parameters, solve_rom
    from .assembly import solve_fom

    mu = sample_parameters(
        study.parameter_box, max(study.test_count, 1), "random", seed=study.test_seed
    )[0]
    sys = assemble_for(study, mu)
    sol = solve_fom(sys, mu=tuple(mu))
    j = max(study.mode_schedule)
    n_u, n_p, n_sup = mode_counts(study, off, j, study.use_supremizers)
    lu = enrich(
        PodBasis(off.basis_u.truncated(n_u), off.basis_u.eigenvalues, "mass-x2", 2),
        off.basis_sup,
        n_sup,
    )
    rsol = solve_rom(project(sys, lu, off.basis_p.truncated(n_p)))
    mesh = study.mesh
    n = mesh.n_nodes
    write_vtk(out / "field_full.vtk", mesh, {"u": sol.u}, {"p": sol.p})
    write_vtk(out / "field_reduced.vtk", mesh, {"u": rsol.u}, {"p": rsol.p})
    write_vtk(
        out / "field_error.vtk",
        mesh,
        {"u_err": np.abs(sol.u - rsol.u)},
        {"p_err": np.abs(sol.p - rsol.p)},
    )


def cmd_validate(study: Study) -> int:
    results = run_validation(study)
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        study, raw = load_config(args.config, seed=args.seed, output_dir=args.output)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "offline":
            return cmd_offline(study, raw, jobs=args.jobs)
        if args.command == "online":
            return cmd_online(study, raw)
        return cmd_validate(study)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SbmRomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
