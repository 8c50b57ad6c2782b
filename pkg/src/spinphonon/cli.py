"""Command-line interface.

Subcommands: phonons, dos, couple, relax, sweep, converge, perturb,
toygen, run-examples. Exit codes: 0 success, 1 usage error, 2
parse/validation error, 3 numerical failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .errors import (CapacityError, ConfigError, NumericalError, ParseError,
                     SpinPhononError, ValidationError)
from .coupling import coupling_norm_distribution
from .lattice import phonon_dos, phonon_modes
from .project import (load_project, serialize_crystal,
                      serialize_derivatives, serialize_force_constants,
                      serialize_spin_system, write_bands_csv,
                      write_coupling_csv, write_dos_csv, write_results)
from .sweep import (RelaxationPipeline, SweepResult, SweepRow,
                    converge_protocol, perturbation_study, run_sweep)
from .toy import ToySpec, generate_toy_crystal
from .version import __version__

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _parse_grid(text):
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise _UsageError(f"--grid expects n or n1,n2,n3, got {text!r}")
    try:
        grid = tuple(int(p) for p in parts)
    except ValueError:
        raise _UsageError(f"--grid expects integers, got {text!r}")
    if min(grid) < 1:
        raise _UsageError("--grid divisions must be >= 1")
    return grid


def _parse_vec3(text, flag):
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"{flag} expects x,y,z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"{flag} expects numbers, got {text!r}")


def _add_common(p, config_required=True):
    p.add_argument("--config", required=config_required,
                   help="project configuration JSON")
    p.add_argument("--grid", help="q-grid divisions n or n1,n2,n3")
    p.add_argument("--sigma", type=float, help="Gaussian breadth (cm^-1)")
    p.add_argument("--temp", type=float, help="temperature (K)")
    p.add_argument("--field", help="magnetic field Bx,By,Bz (T)")
    p.add_argument("--channels", help="comma-separated channel subset")
    p.add_argument("--secular", action="store_true", default=None,
                   help="apply the secular approximation")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--seed", type=int, help="random seed where applicable")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for sweep points")


def build_parser():
    parser = _Parser(prog="spinphonon",
                     description="Direct-process spin-lattice relaxation "
                                 "for molecular crystals")
    parser.add_argument("--version", action="version",
                        version=f"spinphonon {__version__}")
    sub = parser.add_subparsers(dest="command")

    for name, descr in (
            ("phonons", "phonon frequencies over the q-grid"),
            ("dos", "phonon density of states with rigid-body decomposition"),
            ("couple", "binned squared spin-phonon coupling norms"),
            ("relax", "single relaxation-time evaluation"),
            ("sweep", "run the sweep plans declared in the config"),
            ("converge", "nested sigma/q-grid convergence protocol"),
            ("perturb", "coupling-doubling and frequency-scaling checks")):
        p = sub.add_parser(name, help=descr)
        _add_common(p)
    sub.choices["perturb"].add_argument(
        "--kind", choices=("coupling_x2", "freq_x0.8", "both"), default="both")
    sub.choices["perturb"].add_argument("--channel", default="zeeman")

    p = sub.add_parser("toygen", help="generate a synthetic project fixture")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("soft", "vanadyl"), default="soft")

    p = sub.add_parser("run-examples", help="run the bundled examples")
    p.add_argument("--filter", default=None,
                   help="only run examples whose id contains this substring")
    return parser


def _overrides(args):
    out = {}
    if args.grid is not None:
        out["qgrid"] = _parse_grid(args.grid)
    if args.sigma is not None:
        if args.sigma <= 0:
            raise _UsageError("--sigma must be positive")
        out["sigma"] = args.sigma
    if args.temp is not None:
        if args.temp < 0:
            raise _UsageError("--temp must be non-negative")
        out["temperature"] = args.temp
    if args.field is not None:
        out["field_B"] = _parse_vec3(args.field, "--field")
    if args.channels is not None:
        out["channels"] = tuple(args.channels.split(","))
    if args.secular:
        out["secular"] = True
    return out


def _load_pipeline(args):
    crystal, fc, derivs, system, config = load_project(args.config)
    pipeline = RelaxationPipeline(crystal, fc, derivs, system)
    params = config.run_params(**_overrides(args))
    out_dir = args.out if args.out is not None else config.output_dir
    return pipeline, params, config, out_dir


def _cmd_phonons(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    qpts, omega, _ = pipeline.phonons(params.qgrid)
    os.makedirs(out_dir, exist_ok=True)
    path = write_bands_csv(qpts, omega, os.path.join(out_dir, "phonons.csv"),
                           config_hash=config.config_hash)
    gamma = phonon_modes(pipeline.fc, (0.0, 0.0, 0.0))
    gamma_acoustic = ", ".join(f"{m.omega:.3e}" for m in gamma[:3])
    print(f"grid {params.qgrid}: {omega.shape[0]} q-points, "
          f"{omega.shape[1]} branches, omega in "
          f"[{omega.min():.6g}, {omega.max():.6g}] cm^-1")
    print(f"Gamma acoustic frequencies (cm^-1): {gamma_acoustic}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_dos(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    qpts, _, _ = pipeline.phonons(params.qgrid)
    dos = phonon_dos(pipeline.fc, qpts, params.sigma)
    os.makedirs(out_dir, exist_ok=True)
    path = write_dos_csv(dos, os.path.join(out_dir, "dos.csv"),
                         config_hash=config.config_hash)
    print(f"DOS area {dos.area():.6f} (3N = {3 * pipeline.crystal.n_atoms}), "
          f"sigma {params.sigma} cm^-1")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_couple(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    precursors, diag = pipeline.mode_precursors(params.qgrid, params.omega_min)
    dist = coupling_norm_distribution(
        ((w, tensors) for _, _, w, tensors in precursors), diag["n_q"])
    os.makedirs(out_dir, exist_ok=True)
    path = write_coupling_csv(dist, os.path.join(out_dir, "couplings.csv"),
                              config_hash=config.config_hash)
    print(f"projected {len(precursors)} modes over {diag['n_q']} q-points "
          f"({diag['skipped_modes']} below omega_min, "
          f"{diag['imaginary_modes']} imaginary)")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_relax(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    point = pipeline.relax(params)
    row = SweepRow(value="single", tau_ms=point.tau_ms,
                   tau_channel_ms=point.tau_channel_ms,
                   diagnostics=point.diagnostics)
    result = SweepResult(plan_axis="single", rows=(row,),
                         metadata={"params": dataclasses.asdict(params)})
    written = write_results(result, out_dir, basename="relax",
                            config_hash=config.config_hash)
    fit = ("n/a" if point.tau_fit_ms is None
           else f"{point.tau_fit_ms:.9g} ms")
    print(f"tau = {point.tau_ms:.9g} ms (exp-fit {fit})")
    for ch, tau in sorted(point.tau_channel_ms.items()):
        print(f"  {ch}: {tau:.9g} ms")
    for fmt, path in written.items():
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    plans = config.sweep_plans(threads=args.threads)
    if not plans:
        raise ConfigError("config declares no sweep plans")
    for k, plan in enumerate(plans):
        if _overrides(args):
            plan = type(plan)(axis=plan.axis, values=plan.values, params=params,
                              channel=plan.channel,
                              replication_axis=plan.replication_axis,
                              threads=plan.threads)
        result = run_sweep(pipeline, plan)
        written = write_results(result, out_dir,
                                basename=f"sweep_{k}_{plan.axis}",
                                config_hash=config.config_hash)
        failed = sum(1 for r in result.rows if r.error)
        print(f"sweep {k} ({plan.axis}): {len(result.rows)} points, "
              f"{failed} failed")
        for fmt, path in written.items():
            print(f"wrote {path}")
    return EXIT_OK


def _cmd_converge(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    report = converge_protocol(pipeline, params)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "converge.json")
    with open(path, "w") as fh:
        json.dump({"version": __version__, "config_hash": config.config_hash,
                   "report": report}, fh, indent=1)
        fh.write("\n")
    for entry in report:
        taus = ", ".join(f"{t:.6g}" for t in entry["tau_ms"])
        print(f"sigma {entry['sigma']}: grids {entry['grids']} -> tau [{taus}] "
              f"ms, converged={entry['converged']}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_perturb(args):
    pipeline, params, config, out_dir = _load_pipeline(args)
    kinds = ("coupling_x2", "freq_x0.8") if args.kind == "both" else (args.kind,)
    for kind in kinds:
        result = perturbation_study(pipeline, params, kind,
                                    channel=args.channel)
        written = write_results(result, out_dir,
                                basename=f"perturb_{kind.replace('.', '_')}",
                                config_hash=config.config_hash)
        print(f"{kind}: tau ratio {result.metadata['tau_ratio']:.6g}")
        for fmt, path in written.items():
            print(f"wrote {path}")
    return EXIT_OK


def toy_preset(name, seed=0):
    """Named synthetic-crystal presets for fixture generation."""
    if name == "soft":
        # soft acoustic band (< ~4 cm^-1) with the spin gap placed near
        # the band top: converges fast on coarse q-grids
        return ToySpec(lattice=(6.0, 6.0, 6.0), molecules_per_cell=1,
                       atoms_per_molecule=2, mass=150.0, k_intra=1.0,
                       k_inter=0.0008, g_deriv_mag=1e-3,
                       dipolar_couplings=False, field_B=(0.0, 0.0, 5.0),
                       seed=seed)
    if name == "vanadyl":
        # molecular-qubit-like parameters: anisotropic g just below 2,
        # I=7/2 nucleus with an axial hyperfine tensor, d = 16
        return ToySpec(lattice=(7.060, 7.935, 11.091), molecules_per_cell=1,
                       atoms_per_molecule=4, mass=120.0, k_intra=1.0,
                       k_inter=0.003, g_baseline=(1.9830, 1.9814, 1.9274),
                       a_baseline=(0.00354, 0.00396, 0.01396),
                       nuclear_spin=3.5, g_deriv_mag=1e-3, a_deriv_mag=1e-4,
                       field_B=(0.0, 0.0, 5.0), seed=seed)
    raise ConfigError(f"unknown toy preset {name!r}")


def write_toy_project(out_dir, spec, qgrid=(8, 8, 8), sigma=1.0,
                      temperature=50.0, sweeps=()):
    """Generate a toy crystal and serialize it as a loadable project."""
    crystal, fc, derivs, system = generate_toy_crystal(spec)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "crystal.json"), "w") as fh:
        json.dump(serialize_crystal(crystal), fh, indent=1)
        fh.write("\n")
    with open(os.path.join(out_dir, "force_constants.dat"), "w") as fh:
        fh.write(serialize_force_constants(fc))
    with open(os.path.join(out_dir, "derivatives.dat"), "w") as fh:
        fh.write(serialize_derivatives(derivs))
    config = {
        "crystal": "crystal.json",
        "force_constants": "force_constants.dat",
        "derivatives": ["derivatives.dat"],
        "spin_system": serialize_spin_system(system),
        "field_T": list(np.asarray(spec.field_B, float)),
        "temperature_K": temperature,
        "qgrid": list(qgrid),
        "sigma_cm1": sigma,
        "secular": False,
        "sweeps": list(sweeps),
        "output_dir": ".",
        "seed": spec.seed,
    }
    config_path = os.path.join(out_dir, "config.json")
    with open(config_path, "w") as fh:
        json.dump(config, fh, indent=1)
        fh.write("\n")
    return config_path


def _cmd_toygen(args):
    seed = args.seed if args.seed is not None else 0
    spec = toy_preset(args.preset, seed)
    config_path = write_toy_project(args.out, spec)
    print(f"wrote {config_path}")
    return EXIT_OK


def _cmd_run_examples(args):
    from .examples import run_examples
    report = run_examples(filter=args.filter)
    if not report:
        print("no examples matched the filter")
        return EXIT_USAGE
    failed = 0
    for entry in report:
        status = "pass" if entry["passed"] else "FAIL"
        print(f"[{status}] {entry['example']}: {entry['details']}")
        failed += 0 if entry["passed"] else 1
    print(f"{len(report) - failed}/{len(report)} examples passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


_COMMANDS = {
    "phonons": _cmd_phonons,
    "dos": _cmd_dos,
    "couple": _cmd_couple,
    "relax": _cmd_relax,
    "sweep": _cmd_sweep,
    "converge": _cmd_converge,
    "perturb": _cmd_perturb,
    "toygen": _cmd_toygen,
    "run-examples": _cmd_run_examples,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ConfigError, ValidationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpinPhononError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
