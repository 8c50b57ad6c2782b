"""Project files: configuration, line-oriented data formats and results.

Formats
-------
crystal        JSON document with explicit unit tags per block
force constants  whitespace-delimited records ``l1 l2 l3 i s j t value``
                 (eV/Angstrom^2)
derivatives    records ``tensor_id atom s l1 l2 l3 m11 m12 ... m33``
               (per Angstrom), or 10-point displacement-scan blocks that
               are fitted on load
config         strict JSON; unknown keys are rejected loudly
results        CSV (9 significant digits) plus a JSON sidecar carrying
               full-precision values and metadata
"""

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import (CHANNELS, CouplingDerivativeSet, DerivativeScan,
                       fit_derivative_scan)
from .crystal import Atom, CrystalModel
from .errors import (ConfigError, ParseError, SumRuleError, UnitTagError,
                     ValidationError)
from .hamiltonian import dipolar_tensor
from .lattice import ForceConstantSet, enforce_acoustic_sum_rule
from .spins import SpinCenter, SpinCoupling, SpinSystem
from .sweep import SWEEP_AXES, RunParams, SweepPlan
from .version import __version__

#: max acceptable acoustic-sum-rule residual (eV/A^2) without enforcement
SUM_RULE_THRESHOLD = 1e-6

_CRYSTAL_UNITS = {"length": "angstrom", "mass": "amu"}
_SCAN_POINTS = 10


def _check_keys(mapping, allowed, context):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {', '.join(map(repr, unknown))} in {context}; "
            f"allowed: {', '.join(sorted(allowed))}")


def _require(mapping, keys, context):
    missing = sorted(set(keys) - set(mapping))
    if missing:
        raise ConfigError(f"missing key(s) {', '.join(missing)} in {context}")


# ---------------------------------------------------------------------------
# crystal JSON

def load_crystal(path):
    """Read a crystal JSON document (cell in Angstrom, masses in amu)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path,
                             line=exc.lineno, offset=exc.pos)
    _check_keys(doc, ("units", "cell", "atoms"), f"crystal file {path}")
    _require(doc, ("cell", "atoms"), f"crystal file {path}")
    if "units" not in doc:
        raise UnitTagError("crystal file lacks a units block", path=path)
    units = doc["units"]
    _check_keys(units, _CRYSTAL_UNITS, f"units block of {path}")
    for key, expected in _CRYSTAL_UNITS.items():
        if units.get(key) != expected:
            raise UnitTagError(
                f"unit tag {key!r} must be {expected!r}, got {units.get(key)!r}",
                path=path)
    atoms = []
    for k, rec in enumerate(doc["atoms"]):
        _check_keys(rec, ("element", "mass", "frac", "molecule"),
                    f"atom {k} of {path}")
        _require(rec, ("element", "mass", "frac"), f"atom {k} of {path}")
        atoms.append(Atom(element=rec["element"], mass=float(rec["mass"]),
                          frac=rec["frac"], molecule=int(rec.get("molecule", 0))))
    return CrystalModel(cell=np.asarray(doc["cell"], float), atoms=tuple(atoms))


def serialize_crystal(crystal):
    return {
        "units": dict(_CRYSTAL_UNITS),
        "cell": crystal.cell.tolist(),
        "atoms": [{"element": a.element, "mass": a.mass,
                   "frac": a.frac.tolist(), "molecule": a.molecule}
                  for a in crystal.atoms],
    }


# ---------------------------------------------------------------------------
# line-oriented parsing helpers

def _iter_records(path):
    """Yield (line_number, byte_offset, tokens) for non-comment lines."""
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line_offset = offset
            offset += len(raw)
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError("undecodable bytes", path=path, line=lineno,
                                 offset=line_offset + exc.start)
            stripped = text.split("#", 1)[0].strip()
            if not stripped:
                continue
            yield lineno, line_offset, stripped.split()


def _parse_int(tok, what, path, lineno, offset):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"bad integer for {what}: {tok!r}", path=path,
                         line=lineno, offset=offset)


def _parse_float(tok, what, path, lineno, offset):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"bad number for {what}: {tok!r}", path=path,
                         line=lineno, offset=offset)
    if not np.isfinite(v):
        raise ParseError(f"non-finite value for {what}", path=path,
                         line=lineno, offset=offset)
    return v


# ---------------------------------------------------------------------------
# force constants

def load_force_constants(path, crystal):
    """Read ``l1 l2 l3 i s j t value`` records (eV/A^2) into a
    ForceConstantSet for ``crystal``."""
    n = crystal.n_atoms
    lvecs, ii, ss, jj, tt, vals = [], [], [], [], [], []
    for lineno, offset, tok in _iter_records(path):
        if len(tok) != 8:
            raise ParseError(
                f"force-constant record needs 8 fields, got {len(tok)}",
                path=path, line=lineno, offset=offset)
        lv = tuple(_parse_int(t, "lattice vector", path, lineno, offset)
                   for t in tok[:3])
        i = _parse_int(tok[3], "atom i", path, lineno, offset)
        s = _parse_int(tok[4], "component s", path, lineno, offset)
        j = _parse_int(tok[5], "atom j", path, lineno, offset)
        t = _parse_int(tok[6], "component t", path, lineno, offset)
        v = _parse_float(tok[7], "force constant", path, lineno, offset)
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"atom index out of range (n_atoms={n})",
                             path=path, line=lineno, offset=offset)
        if not (0 <= s < 3 and 0 <= t < 3):
            raise ParseError("Cartesian component must be 0, 1 or 2",
                             path=path, line=lineno, offset=offset)
        lvecs.append(lv)
        ii.append(i)
        ss.append(s)
        jj.append(j)
        tt.append(t)
        vals.append(v)
    if not vals:
        raise ParseError("no force-constant records found", path=path)
    return ForceConstantSet(crystal=crystal, lvecs=lvecs, i=ii, s=ss,
                            j=jj, t=tt, values=vals)


def serialize_force_constants(fc):
    lines = ["# l1 l2 l3 i s j t value(eV/A^2)"]
    for k in range(fc.n_records):
        lv = fc.lvecs[k]
        lines.append(f"{lv[0]} {lv[1]} {lv[2]} {fc.i[k]} {fc.s[k]} "
                     f"{fc.j[k]} {fc.t[k]} {float(fc.values[k])!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# derivative records

def _format_target(target):
    kind, key = target
    if kind == "g":
        return f"g:{key}"
    return f"{kind}:{key[0]}:{key[1]}"


def _parse_target(tok, path, lineno, offset):
    parts = tok.split(":")
    if parts[0] == "g" and len(parts) == 2:
        return ("g", _parse_int(parts[1], "center id", path, lineno, offset))
    if parts[0] in ("A", "dip") and len(parts) == 3:
        i = _parse_int(parts[1], "center id", path, lineno, offset)
        j = _parse_int(parts[2], "center id", path, lineno, offset)
        return (parts[0], (i, j))
    raise ParseError(
        f"bad tensor id {tok!r} (expect g:<id>, A:<i>:<j> or dip:<i>:<j>)",
        path=path, line=lineno, offset=offset)


def load_derivatives(path, crystal):
    """Read derivative records and/or displacement-scan blocks.

    Direct records carry the tensor derivative per Angstrom; ``scan``
    headers are followed by exactly 10 displacement rows and fitted with
    the quartic-polynomial protocol on load.
    """
    n = crystal.n_atoms
    targets, atoms, ss, lvecs, tensors, prov = [], [], [], [], [], []
    records = _iter_records(path)
    pending_scan = None  # (header info, rows collected)

    def flush_scan():
        nonlocal pending_scan
        header, rows = pending_scan
        target, atom, s, lv, lineno, offset = header
        if len(rows) != _SCAN_POINTS:
            raise ParseError(
                f"scan block needs {_SCAN_POINTS} rows, got {len(rows)}",
                path=path, line=lineno, offset=offset)
        disp = np.array([r[0] for r in rows])
        tens = np.array([r[1] for r in rows])
        scan = DerivativeScan(target=target, atom=atom, direction=s,
                              displacements=disp, tensors=tens)
        d_tensor, _ = fit_derivative_scan(scan)
        targets.append(target)
        atoms.append(atom)
        ss.append(s)
        lvecs.append(lv)
        tensors.append(d_tensor)
        prov.append(f"scan-fit:{os.path.basename(path)}:{lineno}")
        pending_scan = None

    for lineno, offset, tok in records:
        if pending_scan is not None:
            if len(tok) != 10:
                raise ParseError(
                    f"scan row needs 10 fields (displacement + 9 components), "
                    f"got {len(tok)}", path=path, line=lineno, offset=offset)
            disp = _parse_float(tok[0], "displacement", path, lineno, offset)
            comps = [_parse_float(t, "tensor component", path, lineno, offset)
                     for t in tok[1:]]
            pending_scan[1].append((disp, np.array(comps).reshape(3, 3)))
            if len(pending_scan[1]) == _SCAN_POINTS:
                flush_scan()
            continue
        if tok[0] == "scan":
            if len(tok) != 7:
                raise ParseError(
                    "scan header needs 7 fields: scan tensor_id atom s l1 l2 l3",
                    path=path, line=lineno, offset=offset)
            target = _parse_target(tok[1], path, lineno, offset)
            atom = _parse_int(tok[2], "atom", path, lineno, offset)
            s = _parse_int(tok[3], "component s", path, lineno, offset)
            lv = tuple(_parse_int(t, "lattice vector", path, lineno, offset)
                       for t in tok[4:7])
            if not 0 <= atom < n:
                raise ParseError(f"atom index out of range (n_atoms={n})",
                                 path=path, line=lineno, offset=offset)
            if not 0 <= s < 3:
                raise ParseError("Cartesian component must be 0, 1 or 2",
                                 path=path, line=lineno, offset=offset)
            pending_scan = ((target, atom, s, lv, lineno, offset), [])
            continue
        if len(tok) != 15:
            raise ParseError(
                f"derivative record needs 15 fields, got {len(tok)}",
                path=path, line=lineno, offset=offset)
        target = _parse_target(tok[0], path, lineno, offset)
        atom = _parse_int(tok[1], "atom", path, lineno, offset)
        s = _parse_int(tok[2], "component s", path, lineno, offset)
        lv = tuple(_parse_int(t, "lattice vector", path, lineno, offset)
                   for t in tok[3:6])
        comps = [_parse_float(t, "tensor component", path, lineno, offset)
                 for t in tok[6:15]]
        if not 0 <= atom < n:
            raise ParseError(f"atom index out of range (n_atoms={n})",
                             path=path, line=lineno, offset=offset)
        if not 0 <= s < 3:
            raise ParseError("Cartesian component must be 0, 1 or 2",
                             path=path, line=lineno, offset=offset)
        targets.append(target)
        atoms.append(atom)
        ss.append(s)
        lvecs.append(lv)
        tensors.append(np.array(comps).reshape(3, 3))
        prov.append(f"file:{os.path.basename(path)}:{lineno}")
    if pending_scan is not None:
        header = pending_scan[0]
        raise ParseError("truncated scan block at end of file", path=path,
                         line=header[4], offset=header[5])
    return CouplingDerivativeSet(targets, atoms, ss, lvecs, tensors, prov)


def serialize_derivatives(derivs):
    lines = ["# tensor_id atom s l1 l2 l3 m11 m12 m13 m21 m22 m23 m31 m32 m33"]
    for k in range(derivs.n_records):
        lv = derivs.lvecs[k]
        comps = " ".join(repr(float(x)) for x in derivs.tensors[k].reshape(-1))
        lines.append(f"{_format_target(derivs.targets[k])} {derivs.atom[k]} "
                     f"{derivs.s[k]} {lv[0]} {lv[1]} {lv[2]} {comps}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# spin system declaration

_CENTER_KEYS = ("id", "kind", "s", "g", "position", "atom", "magneton")
_COUPLING_KEYS = ("i", "j", "tag", "tensor", "from_geometry")
_SPIN_SYSTEM_KEYS = ("centers", "couplings", "include_nuclear_zeeman",
                     "dimension_cap")


def build_spin_system(decl, crystal, field_T=None):
    """Construct a SpinSystem from its config declaration."""
    _check_keys(decl, _SPIN_SYSTEM_KEYS, "spin_system")
    _require(decl, ("centers",), "spin_system")
    cart = crystal.cart_positions
    centers = []
    for k, rec in enumerate(decl["centers"]):
        _check_keys(rec, _CENTER_KEYS, f"spin center {k}")
        _require(rec, ("id", "kind", "s"), f"spin center {k}")
        if "position" in rec and "atom" in rec:
            raise ConfigError(f"spin center {k}: give position or atom, not both")
        position = rec.get("position")
        if "atom" in rec:
            idx = int(rec["atom"])
            if not 0 <= idx < crystal.n_atoms:
                raise ConfigError(f"spin center {k}: atom index {idx} out of range")
            position = cart[idx]
        centers.append(SpinCenter(id=int(rec["id"]), kind=rec["kind"],
                                  s=float(rec["s"]), g=rec.get("g"),
                                  position=position,
                                  magneton=rec.get("magneton")))
    by_id = {c.id: c for c in centers}
    couplings = []
    for k, rec in enumerate(decl.get("couplings", ())):
        _check_keys(rec, _COUPLING_KEYS, f"spin coupling {k}")
        _require(rec, ("i", "j"), f"spin coupling {k}")
        i, j = int(rec["i"]), int(rec["j"])
        tag = rec.get("tag", "custom")
        if rec.get("from_geometry"):
            if "tensor" in rec:
                raise ConfigError(
                    f"spin coupling {k}: tensor and from_geometry are exclusive")
            if i not in by_id or j not in by_id:
                raise ConfigError(f"spin coupling {k}: unknown center id")
            ci, cj = by_id[i], by_id[j]
            tensor = dipolar_tensor(ci, cj, cj.position - ci.position)
        else:
            _require(rec, ("tensor",), f"spin coupling {k}")
            tensor = np.asarray(rec["tensor"], float)
        couplings.append(SpinCoupling(i=i, j=j, tensor=tensor, tag=tag))
    return SpinSystem(
        centers=tuple(centers), couplings=tuple(couplings), field_B=field_T,
        include_nuclear_zeeman=bool(decl.get("include_nuclear_zeeman", True)),
        dimension_cap=int(decl.get("dimension_cap", 256)))


def serialize_spin_system(system):
    centers = []
    for c in system.centers:
        rec = {"id": c.id, "kind": c.kind, "s": c.s, "g": c.g.tolist(),
               "position": c.position.tolist(), "magneton": c.magneton}
        centers.append(rec)
    couplings = [{"i": cp.i, "j": cp.j, "tag": cp.tag,
                  "tensor": cp.tensor.tolist()} for cp in system.couplings]
    return {"centers": centers, "couplings": couplings,
            "include_nuclear_zeeman": system.include_nuclear_zeeman,
            "dimension_cap": system.dimension_cap}


# ---------------------------------------------------------------------------
# project configuration

_CONFIG_KEYS = ("crystal", "force_constants", "derivatives", "spin_system",
                "field_T", "temperature_K", "qgrid", "sigma_cm1", "channels",
                "secular", "sweeps", "output_dir", "seed", "enforce_sum_rule",
                "omega_min_cm1", "prune_sigma_mult")
_SWEEP_KEYS = ("axis", "values", "channel", "replication_axis", "threads")


@dataclass(frozen=True)
class ProjectConfig:
    """Validated run configuration, with the raw document retained for
    hashing and metadata echo."""

    path: str
    raw: dict = field(repr=False)
    crystal_path: str
    fc_path: str
    deriv_paths: tuple
    spin_system: dict = field(repr=False)
    field_T: tuple = None
    temperature_K: float = 20.0
    qgrid: tuple = (8, 8, 8)
    sigma_cm1: float = 1.0
    channels: tuple = None
    secular: bool = False
    sweeps: tuple = ()
    output_dir: str = "."
    seed: int = 0
    enforce_sum_rule: bool = False
    omega_min_cm1: float = 0.01
    prune_sigma_mult: float = 20.0

    @property
    def config_hash(self):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def run_params(self, **overrides):
        params = RunParams(qgrid=tuple(self.qgrid), sigma=self.sigma_cm1,
                           temperature=self.temperature_K,
                           field_B=None if self.field_T is None else tuple(self.field_T),
                           channels=self.channels, secular=self.secular,
                           omega_min=self.omega_min_cm1,
                           prune_sigma_mult=self.prune_sigma_mult)
        if overrides:
            params = replace(params, **overrides)
        return params

    def sweep_plans(self, threads=None):
        plans = []
        for sw in self.sweeps:
            plans.append(SweepPlan(
                axis=sw["axis"], values=tuple(sw["values"]),
                params=self.run_params(), channel=sw.get("channel"),
                replication_axis=int(sw.get("replication_axis", 0)),
                threads=int(threads if threads is not None
                            else sw.get("threads", 1))))
        return plans


def load_config(path):
    """Parse and validate the config document alone (no data files)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path=path,
                             line=exc.lineno, offset=exc.pos)
    _check_keys(doc, _CONFIG_KEYS, f"config file {path}")
    _require(doc, ("crystal", "force_constants", "spin_system"),
             f"config file {path}")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    crystal_path = resolve(doc["crystal"])
    fc_path = resolve(doc["force_constants"])
    deriv_paths = tuple(resolve(p) for p in doc.get("derivatives", ()))
    for p in (crystal_path, fc_path) + deriv_paths:
        if not os.path.exists(p):
            raise ConfigError(f"referenced file does not exist: {p}")

    sigma = float(doc.get("sigma_cm1", 1.0))
    if sigma <= 0:
        raise ConfigError("sigma_cm1 must be positive")
    temperature = float(doc.get("temperature_K", 20.0))
    if temperature < 0:
        raise ConfigError("temperature_K must be non-negative")
    qgrid = tuple(int(x) for x in doc.get("qgrid", (8, 8, 8)))
    if len(qgrid) != 3 or min(qgrid) < 1:
        raise ConfigError("qgrid must be three integers >= 1")
    field_T = doc.get("field_T")
    if field_T is not None:
        field_T = tuple(float(x) for x in field_T)
        if len(field_T) != 3 or not all(np.isfinite(field_T)):
            raise ConfigError("field_T must be a finite 3-vector")
    channels = doc.get("channels")
    if channels is not None:
        channels = tuple(channels)
        bad = set(channels) - set(CHANNELS)
        if bad:
            raise ConfigError(f"unknown channel(s) {sorted(bad)}; "
                              f"allowed: {CHANNELS}")
    sweeps = []
    for k, sw in enumerate(doc.get("sweeps", ())):
        _check_keys(sw, _SWEEP_KEYS, f"sweep plan {k}")
        _require(sw, ("axis", "values"), f"sweep plan {k}")
        if sw["axis"] not in SWEEP_AXES:
            raise ConfigError(f"sweep plan {k}: unknown axis {sw['axis']!r}; "
                              f"allowed: {SWEEP_AXES}")
        sweeps.append(dict(sw))
    omega_min = float(doc.get("omega_min_cm1", 0.01))
    if omega_min <= 0:
        raise ConfigError("omega_min_cm1 must be positive")
    prune = doc.get("prune_sigma_mult", 20.0)
    prune = None if prune is None else float(prune)

    return ProjectConfig(
        path=os.path.abspath(path), raw=doc, crystal_path=crystal_path,
        fc_path=fc_path, deriv_paths=deriv_paths,
        spin_system=doc["spin_system"], field_T=field_T,
        temperature_K=temperature, qgrid=qgrid, sigma_cm1=sigma,
        channels=channels, secular=bool(doc.get("secular", False)),
        sweeps=tuple(sweeps),
        output_dir=resolve(doc.get("output_dir", ".")),
        seed=int(doc.get("seed", 0)),
        enforce_sum_rule=bool(doc.get("enforce_sum_rule", False)),
        omega_min_cm1=omega_min, prune_sigma_mult=prune)


def load_project(path):
    """Load and cross-validate every file a config references.

    Returns (crystal, force constants, derivative set, spin system,
    config). The force constants come back sum-rule clean: residuals
    above threshold raise unless ``enforce_sum_rule`` is set, in which
    case the self-terms are adjusted here.
    """
    config = load_config(path)
    crystal = load_crystal(config.crystal_path)
    fc = load_force_constants(config.fc_path, crystal)
    residual = fc.sum_rule_residual()
    if residual > SUM_RULE_THRESHOLD:
        if not config.enforce_sum_rule:
            raise SumRuleError(
                f"acoustic sum-rule residual {residual:.3e} eV/A^2 exceeds "
                f"{SUM_RULE_THRESHOLD:.0e}; set enforce_sum_rule to adjust "
                f"self-terms at load")
        fc = enforce_acoustic_sum_rule(fc)
    derivs = CouplingDerivativeSet([], [], [], np.zeros((0, 3)),
                                   np.zeros((0, 3, 3)))
    for p in config.deriv_paths:
        derivs = derivs.merged(load_derivatives(p, crystal))
    system = build_spin_system(config.spin_system, crystal, config.field_T)
    # derivative records must reference declared spin centers
    ids = {c.id for c in system.centers}
    for k, (kind, key) in enumerate(derivs.targets):
        ref = (key,) if kind == "g" else key
        unknown = [r for r in ref if r not in ids]
        if unknown:
            raise ValidationError(
                f"derivative record {k} ({derivs.provenance[k]}) references "
                f"unknown spin center(s) {unknown}")
    return crystal, fc, derivs, system, config


# ---------------------------------------------------------------------------
# results emission

def _to_native(obj):
    """Recursively convert numpy containers to plain Python."""
    if isinstance(obj, dict):
        return {str(k): _to_native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_native(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_native(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _fmt9(x):
    """9-significant-digit CSV formatting; blanks for missing values."""
    if x is None:
        return ""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return f"{x:.9g}"


def _stamp(config_hash):
    h = config_hash if config_hash else "none"
    return f"# spinphonon {__version__} config {h}"


RESULT_CSV_COLUMNS = ("axis", "tau_total_ms", "tau_zeeman_ms",
                      "tau_hyperfine_ms", "tau_dipolar_ms", "tau_fit_ms",
                      "fit_residual", "mismatch", "non_exponential",
                      "n_couplings", "error", "version", "config_hash")


def write_results(result, out_dir, basename=None, formats=("csv", "json"),
                  config_hash=None):
    """Emit one SweepResult as CSV and/or a JSON sidecar.

    The CSV carries 9 significant digits; the JSON sidecar keeps full
    precision so reloading reproduces tau values bit-exactly. Both embed
    the code version and the config hash.
    """
    os.makedirs(out_dir, exist_ok=True)
    if basename is None:
        basename = f"sweep_{result.plan_axis}"
    written = {}
    if "csv" in formats:
        path = os.path.join(out_dir, basename + ".csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_CSV_COLUMNS)
            for row in result.rows:
                ch = row.tau_channel_ms
                diag = row.diagnostics
                writer.writerow([
                    row.value if isinstance(row.value, str) else _fmt9(row.value),
                    _fmt9(row.tau_ms),
                    _fmt9(ch.get("zeeman")),
                    _fmt9(ch.get("hyperfine")),
                    _fmt9(ch.get("dipolar")),
                    _fmt9(diag.get("tau_fit_ms")),
                    _fmt9(diag.get("fit_residual")),
                    str(bool(diag.get("mismatch", False))).lower(),
                    str(bool(diag.get("non_exponential", False))).lower(),
                    diag.get("n_couplings", ""),
                    row.error or "",
                    __version__,
                    config_hash or "",
                ])
        written["csv"] = path
    if "json" in formats:
        path = os.path.join(out_dir, basename + ".json")
        doc = {
            "version": __version__,
            "config_hash": config_hash,
            "plan_axis": result.plan_axis,
            "metadata": _to_native(result.metadata),
            "rows": [{
                "value": _to_native(row.value),
                "tau_ms": _to_native(row.tau_ms),
                "tau_channel_ms": _to_native(row.tau_channel_ms),
                "diagnostics": _to_native(row.diagnostics),
                "error": row.error,
            } for row in result.rows],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
        written["json"] = path
    return written


def load_results(path):
    """Reload a JSON results sidecar (full-precision round trip)."""
    with open(path) as fh:
        return json.load(fh)


def write_dos_csv(dos, path, config_hash=None):
    """(omega, total, translational, rotational, intra) columns."""
    with open(path, "w", newline="") as fh:
        fh.write(_stamp(config_hash) + "\n")
        writer = csv.writer(fh)
        writer.writerow(("omega_cm1", "total", "translational",
                         "rotational", "intra"))
        for k in range(dos.frequency.size):
            writer.writerow([_fmt9(dos.frequency[k]), _fmt9(dos.total[k]),
                             _fmt9(dos.translational[k]),
                             _fmt9(dos.rotational[k]), _fmt9(dos.intra[k])])
    return path


def write_bands_csv(qpoints, omega, path, config_hash=None):
    """Per-q phonon frequencies: q1,q2,q3,omega_1..omega_3N."""
    omega = np.asarray(omega)
    with open(path, "w", newline="") as fh:
        fh.write(_stamp(config_hash) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["q1", "q2", "q3"]
                        + [f"omega_{k + 1}" for k in range(omega.shape[1])])
        for q, row in zip(np.asarray(qpoints), omega):
            writer.writerow([_fmt9(x) for x in q] + [_fmt9(w) for w in row])
    return path


def write_coupling_csv(distribution, path, config_hash=None):
    """Binned squared coupling norms per channel versus frequency."""
    first = next(iter(distribution.values()))
    centers = first[0]
    with open(path, "w", newline="") as fh:
        fh.write(_stamp(config_hash) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["omega_cm1"] + [ch for ch in CHANNELS
                                         if ch in distribution])
        for k in range(len(centers)):
            row = [_fmt9(centers[k])]
            for ch in CHANNELS:
                if ch in distribution:
                    row.append(_fmt9(distribution[ch][1][k]))
            writer.writerow(row)
    return path
