"""Command-line front end.

Commands operate on the text formats of the mesh and mode modules and emit
CSV tables / JSON reports.  Configuration is a flat key=value file merged
with command-line flags (flags win); unknown keys are rejected.  All
numeric cells use 17 significant digits and row order is fixed, so repeated
runs with the same configuration produce bit-identical artifacts.

Exit codes: 0 success, 1 validation error, 2 numerical failure (with a
diagnostic JSON on stderr), 3 I/O error.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .cascade import Cascade, CascadeError, DrivingField, load_field, series_vs_direct
from .eig import EigError, delta_spectrum, discrete_K0, limit_spectrum, track_branch
from .fem import FemError, assemble
from .linalg import ArnoldiError, SingularMatrixError
from .mesh import (
    MeshParseError,
    generate_disk_in_disk,
    generate_square_with_disk,
    load_mesh,
    save_mesh,
)
from .mie import (
    FAMILY_E,
    FAMILY_H,
    MieError,
    concentric_dispersion,
    electrostatic_mode,
    matching_constants,
    nonelectrostatic_mode,
    save_mode,
)
from .perturb import NonClosedBranchError, analyticity_report, circle_path
from .specfun import SpecFunError, bessel_zeros

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    pass


_REQUIRED = object()


def _float(text):
    return float(text)


def _int(text):
    return int(text)


def _str(text):
    return str(text)


def _complex_list(text):
    items = [tok.strip() for tok in str(text).split(",") if tok.strip()]
    try:
        return [complex(tok) for tok in items]
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex list {text!r}: {exc}") from exc


def _float_list(text):
    items = [tok.strip() for tok in str(text).split(",") if tok.strip()]
    try:
        return [float(tok) for tok in items]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}: {exc}") from exc


def _str_list(text):
    return [tok.strip() for tok in str(text).split(",") if tok.strip()]


_SCHEMAS = {
    ("mesh", "gen"): {
        "shape": (_str, "disk"),
        "size": (_float, 2.0),
        "rings_core": (_int, 8),
        "rings_shell": (_int, 8),
        "n_theta": (_int, 0),
        "out": (_str, _REQUIRED),
    },
    ("mesh", "info"): {"mesh": (_str, _REQUIRED)},
    ("eig", "limit"): {
        "mesh": (_str, _REQUIRED),
        "count": (_int, 6),
        "out": (_str, _REQUIRED),
    },
    ("eig", "sweep"): {
        "mesh": (_str, _REQUIRED),
        "deltas": (_complex_list, _REQUIRED),
        "target": (_complex_list, [complex(-1.0)]),
        "count": (_int, 4),
        "out": (_str, _REQUIRED),
    },
    ("eig", "k0"): {
        "mesh": (_str, _REQUIRED),
        "count": (_int, 6),
        "tol": (_float, 1e-7),
        "out": (_str, _REQUIRED),
    },
    ("taylor", None): {
        "mesh": (_str, _REQUIRED),
        "lambda0": (_float, _REQUIRED),
        "radius": (_float, _REQUIRED),
        "samples": (_int, 16),
        "order": (_int, 4),
        "real_deltas": (_float_list, []),
        "out": (_str, _REQUIRED),
    },
    ("cascade", None): {
        "mesh": (_str, _REQUIRED),
        "field": (_str, ""),
        "fx": (_float, 1.0),
        "fy": (_float, 0.0),
        "delta": (_float, 0.05),
        "orders": (_int, 6),
        "out": (_str, _REQUIRED),
    },
    ("mie", "electrostatic"): {
        "n": (_int, _REQUIRED),
        "m": (_int, 0),
        "root": (_int, 1),
        "R": (_float, 2.0),
        "out": (_str, _REQUIRED),
    },
    ("mie", "nonelectrostatic"): {
        "p": (_int, _REQUIRED),
        "q": (_int, 0),
        "R": (_float, 2.0),
        "interval": (_int, 1),
        "out": (_str, _REQUIRED),
    },
    ("mie", "dispersion"): {
        "family": (_str, _REQUIRED),
        "n": (_int, _REQUIRED),
        "R": (_float, 2.0),
        "deltas": (_complex_list, []),
        "radius": (_float, 0.0),
        "samples": (_int, 16),
        "seed": (_float, 0.0),
        "out": (_str, _REQUIRED),
    },
    ("invariance", None): {
        "shapes": (_str_list, ["disk", "square"]),
        "size": (_float, 2.0),
        "rings": (_int, 16),
        "count": (_int, 12),
        "out": (_str, _REQUIRED),
    },
}

_SUBCOMMANDS = {
    "mesh": ("gen", "info"),
    "eig": ("limit", "sweep", "k0"),
    "mie": ("electrostatic", "nonelectrostatic", "dispersion"),
}


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _read_config_file(path: str) -> dict:
    raw = {}
    try:
        with open(path, encoding="utf-8") as f:
            for ln, line in enumerate(f, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise ConfigError(f"{path}:{ln}: expected key=value, got {text!r}")
                key, _, value = text.partition("=")
                raw[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return raw


def _parse_args(argv):
    """(command, subcommand, raw key->string map, jobs)."""
    if not argv:
        raise ConfigError(
            "usage: enzspec COMMAND [SUBCOMMAND] [--config FILE] [--key value ...]")
    command = argv[0]
    if command not in {cmd for cmd, _ in _SCHEMAS}:
        raise ConfigError(f"unknown command {command!r}")
    rest = argv[1:]
    sub = None
    if command in _SUBCOMMANDS:
        if not rest or rest[0].startswith("--"):
            raise ConfigError(f"command {command!r} needs a subcommand: "
                              + ", ".join(_SUBCOMMANDS[command]))
        sub = rest[0]
        if sub not in _SUBCOMMANDS[command]:
            raise ConfigError(f"unknown subcommand {command} {sub!r}")
        rest = rest[1:]
    raw, config_path, jobs = {}, None, 1
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"expected --key value pairs, got {tok!r}")
        key = tok[2:]
        if i + 1 >= len(rest):
            raise ConfigError(f"flag --{key} is missing its value")
        value = rest[i + 1]
        i += 2
        if key == "config":
            config_path = value
        elif key == "jobs":
            jobs = int(value)
            if jobs < 1:
                raise ConfigError("jobs must be >= 1")
        else:
            raw[key] = value
    merged = _read_config_file(config_path) if config_path else {}
    merged.update(raw)   # flags win over the config file
    return command, sub, merged, jobs


def _validate(command, sub, raw) -> dict:
    schema = _SCHEMAS[(command, sub)]
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys for {command}"
                          f"{' ' + sub if sub else ''}: {sorted(unknown)}")
    config = {}
    for key, (caster, default) in schema.items():
        if key in raw:
            try:
                config[key] = caster(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            config[key] = default
    return config


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _csv_lines(name: str, header, rows):
    lines = [f"# enzspec {name} csv v1", ",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt(cell)
                              for cell in row))
    return lines


def _generate(shape: str, size: float, rings_core: int, rings_shell: int,
              n_theta: int = 0):
    kwargs = {} if n_theta <= 0 else {"n_theta": n_theta}
    if shape == "disk":
        return generate_disk_in_disk(size, rings_core, rings_shell, **kwargs)
    if shape == "square":
        return generate_square_with_disk(size, rings_core, rings_shell, **kwargs)
    raise ConfigError(f"unknown shape {shape!r} (expected disk or square)")


def _ramp_track(forms, lambda0: float, delta: float, steps: int = 4):
    """Last eigenvalue of the branch continued from 0 to a real delta."""
    path = [delta * j / steps for j in range(steps + 1)]
    return track_branch(forms, lambda0, path).lambda_samples[-1]


# -- command bodies ----------------------------------------------------------

def _cmd_mesh_gen(cfg, out):
    mesh = _generate(cfg["shape"], cfg["size"], cfg["rings_core"],
                     cfg["rings_shell"], cfg["n_theta"])
    save_mesh(mesh, cfg["out"])
    print(f"wrote {cfg['out']}: {mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles", file=out)


def _cmd_mesh_info(cfg, out):
    mesh = load_mesh(cfg["mesh"])
    mesh.validate()
    from .mesh import INCLUSION, INTERFACE, OUTER, SHELL
    print(f"vertices {mesh.n_vertices}", file=out)
    print(f"triangles {mesh.n_triangles}", file=out)
    print(f"inclusion_area {_fmt(mesh.region_area(INCLUSION))}", file=out)
    print(f"shell_area {_fmt(mesh.region_area(SHELL))}", file=out)
    print(f"interface_edges {len(mesh.boundary_edges(INTERFACE))}", file=out)
    print(f"outer_edges {len(mesh.boundary_edges(OUTER))}", file=out)


def _cmd_eig_limit(cfg, out):
    forms = assemble(load_mesh(cfg["mesh"]))
    pairs = limit_spectrum(forms, cfg["count"])
    rows = [(i, float(np.real(p.lam)), p.residual) for i, p in enumerate(pairs)]
    _write_lines(cfg["out"], _csv_lines("eig-limit", ["index", "lambda", "residual"],
                                        [(str(i), lam, res) for i, lam, res in rows]))


def _cmd_eig_sweep(cfg, out):
    forms = assemble(load_mesh(cfg["mesh"]))
    target = cfg["target"][0]
    rows = []
    for d in cfg["deltas"]:
        pairs = delta_spectrum(forms, d, target, cfg["count"])
        for i, p in enumerate(pairs):
            rows.append((_fmt(d.real), _fmt(d.imag), str(i),
                         float(np.real(p.lam)), float(np.imag(p.lam)), p.residual))
    _write_lines(cfg["out"], _csv_lines(
        "eig-sweep",
        ["delta_re", "delta_im", "index", "lambda_re", "lambda_im", "residual"],
        rows))


def _cmd_eig_k0(cfg, out):
    forms = assemble(load_mesh(cfg["mesh"]))
    pairs = limit_spectrum(forms, cfg["count"])
    rho, _ = discrete_K0(forms)
    rows, worst = [], 0.0
    for i, p in enumerate(pairs):
        lam = float(np.real(p.lam))
        r = float(rho[i])
        mismatch = abs(lam - 1.0 / r) / abs(lam)
        worst = max(worst, mismatch)
        rows.append((str(i), lam, r, 1.0 / r, mismatch))
    _write_lines(cfg["out"], _csv_lines(
        "eig-k0", ["index", "lambda_pencil", "rho", "lambda_from_rho", "mismatch"],
        rows))
    if worst > cfg["tol"]:
        raise EigError(f"pencil/compact-operator mismatch {worst:.3e} exceeds "
                       f"{cfg['tol']:g} (table written to {cfg['out']})")


def _cmd_taylor(cfg, out):
    if cfg["radius"] <= 0.0:
        raise ConfigError("radius must be positive")
    if cfg["samples"] < 4:
        raise ConfigError("samples must be >= 4")
    forms = assemble(load_mesh(cfg["mesh"]))
    path, start = circle_path(cfg["radius"], cfg["samples"])
    branch = track_branch(forms, cfg["lambda0"], path)
    circle = np.asarray(branch.lambda_samples[start:])
    held = [(cfg["radius"] / 2.0,
             _ramp_track(forms, cfg["lambda0"], cfg["radius"] / 2.0))]
    real_axis = [_ramp_track(forms, cfg["lambda0"], d) for d in cfg["real_deltas"]]
    report = analyticity_report(circle, cfg["radius"], cfg["order"],
                                held_out=held, real_axis_samples=real_axis)
    with open(cfg["out"], "w", encoding="utf-8", newline="\n") as f:
        f.write(report.to_json() + "\n")
    print(f"wrote {cfg['out']}: closure defect {report.closure_defect:.3e}", file=out)


def _cmd_cascade(cfg, out):
    if cfg["delta"] == 0.0:
        raise ConfigError("delta must be nonzero")
    cascade = Cascade(load_mesh(cfg["mesh"]))
    if cfg["field"]:
        driving = load_field(cfg["field"], cascade.forms)
    else:
        constant = np.tile([cfg["fx"], cfg["fy"]], (cascade.mesh.n_triangles, 1))
        driving = DrivingField([constant])
    state = cascade.run(driving, cfg["orders"])
    errors = series_vs_direct(cascade, driving, cfg["delta"], cfg["orders"],
                              state=state)
    lines = _csv_lines("cascade",
                       ["order", "c", "h1_norm", "series_error"],
                       [(str(k), state.c_list[k], state.norm_list[k], errors[k])
                        for k in range(cfg["orders"] + 1)])
    lines.insert(1, f"# psi_energy {_fmt(cascade.psi_energy)}")
    _write_lines(cfg["out"], lines)


def _cmd_mie_electrostatic(cfg, out):
    mode = electrostatic_mode(cfg["n"], cfg["m"], cfg["root"], cfg["R"])
    save_mode(mode, cfg["out"])
    print(f"k {_fmt(mode.k)}", file=out)
    print(f"lambda {_fmt(mode.lam)}", file=out)


def _cmd_mie_nonelectrostatic(cfg, out):
    mode = nonelectrostatic_mode(cfg["p"], cfg["q"], cfg["R"], cfg["interval"])
    save_mode(mode, cfg["out"])
    print(f"k {_fmt(mode.k)}", file=out)
    print(f"lambda {_fmt(mode.lam)}", file=out)
    for name, value in sorted(matching_constants(mode).items()):
        print(f"matching_{name} {_fmt(value)}", file=out)


def _cmd_mie_dispersion(cfg, out, jobs=1):
    family = cfg["family"]
    if family not in (FAMILY_E, FAMILY_H):
        raise ConfigError(f"family must be {FAMILY_E!r} or {FAMILY_H!r}")
    deltas = list(cfg["deltas"])
    if cfg["radius"] > 0.0:
        if deltas:
            raise ConfigError("give either deltas or a circle radius, not both")
        deltas = [cfg["radius"] * np.exp(2j * np.pi * j / cfg["samples"])
                  for j in range(cfg["samples"] + 1)]
    if not deltas:
        raise ConfigError("no delta samples requested")
    if any(d == 0 for d in deltas):
        raise ConfigError("delta samples must be nonzero")
    seed = cfg["seed"]
    if seed == 0.0:
        seed = float(bessel_zeros(cfg["n"], 1)[0])
        if family == FAMILY_E:
            seed /= cfg["R"]

    def solve(d):
        return concentric_dispersion(family, cfg["n"], cfg["R"], d, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            lams = list(pool.map(solve, deltas))
    else:
        lams = [solve(d) for d in deltas]
    rows = [(np.real(d), np.imag(d), np.real(lam), np.imag(lam))
            for d, lam in zip(deltas, lams)]
    _write_lines(cfg["out"], _csv_lines(
        "mie-dispersion", ["delta_re", "delta_im", "lambda_re", "lambda_im"], rows))


def _cmd_invariance(cfg, out):
    rows = []
    for shape in cfg["shapes"]:
        forms = assemble(_generate(shape, cfg["size"], cfg["rings"], cfg["rings"]))
        for i, p in enumerate(limit_spectrum(forms, cfg["count"])):
            rows.append((shape, str(i), float(np.real(p.lam))))
    _write_lines(cfg["out"], _csv_lines("invariance", ["shape", "index", "lambda"],
                                        rows))


def _dispatch(command, sub, cfg, jobs, out):
    if (command, sub) == ("mesh", "gen"):
        _cmd_mesh_gen(cfg, out)
    elif (command, sub) == ("mesh", "info"):
        _cmd_mesh_info(cfg, out)
    elif (command, sub) == ("eig", "limit"):
        _cmd_eig_limit(cfg, out)
    elif (command, sub) == ("eig", "sweep"):
        _cmd_eig_sweep(cfg, out)
    elif (command, sub) == ("eig", "k0"):
        _cmd_eig_k0(cfg, out)
    elif command == "taylor":
        _cmd_taylor(cfg, out)
    elif command == "cascade":
        _cmd_cascade(cfg, out)
    elif (command, sub) == ("mie", "electrostatic"):
        _cmd_mie_electrostatic(cfg, out)
    elif (command, sub) == ("mie", "nonelectrostatic"):
        _cmd_mie_nonelectrostatic(cfg, out)
    elif (command, sub) == ("mie", "dispersion"):
        _cmd_mie_dispersion(cfg, out, jobs)
    elif command == "invariance":
        _cmd_invariance(cfg, out)
    else:   # pragma: no cover - schema and dispatch tables are in sync
        raise ConfigError(f"unhandled command {command} {sub}")


_NUMERICAL_ERRORS = (EigError, CascadeError, MieError, FemError,
                     NonClosedBranchError, SpecFunError, ArnoldiError,
                     SingularMatrixError)


def main(argv=None, out=None, err=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        command, sub, raw, jobs = _parse_args(argv)
        cfg = _validate(command, sub, raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=err)
        return 1
    try:
        _dispatch(command, sub, cfg, jobs, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=err)
        return 1
    except _NUMERICAL_ERRORS as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                         sort_keys=True), file=err)
        return 2
    except (OSError, MeshParseError) as exc:
        print(f"i/o error: {exc}", file=err)
        return 3
    return 0


if __name__ == "__main__":   # pragma: no cover
    sys.exit(main())
