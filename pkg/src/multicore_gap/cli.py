"""Command-line front end: topology listing, scans, analysis and replay."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import (
    GapProfile,
    IdhEntry,
    IdhProfile,
    compare_minima,
    find_optimal_I,
    fit_exponential_decay,
    interior_residuals,
    scan_gap,
    scan_idh,
)
from .errors import ConfigError, MulticoreGapError
from .markov import build_total_operator, write_operator_triplets
from .metrics import haar_reference
from .model import CONFIG_KEYS, CircuitConfig, Topology, build_topology, parse_config_value, read_config_file

GAP_COLUMNS = ("topology", "n_cores", "n_qubits_per_core", "p_single", "c_rand",
               "I", "D", "lambda", "delta", "one_minus_delta")
ENSEMBLE_COLUMNS = ("topology", "n_cores", "n_qubits_per_core", "p_single",
                    "I", "L", "n_samples", "idh", "dh")
SCHEMA_VERSION = 1
REQUIRED_KEYS = ("topology", "n_cores", "n_qubits_per_core")

# flag dest -> CircuitConfig field
FLAG_KEYS = {
    "topology": "topology",
    "cores": "n_cores",
    "qubits_per_core": "n_qubits_per_core",
    "layers": "n_layers",
    "samples": "ensemble_size",
    "p_single": "p_single",
    "c_rand": "c_rand",
    "seed": "master_seed",
}


class UsageError(MulticoreGapError):
    pass


class CsvParseError(MulticoreGapError, ValueError):
    pass


# -- config ----------------------------------------------------------------

def resolve_config(args: argparse.Namespace) -> CircuitConfig:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, key in FLAG_KEYS.items():
        raw = getattr(args, dest, None)
        if raw is not None:
            values[key] = parse_config_value(key, str(raw))
    for key in REQUIRED_KEYS:
        if key not in values:
            flag = next(f for f, k in FLAG_KEYS.items() if k == key).replace("_", "-")
            raise UsageError(f"missing config key '{key}' (set it in --config or pass --{flag})")
    values.setdefault("intracore_steps", 1)
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return CircuitConfig(**values)


def _i_values(args: argparse.Namespace) -> list[int]:
    if args.i_min < 0 or args.i_max < args.i_min:
        raise UsageError(f"bad I range {args.i_min}..{args.i_max}")
    return list(range(args.i_min, args.i_max + 1))


# -- output ----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(float(x))  # plain repr even for numpy scalars
    return str(x)


def write_csv(path: Path, kind: str, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [f"# multicore-gap {kind} v{SCHEMA_VERSION}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_csv(path: Path, columns: Sequence[str]) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CsvParseError(f"{path}: {exc}") from exc
    rows, header = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            if tuple(cells) != tuple(columns):
                raise CsvParseError(f"{path}:{lineno}: expected header {','.join(columns)}")
            header = cells
            continue
        if len(cells) != len(header):
            raise CsvParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}")
        row = {}
        for name, cell in zip(header, cells):
            try:
                row[name] = cell if name == "topology" else (
                    int(cell) if name in {"n_cores", "n_qubits_per_core", "I", "D", "L", "n_samples"}
                    else float(cell))
            except ValueError:
                raise CsvParseError(f"{path}:{lineno}: bad value {cell!r} in column {name}") from None
        row["_line"] = lineno
        rows.append(row)
    if header is None:
        raise CsvParseError(f"{path}: no header row")
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    return rows


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: Optional[CircuitConfig], params: dict,
                   extra: Optional[dict] = None) -> Path:
    manifest = {
        "tool": "multicore-gap",
        "version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config.to_dict() if config is not None else None,
        "seeds": {"master_seed": config.master_seed} if config is not None else {},
        "params": params,
        "outputs": {str(out): _sha256(out)},
    }
    if extra:
        manifest.update(extra)
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- commands --------------------------------------------------------------

def cmd_topology(args: argparse.Namespace) -> int:
    links = build_topology(args.topology, args.cores)
    print(f"topology={links.kind.value} n_cores={links.n_cores} n_links={links.n_links}")
    if links.kind is Topology.STAR:
        print("hub=0")
    for a, b in links:
        print(f"{a} {b}")
    return 0


def run_gap_scan(config: CircuitConfig, I_values: list[int], out: Path, threads: int,
                 interactions: bool = True) -> GapProfile:
    profile = scan_gap(config, I_values, interactions=interactions, threads=threads)
    rows = [
        (config.topology.value, config.n_cores, config.n_qubits_per_core, config.p_single,
         config.c_rand, e.I, e.D, e.lam, e.delta, e.one_minus_delta)
        for e in profile.entries
    ]
    for e in profile.entries:
        if not all(math.isfinite(v) for v in (e.lam, e.delta)):
            raise MulticoreGapError(f"non-finite result at I={e.I}")
    write_csv(out, "gap-scan", GAP_COLUMNS, rows)
    return profile


def cmd_gap_scan(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    I_values = _i_values(args)
    out = Path(args.out)
    profile = run_gap_scan(config, I_values, out, args.threads, not args.no_interactions)
    audit = {
        str(e.I): {
            "top_moduli": list(e.spectrum.top_moduli),
            "eigenvalue": [e.spectrum.eigenvalue.real, e.spectrum.eigenvalue.imag],
            "complex_flag": e.spectrum.is_complex,
            "n_unit": e.spectrum.n_unit,
            "method": e.spectrum.method,
        }
        for e in profile.entries
    }
    params = {"i_values": I_values, "interactions": not args.no_interactions, "threads": args.threads}
    write_manifest(out, "gap-scan", config, params, {"audit": audit})
    best = find_optimal_I(profile) if len(profile.entries) >= 3 else None
    if best is not None:
        print(f"I*={best.I_star} delta={best.value!r} interior={best.is_interior}")
    print(f"wrote {out}")
    return 0


def run_ensemble_scan(config: CircuitConfig, I_values: list[int], out: Path, threads: int,
                      use_cache: bool = True) -> IdhProfile:
    n_samples = config.ensemble_size
    haar = haar_reference(config.n_qubits, n_samples, config.master_seed,
                          use_cache=use_cache, threads=threads)
    profile = scan_idh(config, I_values, n_samples, haar, threads)
    for e in profile.entries:
        if not (math.isfinite(e.idh) and math.isfinite(e.dh)):
            raise MulticoreGapError(f"non-finite result at I={e.I}")
    rows = [
        (config.topology.value, config.n_cores, config.n_qubits_per_core, config.p_single,
         e.I, config.n_layers, e.n_samples, e.idh, e.dh)
        for e in profile.entries
    ]
    write_csv(out, "ensemble-scan", ENSEMBLE_COLUMNS, rows)
    return profile


def cmd_ensemble_scan(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    I_values = _i_values(args)
    out = Path(args.out)
    run_ensemble_scan(config, I_values, out, args.threads, not args.no_cache)
    params = {"i_values": I_values, "threads": args.threads, "use_cache": not args.no_cache}
    write_manifest(out, "ensemble-scan", config, params)
    print(f"wrote {out}")
    return 0


def _single_architecture(rows: list[dict], path: Path) -> None:
    keys = ("topology", "n_cores", "n_qubits_per_core")
    first = tuple(rows[0][k] for k in keys)
    for row in rows[1:]:
        if tuple(row[k] for k in keys) != first:
            raise CsvParseError(f"{path}:{row['_line']}: rows mix different architectures")


def gap_profile_from_csv(path: Path) -> GapProfile:
    rows = read_csv(path, GAP_COLUMNS)
    _single_architecture(rows, path)
    a = rows[0]["n_cores"]
    b = rows[0]["D"] - a * rows[0]["I"]
    for row in rows:
        if row["D"] != a * row["I"] + b:
            raise CsvParseError(f"{path}:{row['_line']}: D is not n_cores * I + n_links")
    try:
        return GapProfile.from_lambdas([r["I"] for r in rows], [r["lambda"] for r in rows], a, b)
    except (ValueError, MulticoreGapError) as exc:
        raise CsvParseError(f"{path}: {exc}") from exc


def idh_profile_from_csv(path: Path) -> IdhProfile:
    rows = read_csv(path, ENSEMBLE_COLUMNS)
    _single_architecture(rows, path)
    entries = tuple(IdhEntry(r["I"], r["idh"], r["dh"], r["n_samples"]) for r in rows)
    try:
        return IdhProfile(entries, rows[0]["L"])
    except ValueError as exc:
        raise CsvParseError(f"{path}: {exc}") from exc


def analyze(gap_csv: Path, ensemble_csv: Optional[Path] = None) -> dict:
    gap = gap_profile_from_csv(gap_csv)
    best = find_optimal_I(gap)
    report = {
        "i_star_gap": best.I_star,
        "gap_is_interior": best.is_interior,
        "delta_star": best.value,
        "a": gap.a,
        "b": gap.b,
        "critical_residuals": {str(k): v for k, v in interior_residuals(gap).items()},
        "i_star_idh": None,
        "idh_is_interior": None,
        "i_star_difference": None,
    }
    try:
        fit = fit_exponential_decay(gap)
        report["decay_fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                               "max_abs_residual": fit.max_abs_residual,
                               "kappa": fit.kappa, "prefactor": fit.prefactor}
    except MulticoreGapError as exc:
        report["decay_fit"] = {"error": str(exc)}
    if ensemble_csv is not None:
        idh = idh_profile_from_csv(ensemble_csv)
        cmp = compare_minima(gap, idh)
        report.update(i_star_idh=cmp.I_star_idh, idh_is_interior=cmp.idh_interior,
                      i_star_difference=cmp.difference)
    return report


def cmd_analyze(args: argparse.Namespace) -> int:
    report = analyze(Path(args.gap), Path(args.ensemble) if args.ensemble else None)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_dump_operator(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    config = config.with_steps(args.steps)
    op = build_total_operator(config)
    write_operator_triplets(op, args.out, n_cores=config.n_cores,
                            n_qubits_per_core=config.n_qubits_per_core,
                            topology=config.topology.value, intracore_steps=config.intracore_steps,
                            p_single=config.p_single, c_rand=config.c_rand)
    print(f"wrote {args.out}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    (orig_out, digest), = manifest["outputs"].items()
    out = Path(args.out or orig_out)
    config = CircuitConfig(**manifest["config"])
    params = manifest["params"]
    threads = args.threads if args.threads is not None else params.get("threads", 1)
    if manifest["command"] == "gap-scan":
        run_gap_scan(config, params["i_values"], out, threads, params.get("interactions", True))
    elif manifest["command"] == "ensemble-scan":
        run_ensemble_scan(config, params["i_values"], out, threads, params.get("use_cache", True))
    else:
        raise UsageError(f"cannot replay command {manifest['command']!r}")
    same = _sha256(out) == digest
    print(f"wrote {out}; digest {'matches' if same else 'DIFFERS from'} manifest")
    return 0 if same else 1


# -- parser ----------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser, scan: bool = True) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--topology", choices=[t.value for t in Topology])
    p.add_argument("--cores", type=int)
    p.add_argument("--qubits-per-core", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--p-single", type=str, metavar="P1")
    p.add_argument("--c-rand", type=str, metavar="C")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    if scan:
        p.add_argument("--i-min", type=int, default=1)
        p.add_argument("--i-max", type=int, default=8)
    p.add_argument("--out", metavar="PATH", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multicore-gap", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topology", help="print the links of a topology")
    p.add_argument("--topology", "--kind", dest="topology", required=True,
                   choices=[t.value for t in Topology])
    p.add_argument("--cores", type=int, required=True)
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("gap-scan", help="normalized spectral gap versus I")
    _add_config_flags(p)
    p.add_argument("--no-interactions", action="store_true",
                   help="drop inter-core links (factorized diagnostic)")
    p.set_defaults(func=cmd_gap_scan)

    p = sub.add_parser("ensemble-scan", help="ID_H and D_H versus I from statevector ensembles")
    _add_config_flags(p)
    p.add_argument("--no-cache", action="store_true", help="recompute the Haar reference")
    p.set_defaults(func=cmd_ensemble_scan)

    p = sub.add_parser("analyze", help="locate optima and test the decay criterion")
    p.add_argument("--gap", required=True, metavar="CSV")
    p.add_argument("--ensemble", metavar="CSV")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dump-operator", help="write M_total as sparse triplets")
    _add_config_flags(p, scan=False)
    p.add_argument("--steps", type=int, required=True, help="intracore steps I")
    p.set_defaults(func=cmd_dump_operator)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (MulticoreGapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
