"""Command-line front end.

    ncve parabolic     --config cfg.yaml --out out/
    ncve delay         --config cfg.yaml --region -0.5,4,-4,4
    ncve energy-sweep  --config cfg.yaml --horizons 1,2,4,8
    ncve loi           --trials 100 --seed 7
    ncve biorthogonal  --modes 8

Exit codes: 0 success, 1 configuration error, 2 energy requested for a
non-diagonalizable system, 3 search window too small for the certified
root bound, 4 LOI violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import biorthogonal as bio
from . import delay as dl
from . import kernels
from . import loi
from . import parabolic as par
from .errors import ConfigError, InconclusiveWindow, NcveError, NotDiagonalizable
from .modal_core import SCHEMA_VERSION, ModalSystem
from .moment_gramian import energy_sweep

log = logging.getLogger("ncve")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_DIAG, EXIT_WINDOW, EXIT_LOI = 0, 1, 2, 3, 4
MAX_MODES = 24
WARN_MODES = 12

CITE_DIAG = "energy computations are restricted to diagonalizable A0"
CITE_LOI = "value-function form P satisfies the dissipation inequality along every trajectory"
CITE_ENERGY = "minimal energy Z_T(y0) is the squared L2 norm of the minimal-norm moment solution"

DEFAULT_LOI_SYSTEM = {"A0": [0.5, 0.0, 0.0, 0.2], "B0": [1.0, 1.0], "K": 3}


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plain(obj):
    """Convert numpy and complex values to JSON-friendly types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def load_config(path) -> dict:
    if path is None:
        return {"schema": SCHEMA_VERSION}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {path}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a mapping")
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: expected {SCHEMA_VERSION}, got {schema!r}")
    return doc


def _parse_floats(text: str, name: str, count: int | None = None) -> list:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: expected comma-separated numbers") from exc
    if count is not None and len(vals) != count:
        raise ConfigError(f"{name}: expected {count} numbers")
    return vals


def _horizons(args, doc_section: dict, default) -> list:
    if args.horizons:
        hs = _parse_floats(args.horizons, "--horizons")
    else:
        hs = doc_section.get("horizons", default)
        if not isinstance(hs, list):
            raise ConfigError("horizons: expected a list")
        try:
            hs = [float(h) for h in hs]
        except (TypeError, ValueError) as exc:
            raise ConfigError("horizons: expected numbers") from exc
    if not hs or any(h <= 0 for h in hs) or any(b <= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("horizons: must be positive and strictly increasing")
    return hs


def _modes_override(args, K: int) -> int:
    if args.modes is not None:
        K = args.modes
    if K < 1 or K > MAX_MODES:
        raise ConfigError(f"modes: must be in 1..{MAX_MODES}")
    if K > WARN_MODES:
        log.warning("K=%d: Gram matrices beyond %d modes per branch are badly conditioned", K, WARN_MODES)
    return K


def _initial_state(doc: dict, n: int, mapper=None) -> np.ndarray:
    raw = doc.get("y0")
    if raw is None:
        return np.ones(n, dtype=complex)
    if isinstance(raw, dict) and mapper is not None and ("v" in raw or "w" in raw):
        K = mapper.K
        try:
            v = [float(x) for x in raw.get("v", [0.0] * K)]
            w = [float(x) for x in raw.get("w", [0.0] * K)]
        except (TypeError, ValueError) as exc:
            raise ConfigError("y0: v and w must be numbers") from exc
        v = (v + [0.0] * K)[:K]
        w = (w + [0.0] * K)[:K]
        return mapper(v, w).coeffs
    if isinstance(raw, list):
        try:
            y = np.array([complex(x) if not isinstance(x, list) else complex(*x) for x in raw])
        except (TypeError, ValueError) as exc:
            raise ConfigError("y0: expected numbers or [re, im] pairs") from exc
        if len(y) != n:
            raise ConfigError(f"y0: expected {n} modal coefficients, got {len(y)}")
        return y
    raise ConfigError("y0: expected a list of modal coefficients or {v, w} sine coefficients")


def _energy_outputs(out: Path, rep, prefix="energy") -> None:
    _write_csv(out / f"{prefix}.csv", ["T", "energy", "norm", "residual"],
               [(float(T), float(e), float(n), float(r))
                for T, e, n, r in zip(rep.horizons, rep.energies, rep.norms, rep.residuals)])
    _write_json(out / f"{prefix}_fit.json", {**rep.fit_summary(), "citations": [CITE_ENERGY]})


# -- commands -----------------------------------------------------------

def cmd_parabolic(args, doc) -> int:
    section = doc.get("system", doc.get("parabolic"))
    if section is None:
        raise ConfigError("system: missing parabolic system section {A0, B0, K}")
    psys = par.ParabolicSystem.from_dict(section)
    K = _modes_override(args, psys.max_mode)
    psys = par.ParabolicSystem(psys.A0, psys.B0, K)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = par.spectrum(psys)
    verdict = par.ncve_verdict(psys)
    _write_json(out / "spectrum.json", spec.as_dict())
    _write_json(out / "verdict.json", verdict.as_dict())
    print(f"NCVE={verdict.ncve} controllable={verdict.controllable} spectral_ok={verdict.spectral_ok}"
          + (f" failed={','.join(verdict.failed)}" if verdict.failed else ""))
    energy = doc.get("energy")
    if energy is not None or args.horizons:
        energy = energy or {}
        if not spec.diagonalizable:
            raise NotDiagonalizable(CITE_DIAG)
        msys, mapper = par.to_modal(psys)
        y0 = _initial_state(energy, len(msys), mapper)
        hs = _horizons(args, energy, [1, 2, 4, 8, 16, 32, 64])
        rep = energy_sweep(msys, y0, hs)
        _energy_outputs(out, rep)
        print(f"energy slope {rep.fitted_slope:.4f}, norm slope {rep.norm_slope:.4f}")
    return EXIT_OK


def _region_arg(args, doc):
    text = args.region
    if text is None and doc.get("region") is not None:
        r = doc["region"]
        if not isinstance(r, list) or len(r) != 4:
            raise ConfigError("region: expected [re0, re1, im0, im1]")
        text = ",".join(str(x) for x in r)
    if text is None:
        return None
    re0, re1, im0, im1 = _parse_floats(text, "--region", 4)
    try:
        return dl.RootSearchRegion(re0, re1, im0, im1)
    except ValueError as exc:
        raise ConfigError(f"region: {exc}") from exc


def _range(bounds, name):
    if not isinstance(bounds, list) or len(bounds) != 3:
        raise ConfigError(f"{name}: expected [start, stop, step]")
    a, b, h = (float(x) for x in bounds)
    if h <= 0 or b < a:
        raise ConfigError(f"{name}: need step > 0 and stop >= start")
    n = int(math.floor((b - a) / h + 1e-9)) + 1
    return a + h * np.arange(n)


def cmd_delay(args, doc) -> int:
    section = doc.get("system")
    if section is None:
        if "a" in doc or "b" in doc:
            try:
                dsys = dl.scalar_delay_system(float(doc.get("a", 0.0)), float(doc.get("b", 0.0)),
                                              float(doc.get("tau", 1.0)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"a/b/tau: {exc}") from exc
        else:
            raise ConfigError("system: missing delay system section {n, m, M, tau, A, B}")
    else:
        dsys = dl.DelaySystem.from_dict(section)
    region = _region_arg(args, doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    verdict = dl.ncve_verdict_delay(dsys, region)
    _write_csv(out / "roots.csv", ["re", "im", "residual", "multiplicity"],
               [(float(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in verdict.details["roots"]])
    _write_json(out / "verdict.json", verdict.as_dict())
    print(f"NCVE={verdict.ncve} controllable={verdict.controllable} spectral_ok={verdict.spectral_ok} "
          f"roots={len(verdict.details['roots'])} bound={verdict.details['certified_bound']:.6g}")
    raster = doc.get("raster")
    if raster is not None:
        if not isinstance(raster, dict):
            raise ConfigError("raster: expected a mapping {a, b, tau}")
        a_vals = _range(raster.get("a"), "raster.a")
        b_vals = _range(raster.get("b"), "raster.b")
        res = dl.stability_raster(a_vals, b_vals, float(raster.get("tau", dsys.tau)))
        res.to_csv(out / "raster.csv")
        print(f"raster {len(a_vals)}x{len(b_vals)}: {int(res.ncve.sum())} NCVE cells")
    return EXIT_OK


def _modal_from_doc(args, doc):
    """Modal system from either a ``system`` (modes list) or a ``parabolic`` section."""
    section = doc.get("system")
    if isinstance(section, dict) and "A0" in section:
        section = None
        doc = {**doc, "parabolic": doc["system"]}
    if section is not None:
        return ModalSystem.from_dict(section), None
    if "parabolic" in doc:
        psys = par.ParabolicSystem.from_dict(doc["parabolic"])
        K = _modes_override(args, psys.max_mode)
        psys = par.ParabolicSystem(psys.A0, psys.B0, K)
        if not par.spectrum(psys).diagonalizable:
            raise NotDiagonalizable(CITE_DIAG)
        return par.to_modal(psys)
    return None, None


def cmd_energy_sweep(args, doc) -> int:
    msys, mapper = _modal_from_doc(args, doc)
    if msys is None:
        raise ConfigError("system: provide a modal 'system' or a 'parabolic' section")
    section = doc.get("energy", doc)
    y0 = _initial_state(section, len(msys), mapper)
    hs = _horizons(args, section, [1, 2, 4, 8, 16, 32, 64])
    rep = energy_sweep(msys, y0, hs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _energy_outputs(out, rep)
    print(f"energy slope {rep.fitted_slope:.4f}, norm slope {rep.norm_slope:.4f}, "
          f"exp rate {rep.exp_rate:.4f}; infeasible: {int((~rep.feasible).sum())}")
    return EXIT_OK


def cmd_loi(args, doc) -> int:
    msys, _ = _modal_from_doc(args, doc)
    if msys is None:
        psys = par.ParabolicSystem.from_dict(DEFAULT_LOI_SYSTEM)
        msys, _ = par.to_modal(psys)
    try:
        T_proxy = float(doc.get("T_proxy", 64.0))
        horizon = float(doc.get("horizon", 8.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"T_proxy/horizon: {exc}") from exc
    trials = args.trials if args.trials is not None else int(doc.get("trials", 100))
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    if trials < 1:
        raise ConfigError("trials: must be positive")
    if T_proxy <= 0 or horizon <= 0:
        raise ConfigError("T_proxy/horizon: must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.debug_random_P:
        rng = np.random.default_rng(seed)
        n = len(msys)
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        M = X + X.conj().T
        P = loi.QuadraticForm(M, T_proxy, n)
    else:
        P = loi.build_P(msys, T_proxy)
    P.to_csv(out / "P.csv")
    rep = loi.loi_monte_carlo(P, msys, trials, seed, horizon)
    _write_json(out / "loi_report.json", {
        **rep.as_dict(),
        "T_proxy": T_proxy,
        "P_norm": P.norm(),
        "P_hermitian_defect": P.hermitian_defect,
        "P_min_eigenvalue": P.min_eigenvalue,
        "debug_random_P": bool(args.debug_random_P),
        "citations": [CITE_LOI],
    })
    print(f"LOI {'holds' if rep.passed else 'VIOLATED'}: worst {rep.worst_violation:.3e} "
          f"(tol {rep.tolerance:.1e}) over {trials} trajectories")
    return EXIT_OK if rep.passed else EXIT_LOI


def cmd_biorthogonal(args, doc) -> int:
    section = doc.get("family", {})
    if not isinstance(section, dict):
        raise ConfigError("family: expected a mapping")
    try:
        mu = float(section.get("mu", 0.5))
        members = int(args.modes if args.modes is not None else section.get("members", 8))
        Ns = [int(n) for n in section.get("periodic", [4, 16, 64])]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"family: {exc}") from exc
    if members < 1 or members > MAX_MODES:
        raise ConfigError(f"members: must be in 1..{MAX_MODES}")
    hs = _horizons(args, section, [1, 2, 4, 8])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"mu": mu, "members": members, "families": [], "periodic": []}
    for T in hs:
        bf = bio.min_norm_biorthogonal(bio.parabolic_family(mu, members, T))
        bf.to_csv(out / f"family_T{_fmt(T)}.csv")
        report["families"].append({"T": T, "max_residual": bf.max_residual, "gram_cond": bf.gram_cond,
                                   "norms": bf.norms(), "log_norm_slope": bio.norm_growth_slope(bf)})
    unit = bio.min_norm_biorthogonal(bio.parabolic_family(mu, members, 1.0))
    if unit.family.exponents[0] == 0.0:
        for N in Ns:
            pe = bio.periodic_extension(unit.members[0], N, unit.family)
            _write_csv(out / f"periodic_N{N}.csv", ["t", "re", "im"], bio.sampled_rows(pe, 64 * N + 1))
            report["periodic"].append({
                "N": N,
                "norm_ratio": math.sqrt(pe.norm_sq() / unit.members[0].norm_sq()),
                "integral": float(pe.integral()),
                "max_orthogonality": max(abs(float(pe.moment(g))) for g in unit.family.exponents[1:])
                if members > 1 else 0.0,
            })
    _write_json(out / "biorthogonal.json", report)
    worst = max(f["max_residual"] for f in report["families"])
    print(f"{len(hs)} families, worst biorthogonality residual {worst:.2e}")
    return EXIT_OK


COMMANDS = {
    "parabolic": cmd_parabolic,
    "delay": cmd_delay,
    "energy-sweep": cmd_energy_sweep,
    "loi": cmd_loi,
    "biorthogonal": cmd_biorthogonal,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncve", description="Null controllability with vanishing energy toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s (kernels: {kernels.BACKEND})")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML/JSON run configuration (schema: 1)")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--modes", type=int, help="modes per spectral branch (family size for biorthogonal)")
        s.add_argument("--horizons", help="comma-separated horizons")
        s.add_argument("--region", help="search window re0,re1,im0,im1")
        s.add_argument("--trials", type=int, help="Monte-Carlo trials")
        s.add_argument("--seed", type=int, help="random seed (u64)")
        if name == "loi":
            s.add_argument("--debug-random-P", action="store_true",
                           help="replace P by a random Hermitian matrix (negative control)")
    return p


def _setup_logging() -> None:
    level = os.environ.get("NCVE_LOG", "warning").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG, "warning": logging.WARNING}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.seed is not None and not (0 <= args.seed < 2 ** 64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = load_config(args.config)
        return COMMANDS[args.command](args, doc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotDiagonalizable as exc:
        print(f"not diagonalizable: {exc}", file=sys.stderr)
        return EXIT_NOT_DIAG
    except InconclusiveWindow as exc:
        print(f"inconclusive window: {exc}", file=sys.stderr)
        return EXIT_WINDOW
    except NcveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
