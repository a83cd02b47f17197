"""Command-line entry point: ``stoqmps {optimize,oracle,sample,scan} --config run.yaml``.

Exit codes: 0 success, 2 invalid configuration, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, optimize as opt, oracle, sampler as smp
from .config import ConfigError, RunConfig, load_config
from .network import relative_error

log = logging.getLogger("stoqmps")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _header(cfg: RunConfig, command: str) -> list[str]:
    return [
        f"# stoqmps {__version__} {command}",
        f"# seed: {cfg.seed}",
        "# config: " + json.dumps(cfg.to_dict(), sort_keys=True, default=str),
    ]


def write_csv(path: Path, cfg: RunConfig, command: str, columns: list[str], rows: list[dict]) -> Path:
    """CSV with a commented reproducibility header, then a header row."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in _header(cfg, command):
            fh.write(line + "\n")
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _tag(T: float) -> str:
    return f"T{T:g}"


def run_dir(cfg: RunConfig, kind: str, q: int, T: float) -> Path:
    return Path(cfg.out) / cfg.hamiltonian.name / kind / f"q{q}" / _tag(T)


def _setup(cfg: RunConfig, kind: str, q: int) -> opt.RunSetup:
    return opt.RunSetup(q, cfg.geometry, cfg.mode, kind, cfg.evaluation, cfg.L, cfg.window)


def _reference(cfg: RunConfig, T: float):
    try:
        return opt.exact_reference(cfg.hamiltonian, T, cfg.oracle.L)
    except (ValueError, RuntimeError) as exc:
        log.warning("no exact reference at T=%g: %s", T, exc)
        return None


def _optimize_all(cfg: RunConfig) -> tuple[list[dict], int]:
    """Run (or resume) every (kind, q, T); returns per-level rows and the number of new levels."""
    ham = cfg.hamiltonian
    rows, fresh = [], 0
    for kind in cfg.kind:
        for q in cfg.q:
            setup = _setup(cfg, kind, q)
            for T in cfg.temperatures:
                problem = opt.ThermalProblem(ham, T)
                directory = run_dir(cfg, kind, q, T)
                ref = _reference(cfg, T)
                extra = {"model": ham.to_dict(), "T": T, "q": q, "kind": kind, "seed": cfg.seed,
                         "f_exact": None if ref is None else ref.free_energy}
                start = opt.load_run(directory, problem, setup)
                if start.levels:
                    log.info("%s: resuming after tau=%d", directory, start.levels[-1].tau)

                def save(level, directory=directory, extra=extra):
                    rel = None if extra["f_exact"] is None else relative_error(level.best_f, extra["f_exact"])
                    opt.write_level(directory, level, {**extra, "relative_error": rel})

                before = len(start.levels)
                run = opt.batch_sequential(problem, setup, cfg.tau_max, cfg.optimizer, start=start, on_level=save)
                fresh += len(run.levels) - before
                for lv in run.levels[: cfg.tau_max]:
                    rows.append({
                        "kind": kind, "q": q, "tau": lv.tau, "T": T, "f": lv.best_f,
                        "f_exact": extra["f_exact"],
                        "relative_error": None if ref is None else relative_error(lv.best_f, ref.free_energy),
                        "status": lv.status, "min_visited_f": lv.min_visited,
                    })
    return rows, fresh


_LEVEL_COLUMNS = ["kind", "q", "tau", "T", "f", "f_exact", "relative_error", "status", "min_visited_f"]


def cmd_optimize(cfg: RunConfig) -> dict:
    t0 = time.time()
    rows, fresh = _optimize_all(cfg)
    out = Path(cfg.out)
    write_csv(out / "optimize.csv", cfg, "optimize", _LEVEL_COLUMNS, rows)
    for kind in cfg.kind:
        for q in cfg.q:
            for T in cfg.temperatures:
                sel = [r for r in rows if r["kind"] == kind and r["q"] == q and r["T"] == T]
                write_csv(out / f"depth_{kind}_q{q}_{_tag(T)}.csv", cfg, "optimize", _LEVEL_COLUMNS, sel)
    if set(cfg.kind) == {"psa", "csa"}:
        write_csv(out / "psa_vs_csa.csv", cfg, "optimize",
                  ["q", "tau", "T", "f_psa", "f_csa", "relative_error_psa", "relative_error_csa", "f_exact"],
                  _compare(rows))
    summary = {"command": "optimize", "levels_computed": fresh, "seconds": time.time() - t0,
               "config": cfg.to_dict(), "rows": rows}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=str))
    return summary


def _compare(rows: list[dict]) -> list[dict]:
    by = {}
    for r in rows:
        by.setdefault((r["q"], r["tau"], r["T"]), {})[r["kind"]] = r
    out = []
    for (q, tau, T), d in sorted(by.items()):
        if {"psa", "csa"} <= set(d):
            out.append({"q": q, "tau": tau, "T": T, "f_psa": d["psa"]["f"], "f_csa": d["csa"]["f"],
                        "relative_error_psa": d["psa"]["relative_error"],
                        "relative_error_csa": d["csa"]["relative_error"], "f_exact": d["psa"]["f_exact"]})
    return out


def cmd_scan(cfg: RunConfig) -> dict:
    """Free-energy error versus temperature at the final depth."""
    summary = cmd_optimize(cfg)
    final = [r for r in summary["rows"] if r["tau"] == cfg.tau_max]
    out = Path(cfg.out)
    cols = ["kind", "q", "tau", "T", "f", "f_exact", "relative_error"]
    write_csv(out / "scan.csv", cfg, "scan", cols, final)
    for kind in cfg.kind:
        for q in cfg.q:
            sel = sorted((r for r in final if r["kind"] == kind and r["q"] == q), key=lambda r: r["T"])
            write_csv(out / f"scan_{kind}_q{q}.csv", cfg, "scan", cols, sel)
    summary["command"] = "scan"
    return summary


def cmd_oracle(cfg: RunConfig) -> dict:
    ham = cfg.hamiltonian
    is_tfim = ham.name == "sdim" and ham.params.get("V", 0.0) == 0.0
    rows = []
    for T in cfg.oracle.temperatures:
        ed = oracle.ed_thermodynamics(ham, cfg.oracle.L, T)
        row = {"T": T, "f_ed": ed.free_energy, "energy_ed": ed.energy, "entropy_ed": ed.entropy}
        if is_tfim and T > 0:
            ff = oracle.tfim_free_energy(T)
            row.update({"f_free_fermion": ff.free_energy, "energy_free_fermion": ff.energy,
                        "entropy_free_fermion": ff.entropy, "relative_difference": relative_error(ed.free_energy, ff.free_energy)})
        rows.append(row)
    cols = ["T", "f_ed", "energy_ed", "entropy_ed"]
    if is_tfim:
        cols += ["f_free_fermion", "energy_free_fermion", "entropy_free_fermion", "relative_difference"]
    path = write_csv(Path(cfg.out) / f"oracle_{ham.name}_L{cfg.oracle.L}.csv", cfg, "oracle", cols, rows)
    return {"command": "oracle", "csv": str(path), "rows": rows}


def _artifacts(cfg: RunConfig) -> list[Path]:
    if cfg.run is not None:
        paths = [Path(cfg.run)]
    else:
        paths = [opt.level_path(run_dir(cfg, kind, q, T), cfg.tau_max)
                 for kind in cfg.kind for q in cfg.q for T in cfg.temperatures]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise FileNotFoundError("missing run artifact(s): " + ", ".join(missing) + " (run `optimize` first)")
    return paths


def cmd_sample(cfg: RunConfig) -> dict:
    ham = cfg.hamiltonian
    rows, corr_rows = [], []
    noisy = replace(cfg.noise, enabled=True)
    for path in _artifacts(cfg):
        level = opt.load_level(path)
        meta = json.loads(path.read_text())
        T = float(meta.get("T", cfg.temperatures[0]))
        exact = smp.exact_term_values(level.ansatz, level.spectrum, ham, cfg.sampler)
        f0, terms0 = smp.estimate_free_energy(level.ansatz, level.spectrum, ham, T, cfg.sampler, smp.NOISELESS)
        f1, terms1 = smp.estimate_free_energy(level.ansatz, level.spectrum, ham, T, cfg.sampler, noisy)
        exact_f = sum(t.coeff * exact[t.labels] for t in ham.terms) - T * smp.spec.entropy_density(level.spectrum)
        base = {"artifact": str(path), "kind": meta.get("kind"), "q": level.ansatz.q, "tau": level.tau, "T": T}
        for a, b in zip(terms0 + [f0], terms1 + [f1]):
            ex = exact.get(a.label)
            if a.label.startswith("energy["):
                basis = a.label[7]
                ex = sum(t.coeff * exact[t.labels] for t in ham.terms if t.support()[0][1] == basis)
            if a.label == "free_energy":
                ex = exact_f
            rows.append({**base, "observable": a.label, "exact": ex, "noiseless": a.estimate,
                         "noiseless_stderr": a.stderr, "noisy": b.estimate, "noisy_stderr": b.stderr, "shots": a.shots})
        if cfg.correlators is not None:
            c = cfg.correlators
            c0 = smp.sample_correlator(level.ansatz, level.spectrum, c.basis, c.max_distance, cfg.sampler, smp.NOISELESS)
            c1 = smp.sample_correlator(level.ansatz, level.spectrum, c.basis, c.max_distance, cfg.sampler, noisy)
            for k, (a, b) in enumerate(zip(c0, c1)):
                corr_rows.append({**base, "observable": a.label, "distance": k, "noiseless": a.estimate,
                                  "noiseless_stderr": a.stderr, "noisy": b.estimate, "noisy_stderr": b.stderr,
                                  "shots": a.shots})
    out = Path(cfg.out)
    cols = ["artifact", "kind", "q", "tau", "T", "observable", "exact", "noiseless", "noiseless_stderr",
            "noisy", "noisy_stderr", "shots"]
    write_csv(out / "sample.csv", cfg, "sample", cols, rows)
    if corr_rows:
        write_csv(out / "correlators.csv", cfg, "sample",
                  ["artifact", "kind", "q", "tau", "T", "observable", "distance", "noiseless", "noiseless_stderr",
                   "noisy", "noisy_stderr", "shots"], corr_rows)
    return {"command": "sample", "rows": rows, "correlators": corr_rows}


COMMANDS = {"optimize": cmd_optimize, "oracle": cmd_oracle, "sample": cmd_sample, "scan": cmd_scan}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoqmps", description="Thermal states as stochastic circuit MPS.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")
        p.add_argument("--jobs", type=int, help="parallel batch instances (overrides config)")
    return parser


def apply_overrides(cfg: RunConfig, out=None, seed=None, jobs=None) -> RunConfig:
    if out is not None:
        cfg.out = out
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg.seed = seed
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg.optimizer.jobs = jobs
    cfg.optimizer.seed = cfg.seed
    cfg.sampler = replace(cfg.sampler, seed=cfg.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args.out, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](cfg)
    except Exception as exc:  # reported, not re-raised: exit code carries the outcome
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({k: v for k, v in result.items() if k not in ("rows", "correlators", "config")}, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
