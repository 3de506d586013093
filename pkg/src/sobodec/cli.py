"""Command line interface: corpus generation, decomposition and reports.

Every subcommand reads a JSON config (``--config``) or a named preset
(``--preset``) and writes into ``--out``. CSV and JSON files are the data of
record; PNG figures are written alongside unless ``--no-figures`` is given.

Config keys::

    corpus      CorpusSpec fields, or {"dir": <directory of input_NNN.sgf>}
    decompose   DecompositionConfig fields
    family      {"tag": ..., "C": ..., "gamma": ...}
    density     {"tag": ...}
    diagnose    {"r": .., "alpha": .., "concentration": [...], ...}
    truncation  {"input": <file.sgf>, "family": "above", "levels": [...]}
    assert      {"properties": bool, "residual_ratio": {"from", "to", "max"}}
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import plotting
from .corpus import CorpusSpec, generate
from .decompose import DecompositionConfig, decompose, load_decomposition, save_decomposition, verify_properties
from .diagnostics import modulus_curve, vanishing_convergence_check
from .grid import ExponentConfig, GridFunction, x_norm
from .io import read_json, read_sgf1, write_json, write_sgf1
from .operators import CoefficientFamily, EnergyDensity, orthogonality_residual_E, orthogonality_residual_F
from .presets import preset
from .truncation import geometric_ladder, verify_truncation

log = logging.getLogger("sobodec")


class ConfigError(ValueError):
    pass


# config handling


def load_config(args) -> dict[str, Any]:
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = read_json(args.config)
    else:
        cfg = {}
    if args.seed is not None and isinstance(cfg.get("corpus"), dict):
        cfg["corpus"]["seed"] = int(args.seed)
    return cfg


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("SOBODEC_THREADS")
    return max(1, int(env)) if env else 1


def exponents_of(cfg: dict[str, Any], N: int) -> ExponentConfig:
    src = (cfg.get("corpus") or {}).get("exponents") or cfg.get("decompose") or {}
    dec = cfg.get("decompose") or {}
    q = dec.get("q", src.get("q", 1.5))
    p = dec.get("p", src.get("p", 2.5))
    ps = dec.get("p_star", src.get("p_star"))
    return ExponentConfig(q=q, p=p, N=N, p_star=ps)


def load_sequence(cfg: dict[str, Any]) -> tuple[list[GridFunction], dict[str, Any]]:
    c = cfg.get("corpus")
    if c is None:
        raise ConfigError("config has no 'corpus' section")
    if "dir" in c:
        d = Path(c["dir"])
        files = sorted(d.glob("input_*.sgf"))
        if not files:
            raise ConfigError(f"no input_*.sgf files in {d}")
        first = read_sgf1(files[0])
        return [first] + [read_sgf1(f, domain=first.domain) for f in files[1:]], {"dir": str(d)}
    spec = CorpusSpec.from_dict(c)
    return generate(spec), spec.to_dict()


def _family(cfg, exps) -> CoefficientFamily:
    f = dict(cfg.get("family") or {"tag": "double-power"})
    tag = f.pop("tag", "double-power")
    return CoefficientFamily(tag, exps, **{k: v for k, v in f.items() if k in ("C", "alpha", "varrho", "gamma")})


def _density(cfg, exps) -> EnergyDensity:
    d = dict(cfg.get("density") or {"tag": "double-power"})
    return EnergyDensity(exps, tag=d.get("tag", "double-power"))


def _write_csv(path: Path, text: str) -> None:
    path.write_text(text)


# subcommands


def write_sequence(seq: Sequence[GridFunction], out: Path, manifest: dict[str, Any], exps: ExponentConfig | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    rows = ["n,x_norm"]
    for n, u in enumerate(seq, start=1):
        write_sgf1(out / f"input_{n:03d}.sgf", u)
        if exps is not None:
            rows.append(f"{n},{x_norm(u, exps.p, exps.q)!r}")
    if exps is not None:
        _write_csv(out / "norms.csv", "\n".join(rows) + "\n")
    write_json(out / "manifest.json", manifest)


def cmd_generate(cfg, out: Path, threads: int, figures: bool) -> int:
    seq, spec = load_sequence(cfg)
    exps = exponents_of(cfg, seq[0].domain.N) if (cfg.get("corpus") or {}).get("exponents") else None
    write_sequence(seq, out, {"corpus": spec, "K": len(seq)}, exps)
    if figures and seq[0].domain.N <= 2:
        pick = sorted({0, len(seq) // 2, len(seq) - 1})
        plotting.plot_functions([seq[i] for i in pick], [f"n={i + 1}" for i in pick], out / "members.png", "corpus members")
    print(f"wrote {len(seq)} members to {out}")
    return 0


def _run_decompose(cfg, seq, threads) -> Any:
    dc = DecompositionConfig.from_dict(dict(cfg.get("decompose") or {}, threads=threads))
    return decompose(seq, dc)


def _component_figure(dec, out: Path) -> None:
    if dec.length == 0 or dec.inputs[0].domain.N != 1:
        return
    n = dec.length - 1
    fs = [dec.inputs[n]] + [c[n] for c in dec.components]
    plotting.plot_functions(fs, ["u"] + [f"U{i}" for i in range(5)], out / "components_last.png", f"position {n + 1}")


def _report_properties(dec, out: Path, figures: bool) -> dict[str, Any]:
    rep = verify_properties(dec, dec.config.thresholds or None)
    rows = ["check,rule,tail,bound,pass"]
    for name, c in rep["checks"].items():
        tail = c.get("tail", max(c.get("component_sup", [0.0])))
        rows.append(f"{name},{c['rule']},{tail!r},{c['bound']!r},{c['pass']}")
    _write_csv(out / "properties.csv", "\n".join(rows) + "\n")
    write_json(out / "properties.json", rep)
    if figures:
        curves = {k: v["curve"] for k, v in rep["checks"].items() if k.startswith(("a_", "b_")) and np.any(np.asarray(v.get("curve", [])) > 0)}
        if curves:
            plotting.plot_curves(curves, out / "properties_ab.png", "checks (a), (b)")
        curves = {k: v["curve"] for k, v in rep["checks"].items() if k.startswith(("c_", "d_", "e_")) and np.any(np.asarray(v.get("curve", [])) > 0)}
        if curves:
            plotting.plot_curves(curves, out / "properties_cde.png", "checks (c), (d), (e)")
    return rep


def cmd_decompose(cfg, out: Path, threads: int, figures: bool) -> int:
    seq, spec = load_sequence(cfg)
    dec = _run_decompose(cfg, seq, threads)
    save_decomposition(dec, out)
    rep = _report_properties(dec, out, figures)
    save_decomposition(dec, out)  # manifest now carries the report
    if figures:
        _component_figure(dec, out)
    print(f"decomposition: length {dec.length}, reconstruction error {dec.reconstruction_error():.3g}, properties {'pass' if rep['pass'] else 'FAIL'}")
    return 0


def cmd_diagnose(cfg, out: Path, threads: int, figures: bool) -> int:
    seq, spec = load_sequence(cfg)
    out.mkdir(parents=True, exist_ok=True)
    dom = seq[0].domain
    d = cfg.get("diagnose") or {}
    exps = exponents_of(cfg, dom.N)
    r = float(d.get("r", exps.p))
    alpha = int(d.get("alpha", 1))
    half = 0.5 * dom.h * min(dom.shape)
    defaults = {
        "concentration": geometric_ladder(dom.cell_volume, 0.5 * dom.measure, 8),
        "tightness": geometric_ladder(max(2 * dom.h, half / 16), half, 8),
        "spreading": geometric_ladder(1e-4, 1.0, 8),
        "vanishing": [1.0],
    }
    summary: dict[str, Any] = {"r": r, "alpha": alpha, "moduli": {}}
    for kind, params in defaults.items():
        params = d.get(kind, params)
        curve = modulus_curve(kind, seq, r, alpha, params)
        _write_csv(out / f"modulus_{kind}.csv", curve.to_csv())
        summary["moduli"][kind] = {"params": curve.params.tolist(), "sup": curve.sup().tolist()}
        if figures:
            plotting.plot_modulus(curve, out / f"modulus_{kind}.png")
    summary["vanishing_check"] = vanishing_convergence_check(seq, float(d.get("vanishing_r", 2.0)))
    write_json(out / "diagnose.json", summary)
    print(f"diagnostics written to {out}")
    return 0


def cmd_verify_truncation(cfg, out: Path, threads: int, figures: bool, input_file: str | None = None) -> int:
    t = dict(cfg.get("truncation") or {})
    src = input_file or t.get("input")
    if src:
        u = read_sgf1(src)
    else:
        seq, _ = load_sequence(cfg)
        u = seq[int(t.get("member", 1)) - 1]
    fam = t.get("family", "above")
    levels = t.get("levels")
    if levels is None:
        levels = geometric_ladder(0.5, 64.0, 8)
    elif isinstance(levels, dict):
        levels = geometric_ladder(levels["first"], levels["last"], int(levels["count"]))
    p = float(t.get("p", ((cfg.get("corpus") or {}).get("exponents") or {}).get("p", 2.5)))
    rep = verify_truncation(u, fam, levels, p)
    out.mkdir(parents=True, exist_ok=True)
    keys = sorted({k for row in rep["rows"] for k in row} - {"level", "pass"})
    lines = [",".join(["level"] + keys + ["pass"])]
    for row in rep["rows"]:
        lines.append(",".join([repr(row["level"])] + [repr(row.get(k, "")) for k in keys] + [str(row["pass"])]))
    _write_csv(out / "truncation.csv", "\n".join(lines) + "\n")
    write_json(out / "truncation.json", rep)
    if figures and fam == "above":
        plotting.plot_curves({"bad measure": [r["bad_measure"] for r in rep["rows"]], "bound": [r["bad_bound"] for r in rep["rows"]]}, out / "bad_measure.png", "bad set against level index", "level index")
    print(f"truncation suite ({fam}): {'pass' if rep['pass'] else 'FAIL'}")
    return 0 if rep["pass"] else 1


def _residuals(cfg, dec, out: Path, threads: int, figures: bool) -> dict[str, Any]:
    dom = dec.inputs[0].domain if dec.length else None
    N = dom.N if dom is not None else 1
    exps = exponents_of(cfg, N)
    fam, dens = _family(cfg, exps), _density(cfg, exps)
    t0 = time.perf_counter()
    F = orthogonality_residual_F(dec, fam, threads=threads)
    E = orthogonality_residual_E(dec, dens, threads=threads)
    _write_csv(out / "residual_F.csv", F.to_csv())
    _write_csv(out / "residual_E.csv", E.to_csv())
    if figures and dec.length:
        plotting.plot_curves({"F upper": F.upper, "F lower": F.lower, "E L1": E.upper, "E scalar": E.lower}, out / "residuals.png", "orthogonality residuals")
    log.info("residuals in %.2fs", time.perf_counter() - t0)
    return {"F": {"lower": F.lower, "upper": F.upper, "meta": F.meta}, "E": {"lower": E.lower, "upper": E.upper}}


def cmd_orthogonality(cfg, out: Path, threads: int, figures: bool, input_dir: str | None = None) -> int:
    src = input_dir or (cfg.get("orthogonality") or {}).get("input")
    if src:
        dec = load_decomposition(src)
    else:
        seq, _ = load_sequence(cfg)
        dec = _run_decompose(cfg, seq, threads)
    out.mkdir(parents=True, exist_ok=True)
    res = _residuals(cfg, dec, out, threads, figures)
    write_json(out / "residuals.json", res)
    print(f"residuals written to {out}")
    return 0


def _ratio(curve: list[float], a: int, b: int) -> float:
    if len(curve) < max(a, b):
        return float("nan")
    first = curve[a - 1]
    return 0.0 if first == 0 and curve[b - 1] == 0 else curve[b - 1] / first if first > 0 else float("inf")


def run_pipeline(cfg: dict[str, Any], out: Path, threads: int = 1, figures: bool = True) -> dict[str, Any]:
    """Decompose, verify, compute residuals and write the report directory."""
    out.mkdir(parents=True, exist_ok=True)
    seq, spec = load_sequence(cfg)
    dec = _run_decompose(cfg, seq, threads)
    save_decomposition(dec, out / "decomposition")
    rep = _report_properties(dec, out, figures)
    save_decomposition(dec, out / "decomposition")
    res = _residuals(cfg, dec, out, threads, figures)
    if figures:
        _component_figure(dec, out)
    asserts = cfg.get("assert") or {}
    outcome: dict[str, bool] = {"reconstruction": dec.reconstruction_error() <= 1e-12}
    if asserts.get("properties", True):
        outcome["properties"] = bool(rep["pass"])
    rr = asserts.get("residual_ratio")
    ratios = {}
    if rr:
        a, b, mx = int(rr["from"]), int(rr["to"]), float(rr["max"])
        ratios = {"F_upper": _ratio(res["F"]["upper"], a, b), "E_L1": _ratio(res["E"]["upper"], a, b)}
        outcome["residual_ratio"] = all(r <= mx for r in ratios.values())
    summary = {
        "corpus": spec,
        "length": dec.length,
        "k": dec.k,
        "reconstruction_error": dec.reconstruction_error(),
        "properties_pass": rep["pass"],
        "groups": rep["groups"],
        "residual_ratios": ratios,
        "assertions": outcome,
        "pass": all(outcome.values()),
    }
    write_json(out / "summary.json", summary)
    write_json(out / "config.json", cfg)
    return summary


def cmd_pipeline(cfg, out: Path, threads: int, figures: bool) -> int:
    s = run_pipeline(cfg, out, threads, figures)
    for name, ok in s["assertions"].items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return 0 if s["pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sobodec", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--preset", help="named preset (composite, zero)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the corpus seed")
        p.add_argument("--threads", type=int, help="worker threads (default: $SOBODEC_THREADS or 1)")
        p.add_argument("--no-figures", action="store_true", help="skip PNG output")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("generate", help="generate a corpus"))
    common(sub.add_parser("decompose", help="decompose a corpus and check its properties"))
    common(sub.add_parser("diagnose", help="modulus curves of a corpus"))
    p = common(sub.add_parser("verify-truncation", help="truncation contract on one function"))
    p.add_argument("--input", help="SGF1 file (overrides truncation.input)")
    p.add_argument("--family", choices=["above", "below", "outer"])
    p.add_argument("--levels", help="comma-separated level ladder")
    p = common(sub.add_parser("orthogonality", help="orthogonality residuals of a decomposition"))
    p.add_argument("--input", help="decomposition directory (otherwise decompose the corpus)")
    common(sub.add_parser("pipeline", help="decompose, verify and compute residuals"))
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    threads = resolve_threads(args.threads)
    figures = not args.no_figures
    try:
        cfg = load_config(args)
        if args.command == "verify-truncation":
            if args.family or args.levels:
                t = cfg.setdefault("truncation", {})
                if args.family:
                    t["family"] = args.family
                if args.levels:
                    t["levels"] = [float(s) for s in args.levels.split(",")]
            return cmd_verify_truncation(cfg, out, threads, figures, args.input)
        if args.command == "orthogonality":
            return cmd_orthogonality(cfg, out, threads, figures, args.input)
        cmd = {"generate": cmd_generate, "decompose": cmd_decompose, "diagnose": cmd_diagnose, "pipeline": cmd_pipeline}[args.command]
        return cmd(cfg, out, threads, figures)
    except (ValueError, KeyError, OSError, FloatingPointError) as e:
        print(f"sobodec {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
