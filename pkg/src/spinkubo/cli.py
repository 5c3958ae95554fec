"""Command-line front end: ``spinkubo <subcommand> <config> [--output-dir D] [--threads T]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigInvalid, GapClosed, SpinKuboError
from .spectral import (
    BZGrid,
    band_spectrum,
    detect_gap,
    fermi_fibers,
    idempotency_residual,
    projection_kernel,
    shell_maxima,
)
from .torus_oracle import (
    build_torus,
    central_row,
    torus_fermi_projection,
    torus_sigma_K,
    torus_spectrum,
    torus_torque,
)
from .transport import (
    GK_decomposition,
    charge_conductivity,
    conductance_GK,
    in_quantum_units,
    invariants,
    sigma_K,
    torque_response,
    transport_report,
)

SUBCOMMANDS = ("bands", "gap", "projector", "sigma", "torque", "conductance", "chern",
               "decomposition", "oracle-check", "sweep")


# ---------------------------------------------------------------- output


class Output:
    """Collects artifacts and writes them in a fixed order."""

    def __init__(self, directory: Path, formats: tuple[str, ...]):
        self.directory = directory
        self.formats = formats
        self.files: dict[str, str] = {}

    def json(self, name: str, payload) -> None:
        if "json" in self.formats:
            self.files[name] = json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"

    def csv(self, name: str, header: list[str], rows: list) -> None:
        if "csv" in self.formats:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])
            self.files[name] = buf.getvalue()

    def flush(self) -> list[Path]:
        self.directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.files):
            path = self.directory / name
            path.write_text(self.files[name])
            written.append(path)
        return written


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else repr(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    return "" if x is None else x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


# ---------------------------------------------------------------- pipeline


def _solve(cfg: RunConfig, M: int | None = None):
    kernel = cfg.model.kernel()
    M = cfg.numerics.M if M is None else M
    grid = BZGrid(M)
    bands = band_spectrum(kernel, grid)
    filled = cfg.numerics.filled_bands or kernel.dim // 2
    if filled >= kernel.dim:
        raise ConfigInvalid(f"filled_bands must be below {kernel.dim}")
    gap = detect_gap(bands, filled, cfg.numerics.mu)
    fibers = fermi_fibers(kernel, grid, gap)
    R = cfg.numerics.R
    if R is not None and 2 * R >= M:
        R = (M - 1) // 2
    P = projection_kernel(fibers, R)
    return kernel, bands, gap, P


def cmd_bands(cfg: RunConfig, out: Output, threads: int) -> dict:
    kernel = cfg.model.kernel()
    M = cfg.numerics.M
    bands = band_spectrum(kernel, BZGrid(M))
    rows = []
    for idx, e in enumerate(bands):
        i, j = divmod(idx, M)
        rows.append([i, j, 2 * np.pi * i / M, 2 * np.pi * j / M, *e])
    out.csv("bands.csv", ["i1", "i2", "k1", "k2"] + [f"E{b}" for b in range(kernel.dim)], rows)
    summary = {"M": M, "n_bands": kernel.dim, "min": float(bands.min()), "max": float(bands.max())}
    out.json("bands.json", summary)
    return summary


def cmd_gap(cfg: RunConfig, out: Output, threads: int) -> dict:
    kernel = cfg.model.kernel()
    bands = band_spectrum(kernel, BZGrid(cfg.numerics.M))
    gap = detect_gap(bands, cfg.numerics.filled_bands or kernel.dim // 2, cfg.numerics.mu)
    payload = {"M": cfg.numerics.M, **gap.as_dict(), "parameters": cfg.model.snapshot()}
    out.json("gap.json", payload)
    return payload


def cmd_projector(cfg: RunConfig, out: Output, threads: int) -> dict:
    _, _, gap, P = _solve(cfg)
    payload = {"M": P.M, "R": P.R, "mu": gap.mu, "tail_bound": P.bound,
               "idempotency_residual": idempotency_residual(P),
               "fit": None if P.fit is None else P.fit.as_dict(),
               "parameters": cfg.model.snapshot()}
    out.json("projector.json", payload)
    rows = []
    for (n1, n2), blk in P.items():
        for a in range(P.dim):
            for b in range(P.dim):
                rows.append([n1, n2, a, b, blk[a, b].real, blk[a, b].imag])
    out.csv("projector_kernel.csv", ["n1", "n2", "row", "col", "re", "im"], rows)
    shells, maxima = shell_maxima(P)
    fit = P.fit
    out.csv("decay.csv", ["shell", "max_block_norm", "envelope"],
            [[int(s), float(m), None if fit is None else fit.C * math.exp(-s / fit.zeta)]
             for s, m in zip(shells, maxima)])
    return payload


def cmd_sigma(cfg: RunConfig, out: Output, threads: int) -> dict:
    _, _, gap, P = _solve(cfg)
    rep = transport_report(P, scheme=cfg.numerics.scheme, parameters=cfg.model.snapshot())
    payload = {"M": P.M, "R": P.R, "mu": gap.mu, **rep.as_dict()}
    out.json("sigma.json", payload)
    return payload


def cmd_torque(cfg: RunConfig, out: Output, threads: int) -> dict:
    _, _, gap, P = _solve(cfg)
    scheme = "analytic" if cfg.numerics.scheme == "kernel" else cfg.numerics.scheme
    t = torque_response(P, scheme)
    payload = {"M": P.M, "R": P.R, "scheme": scheme, "torque_tau": t.as_dict(),
               "parameters": cfg.model.snapshot()}
    out.json("torque.json", payload)
    return payload


def cmd_conductance(cfg: RunConfig, out: Output, threads: int) -> dict:
    _, _, gap, P = _solve(cfg)
    sw = cfg.switches
    res = conductance_GK(P, sw.lambda1, sw.lambda2, cfg.numerics.L_max,
                         cfg.numerics.transverse_cutoff, threads=threads)
    out.csv("conductance.csv", ["L", "GK_re", "GK_im", "tail_bound"], res.series.rows())
    payload = {"M": P.M, "R": P.R, "L_max": cfg.numerics.L_max, **res.as_dict(),
               "parameters": cfg.model.snapshot()}
    out.json("conductance.json", payload)
    return payload


def cmd_chern(cfg: RunConfig, out: Output, threads: int) -> dict:
    kernel, _, gap, P = _solve(cfg)
    rep = invariants(P, kernel)
    payload = {"M": P.M, **rep.as_dict(), "charge_conductivity": charge_conductivity(P).as_dict(),
               "parameters": cfg.model.snapshot()}
    out.json("chern.json", payload)
    return payload


def cmd_decomposition(cfg: RunConfig, out: Output, threads: int) -> dict:
    _, _, gap, P = _solve(cfg)
    l = cfg.numerics.l
    dec = GK_decomposition(P, l, cfg.switches.lambda2, cfg.numerics.L_max, threads=threads)
    dec2 = GK_decomposition(P, 2 * l, cfg.switches.lambda2, cfg.numerics.L_max, threads=threads)
    payload = {"M": P.M, "R": P.R, "decomposition": dec.as_dict(), "doubled": dec2.as_dict(),
               "sigma_K_grid": sigma_K(P, "grid").as_dict(), "parameters": cfg.model.snapshot()}
    out.json("decomposition.json", payload)
    out.csv("decomposition_Gb.csv", ["L", "Gb_re", "Gb_im", "tail_bound"], dec.G_b_series.rows())
    return payload


def cmd_oracle(cfg: RunConfig, out: Output, threads: int) -> dict:
    L = cfg.numerics.oracle_L
    kernel, bands, gap, P = _solve(cfg, M=L)
    if P.R != (L - 1) // 2:
        P = projection_kernel(P.fibers, (L - 1) // 2)
    system = build_torus(kernel, L)
    E = torus_spectrum(system)
    duality = float(np.abs(np.sort(E) - np.sort(bands.ravel())).max())
    Pd = torus_fermi_projection(system, gap.mu)
    proj = float(np.abs(central_row(system, Pd).blocks - P.blocks).max())
    s_t = torus_sigma_K(system, Pd)
    s_p = sigma_K(P, "grid")
    t_t = torus_torque(system, Pd)
    t_p = torque_response(P, "grid")
    rows = [
        ["spectrum", "", "", duality],
        ["projector_blocks", "", "", proj],
        ["sigma_K", s_p.value, s_t.real, abs(s_p.value - s_t.real)],
        ["torque_tau", t_p.value, t_t.real, abs(t_p.value - t_t.real)],
    ]
    out.csv("oracle.csv", ["quantity", "pipeline", "torus", "difference"], rows)
    payload = {"L": L, "spectral_duality": duality, "projector_difference": proj,
               "sigma_K_pipeline": s_p.value, "sigma_K_torus": s_t.real,
               "sigma_K_difference": abs(s_p.value - s_t.real),
               "torque_pipeline": t_p.value, "torque_torus": t_t.real,
               "parameters": cfg.model.snapshot()}
    out.json("oracle.json", payload)
    return payload


SWEEP_HEADER = ["gap", "status", "sigma_K", "sigma_K_bound", "sigma_K_e2h", "torque_tau",
                "torque_bound", "chern_total", "chern_total_residual", "chern_up", "chern_down"]


def _sweep_point(cfg: RunConfig) -> list:
    try:
        kernel, bands, gap, P = _solve(cfg)
    except GapClosed:
        kernel = cfg.model.kernel()
        bands = band_spectrum(kernel, BZGrid(cfg.numerics.M))
        filled = cfg.numerics.filled_bands or kernel.dim // 2
        width = float(bands[:, filled].min() - bands[:, filled - 1].max())
        return [width, "gap_closed"] + [None] * (len(SWEEP_HEADER) - 2)
    s = sigma_K(P, cfg.numerics.scheme if cfg.numerics.scheme != "kernel" else "analytic")
    t = torque_response(P, "analytic")
    inv = invariants(P, kernel)
    return [gap.width, "ok", s.value, s.bound, in_quantum_units(s.value), t.value, t.bound,
            inv.chern_total.value, inv.chern_total.residual,
            None if inv.chern_up is None else inv.chern_up.value,
            None if inv.chern_down is None else inv.chern_down.value]


def cmd_sweep(cfg: RunConfig, out: Output, threads: int) -> dict:
    sw = cfg.sweep
    if sw.parameter is None:
        raise ConfigInvalid("sweep needs a [sweep] section with 'parameter' and 'values'")
    points = []
    for v1 in sw.values:
        c1 = cfg.with_model_value(sw.parameter, v1)
        if sw.parameter2 is None:
            points.append(((v1,), c1))
        else:
            for v2 in sw.values2:
                points.append(((v1, v2), c1.with_model_value(sw.parameter2, v2)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda p: _sweep_point(p[1]), points))
    else:
        results = [_sweep_point(p[1]) for p in points]
    names = [sw.parameter] + ([sw.parameter2] if sw.parameter2 else [])
    rows = [list(vals) + res for (vals, _), res in zip(points, results)]
    out.csv("sweep.csv", names + SWEEP_HEADER, rows)
    payload = {"points": len(rows), "parameters": names, "M": cfg.numerics.M}
    out.json("sweep.json", payload)
    return payload


COMMANDS = {
    "bands": cmd_bands, "gap": cmd_gap, "projector": cmd_projector, "sigma": cmd_sigma,
    "torque": cmd_torque, "conductance": cmd_conductance, "chern": cmd_chern,
    "decomposition": cmd_decomposition, "oracle-check": cmd_oracle, "sweep": cmd_sweep,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinkubo",
                                description="Spin conductivity and conductance of periodic lattice models.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("config", help="path to the configuration file")
    p.add_argument("--output-dir", default=None, help="override [output] directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    return p


def _error_payload(exc: Exception, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    out_dir = None if args.output_dir is None else Path(args.output_dir)
    try:
        if args.threads < 1:
            raise ConfigInvalid("--threads must be at least 1")
        cfg = load_config(args.config)
        out_dir = Path(args.output_dir or cfg.output.directory)
        out = Output(out_dir, cfg.output.formats)
        summary = COMMANDS[args.subcommand](cfg, out, args.threads)
        out.flush()
    except SpinKuboError as exc:
        payload = _error_payload(exc, exc.exit_code)
    except ValueError as exc:
        payload = _error_payload(exc, ConfigInvalid.exit_code)
    else:
        print(json.dumps(_clean({"subcommand": args.subcommand, "status": "ok",
                                 "output_dir": str(out_dir), "summary": summary}), sort_keys=True))
        return 0
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return payload["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
