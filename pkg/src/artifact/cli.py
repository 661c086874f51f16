"""Command-line entry point.

Every subcommand writes its outputs and a ``manifest.json`` into the run
directory (``--run-dir``, else ``$ARTIFACT_RUN_DIR``, else ``./artifact-run``).
``--manifest FILE`` replays the command recorded in an earlier manifest.

Exit codes: 0 success, 1 acceptance failure, 2 usage error, 3 scenario
error, 4 numerical failure.  Errors print one line to stderr of the form
``artifact-error: kind=<kind> message=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import acceptance
from .birman_schwinger import (BRANCH_EXCLUSION, DIP_THRESHOLD, FactorizationError, IllConditioned, branch_points,
                               continuous_projection, exceptional_scan, split_potential)
from .grid import Grid3, GridFunction, Scenario, ScenarioError, format_float, load_scenario, read_raw_samples
from .lorentz import atomic_decompose, modulus_lorentz_norm
from .propagator import HamiltonianSpec, NumericalFailure, TimeDependentFrame, duhamel_solve
from .strichartz import PowerIterationError, strichartz_quotients
from .wiener import (CoverTooCoarse, GuardBandViolation, SingularSymbol, TimeKernel, causality_check, invert,
                     invert_by_localization, neumann_inverse)

RUN_DIR_ENV = "ARTIFACT_RUN_DIR"
DEFAULT_RUN_DIR = "artifact-run"
BUNDLED = ("well_c4", "free", "c1", "matrix")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SCENARIO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
NUMERICAL_ERRORS = (NumericalFailure, IllConditioned, FactorizationError, SingularSymbol, CoverTooCoarse,
                    GuardBandViolation, PowerIterationError, np.linalg.LinAlgError, ArithmeticError)


@dataclass
class RunManifest:
    command: str
    argv: list
    scenario: str | None = None
    overrides: dict = field(default_factory=dict)
    seed: int = acceptance.DEFAULT_SEED
    artifacts: list = field(default_factory=list)
    wall_time: float = 0.0
    version: str = __version__

    def write(self, run_dir: Path) -> None:
        (run_dir / "manifest.json").write_text(dumps(asdict(self)))

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# deterministic output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_jsonable(float(x.real)), _jsonable(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


class Outputs:
    def __init__(self, run_dir: Path):
        self.run_dir = run_dir
        self.names: list = []

    def write(self, name: str, text: str) -> None:
        path = self.run_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
        self.names.append(name)


# ---------------------------------------------------------------------------
# argument helpers


def resolve_scenario(name: str) -> tuple[Scenario, str]:
    p = Path(name)
    if p.exists():
        return load_scenario(p), str(p)
    stem = p.name[:-4] if p.name.endswith(".scn") else p.name
    if stem in BUNDLED and p.parent == Path("."):
        ref = resources.files("artifact") / "scenarios" / f"{stem}.scn"
        with resources.as_file(ref) as path:
            return load_scenario(path), f"bundled:{stem}"
    raise ScenarioError(f"scenario {name!r} is neither a file nor one of the bundled {', '.join(BUNDLED)}")


def parse_number(text: str) -> float:
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def parse_window(text: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"window must be a:b or re_a:re_b:im_a:im_b, got {text!r}") from exc
    if len(vals) not in (2, 4):
        raise argparse.ArgumentTypeError(f"window must be a:b or re_a:re_b:im_a:im_b, got {text!r}")
    return vals


def parse_center(text: str) -> tuple:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("center must be x,y,z")
    return vals


def clip_window(window: tuple, h: HamiltonianSpec) -> tuple[tuple, list]:
    """Move real-window endpoints that sit inside a branch-point neighbourhood to its edge."""
    if len(window) != 2:
        return window, []
    a, b = window
    notes = []
    for bp in branch_points(h):
        if abs(b - bp) <= BRANCH_EXCLUSION:
            notes.append(f"upper endpoint {format_float(b)} moved to {format_float(bp - BRANCH_EXCLUSION)}")
            b = bp - BRANCH_EXCLUSION
        if abs(a - bp) <= BRANCH_EXCLUSION:
            notes.append(f"lower endpoint {format_float(a)} moved to {format_float(bp + BRANCH_EXCLUSION)}")
            a = bp + BRANCH_EXCLUSION
    return (a, b), notes


def _preprocess(argv: list) -> list:
    """Glue ``--window -3:0`` into ``--window=-3:0`` so argparse keeps the negative value."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--window" and i + 1 < len(argv):
            out.append(f"--window={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"artifact-error: kind=usage message={message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="artifact", description="Dispersive-estimate numerics on a periodic 3D grid.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    p.add_argument("--run-dir", default=None, help=f"output directory (default ${RUN_DIR_ENV} or ./{DEFAULT_RUN_DIR})")
    p.add_argument("--manifest", default=None, help="replay the command recorded in a manifest")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    d = sub.add_parser("decompose", help="atomic decomposition table of a function")
    d.add_argument("--p", type=parse_number, default=1.2)
    src = d.add_mutually_exclusive_group()
    src.add_argument("--raw", help="raw sample file")
    src.add_argument("--gaussian", type=parse_number, default=None, help="Gaussian width (default 1)")
    d.add_argument("--n", type=int, default=32)
    d.add_argument("--L", type=parse_number, default=8.0)

    pr = sub.add_parser("propagate", help="norms along the perturbed evolution of a Gaussian")
    pr.add_argument("scenario")
    pr.add_argument("--T", type=parse_number, default=2.0)
    pr.add_argument("--dt", type=parse_number, default=1 / 64)
    pr.add_argument("--record-every", type=int, default=8)
    pr.add_argument("--width", type=parse_number, default=1.0)
    pr.add_argument("--center", type=parse_center, default=(0.0, 0.0, 0.0))

    for name in ("scan", "projections"):
        s = sub.add_parser(name, help="sigma_min scan" if name == "scan" else "Riesz projections at detected dips")
        s.add_argument("scenario")
        s.add_argument("--window", type=parse_window, default=None)
        s.add_argument("--resolution", type=str, default=None, help="N, or NxM for a complex rectangle")
        s.add_argument("--threshold", type=parse_number, default=None)

    st = sub.add_parser("strichartz", help="Strichartz quotients for the default data family")
    st.add_argument("scenario")
    st.add_argument("--T", type=parse_number, default=8.0)
    st.add_argument("--dt", type=parse_number, default=1 / 64)
    st.add_argument("--amplitude", type=parse_number, default=None, help="scale of the scenario frame")

    sub.add_parser("wiener-demo", help="example inversions and causality table")

    a = sub.add_parser("accept", help="acceptance suite")
    a.add_argument("--quick", action="store_true")
    return p


# ---------------------------------------------------------------------------
# subcommands


def _scan_settings(args, scn: Scenario, h: HamiltonianSpec):
    window = args.window or scn.scan.get("window") or acceptance.SCAN_WINDOW
    res = args.resolution
    if res is None:
        resolution = scn.scan.get("resolution", 60)
    elif "x" in res:
        resolution = tuple(int(v) for v in res.split("x"))
    else:
        resolution = int(res)
    threshold = args.threshold if args.threshold is not None else scn.scan.get("threshold", DIP_THRESHOLD)
    window, notes = clip_window(tuple(window), h)
    return window, resolution, threshold, notes


def _scan_rows(sc) -> list:
    return [(complex(l).real, complex(l).imag, s) for l, s in zip(sc.lams.ravel(), sc.sigma.ravel())]


def cmd_decompose(args, out: Outputs, man: RunManifest):
    if args.raw:
        f = read_raw_samples(args.raw)
        man.scenario = args.raw
    else:
        g = Grid3(args.n, args.L)
        w = args.gaussian or 1.0
        f = GridFunction(g, np.exp(-g.radius() ** 2 / (2 * w * w))[None].astype(np.complex128))
    d = atomic_decompose(f, args.p)
    rows = [(e.level, e.alpha, e.measure, e.height) for e in d.entries]
    out.write("decompose.csv", csv_text(["l", "alpha", "support_measure", "height"], rows))
    return EXIT_OK


def cmd_propagate(args, out: Outputs, man: RunManifest):
    scn, man.scenario = resolve_scenario(args.scenario)
    g = scn.grid
    c = scn.components
    vals = np.zeros((c,) + g.shape, dtype=np.complex128)
    vals[0] = np.exp(-g.radius(args.center) ** 2 / (2 * args.width**2))
    cv = g.cell_volume
    obs = {
        "L2": lambda t, z: float(np.sqrt(np.sum(z.modulus() ** 2) * cv)),
        "Linf": lambda t, z: float(np.max(z.modulus())),
        "L6inf": lambda t, z: modulus_lorentz_norm(z.modulus(), cv, 6.0, math.inf),
    }
    tr = duhamel_solve(scn, GridFunction(g, vals), None, args.T, args.dt, record_every=args.record_every,
                       keep_states=False, observers=obs)
    rows = [(t, tr.observables["L2"][i], tr.observables["Linf"][i], tr.observables["L6inf"][i], tr.boundary_mass[i])
            for i, t in enumerate(tr.times)]
    out.write("propagate.csv", csv_text(["t", "L2", "Linf", "L6inf", "boundary_mass"], rows))
    return EXIT_OK


def cmd_scan(args, out: Outputs, man: RunManifest):
    scn, man.scenario = resolve_scenario(args.scenario)
    h = HamiltonianSpec.of(scn)
    window, resolution, threshold, notes = _scan_settings(args, scn, h)
    man.overrides.update({"window": list(window), "resolution": resolution, "threshold": threshold, "notes": notes})
    for n in notes:
        print(f"note: {n}", file=sys.stderr)
    sc = exceptional_scan(split_potential(scn), window, resolution, threshold=threshold)
    out.write("scan.csv", csv_text(["lam_re", "lam_im", "sigma_min"], _scan_rows(sc)))
    return EXIT_OK


def cmd_projections(args, out: Outputs, man: RunManifest):
    scn, man.scenario = resolve_scenario(args.scenario)
    h = HamiltonianSpec.of(scn)
    window, resolution, threshold, notes = _scan_settings(args, scn, h)
    man.overrides.update({"window": list(window), "resolution": resolution, "threshold": threshold, "notes": notes})
    pf = split_potential(scn)
    sc = exceptional_scan(pf, window, resolution, threshold=threshold)
    proj = continuous_projection(pf, sc)
    report = {
        "eigenvalues": proj.eigenvalues, "ranks": proj.ranks, "rank_by_svd": proj.rank_by_svd,
        "traces": proj.traces, "idempotency": proj.idempotency, "pc_idempotency": proj.pc_idempotency(),
        "commutator": proj.commutator, "nilpotent_ratio": proj.nilpotent_ratio,
        "support_points": pf.count, "notes": notes,
    }
    out.write("projections.json", dumps(report))
    return EXIT_OK


def cmd_strichartz(args, out: Outputs, man: RunManifest):
    scn, man.scenario = resolve_scenario(args.scenario)
    h = HamiltonianSpec.of(scn)
    pf = split_potential(scn)
    sc = exceptional_scan(pf, clip_window(scn.scan.get("window", acceptance.SCAN_WINDOW), h)[0],
                          scn.scan.get("resolution", 60))
    proj = continuous_projection(pf, sc)
    frame = None
    if args.amplitude is not None:
        if scn.frame is None:
            raise ScenarioError("--amplitude needs a [frame] section in the scenario")
        frame = TimeDependentFrame.from_spec(scn.frame.scaled(args.amplitude), args.T, args.dt)
    data = [(z, None) for z in acceptance.strichartz_data(scn.grid)]
    if scn.components == 2:
        data = [(GridFunction(scn.grid, np.concatenate([z.values, np.zeros_like(z.values)])), None) for z, _ in data]
    rep = strichartz_quotients(scn, proj, data, args.T, args.dt, frame=frame, unprojected=frame is None)
    out.write("strichartz.json", dumps(rep.to_dict()))
    rows = [(e.datum, e.horizon, e.projected, e.name, e.numerator, e.denominator, e.quotient) for e in rep.entries]
    out.write("strichartz.csv", csv_text(["datum", "horizon", "projected", "name", "numerator", "denominator",
                                          "quotient"], rows))
    return EXIT_OK


def wiener_demo(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    two = TimeKernel(np.array([[[0.0]], [[0.5]]]), 1.0, np.eye(1))
    inv_two = invert(two)
    rows = []
    for d, m in ((1, 64), (2, 32), (4, 16)):
        a = acceptance.smooth_random_kernel(rng, m, d, 0.5)
        inv = invert(a)
        rows.append({"d": d, "m": m, "mass_norm": a.mass_norm(), "inverse_mass_norm": inv.mass_norm(),
                     "localization_agreement": inv.max_block_difference(invert_by_localization(a, 8))})
    cx, zero = acceptance.counterexample()
    crep = causality_check(cx)
    tau = 0.25
    k = np.arange(256)
    causal = TimeKernel(np.where((k >= 1) & (k < 128), 0.3 * np.exp(-k * tau), 0.0)[:, None, None], tau, np.eye(1))
    rep = causality_check(causal)
    return {
        "two_point": {"blocks": [0.0, 0.5], "tau": 1.0, "inverse_blocks": inv_two.blocks.ravel().real,
                      "expected": [1 / 3, -2 / 3]},
        "random_kernels": rows,
        "causal_kernel": {"is_causal": rep.is_causal, "inverse_causal": rep.inverse_causal,
                          "neumann_agreement": neumann_inverse(causal).max_block_difference(invert(causal)),
                          "lower_half_plane_min": rep.lower_half_plane_min},
        "counterexample": {"is_causal": crep.is_causal, "inverse_causal": crep.inverse_causal,
                           "offending": crep.offending, "predicted_zero": zero,
                           "inverse_anticausal_mass": crep.inverse_anticausal_mass},
    }


def cmd_wiener(args, out: Outputs, man: RunManifest):
    out.write("wiener.json", dumps(wiener_demo(args.seed)))
    return EXIT_OK


def _quick_scans(out: Outputs):
    for name in BUNDLED:
        scn, _ = resolve_scenario(name)
        h = HamiltonianSpec.of(scn)
        window, _ = clip_window(scn.scan["window"], h)
        sc = exceptional_scan(split_potential(scn), window, 30)
        out.write(f"scan_{name}.csv", csv_text(["lam_re", "lam_im", "sigma_min"], _scan_rows(sc)))


def cmd_accept(args, out: Outputs, man: RunManifest):
    numbers = acceptance.QUICK if args.quick else tuple(acceptance.CRITERIA)
    results = []
    for n in numbers:
        r = acceptance.run([n], args.seed)[0]
        print(r.line(), flush=True)
        results.append(r)
    if args.quick:
        _quick_scans(out)
    out.write("acceptance.json", dumps({"quick": args.quick, "seed": args.seed,
                                        "results": [r.to_dict() for r in results]}))
    rows = [(r.number, r.title, r.passed, k, v) for r in results for k, v in sorted(r.metrics.items())]
    out.write("acceptance.csv", csv_text(["criterion", "title", "passed", "metric", "value"], rows))
    man.overrides["runtimes"] = {str(r.number): r.runtime for r in results}
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {"decompose": cmd_decompose, "propagate": cmd_propagate, "scan": cmd_scan, "projections": cmd_projections,
            "strichartz": cmd_strichartz, "wiener-demo": cmd_wiener, "accept": cmd_accept}


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"artifact-error: kind={kind} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_preprocess(argv))
        if args.manifest:
            current_dir = args.run_dir
            recorded = RunManifest.read(args.manifest)
            argv = list(recorded.argv)
            args = parser.parse_args(_preprocess(argv))
            args.manifest = None
            args.run_dir = current_dir or args.run_dir
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError, TypeError) as exc:
        return _fail("usage", exc, EXIT_USAGE)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("artifact-error: kind=usage message=missing subcommand", file=sys.stderr)
        return EXIT_USAGE
    run_dir = Path(args.run_dir or os.environ.get(RUN_DIR_ENV) or DEFAULT_RUN_DIR)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = Outputs(run_dir)
    man = RunManifest(args.command, argv, seed=args.seed)
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, out, man)
    except ScenarioError as exc:
        return _fail("scenario", exc, EXIT_SCENARIO)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", exc, EXIT_NUMERICAL)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        return _fail("usage", exc, EXIT_USAGE)
    man.artifacts = list(out.names)
    man.wall_time = time.perf_counter() - t0
    man.write(run_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
