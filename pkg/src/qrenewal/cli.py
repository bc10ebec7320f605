"""Scenario ingestion, method orchestration and curve/report emission.

A scenario file fixes a qubit renewal process (decay rates of the
reference semigroup, a composed jump channel, base and modified waiting
times as rate ratios times a scale mu, the factor ordering), an initial
Bloch vector, a time grid in units of 1/mu, the propagation methods to
run, and Monte Carlo settings.  `run` writes one CSV row per grid time
with P_e and diagnostics per method, `verify` runs the identity suite and
writes a PASS/FAIL report, `compare` cross-checks the methods against
each other within their statistical and truncation tolerances.

Scenario files are flat key = value text with [sections] (configparser
syntax); a JSON file with the same section/key layout is accepted as an
alternate.  Four scenarios matching the worked two-level examples ship
with the package (fig3a, fig3b, fig4a, fig4b).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from . import laplace as lpmod
from . import legitimacy as legit
from . import superop as somod
from . import trajectory as tjmod
from . import wtd as wtdmod
from .errors import ContourNonconvergence, ParseError, ValidationError
from .laplace import Ordering, RenewalSpec

_CHANNEL_BUILDERS = {
    "amplitude_damping": lambda params: somod.amplitude_damping(float(params.get("gamma", 1.0))),
    "pauli_x": lambda params: somod.pauli_x_channel(),
    "dephasing": lambda params: somod.dephasing_channel(float(params.get("p", 1.0))),
}

_KNOWN_METHODS = ("laplace", "montecarlo", "dyson")


@dataclass(frozen=True)
class Scenario:
    """Validated scenario parameters."""

    name: str
    dim: int
    lambdas: Tuple[float, float, float]
    channels: Tuple[Tuple[str, dict], ...]
    rate_scale: float
    base_ratio: float
    modified_ratios: Tuple[float, ...]
    ordering: str
    initial_bloch: Tuple[float, float, float]
    t_min: float
    t_max: float
    n_points: int
    methods: Tuple[str, ...]
    mc_trajectories: int
    mc_seed: int

    def time_grid(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.n_points)

    def initial_state(self) -> somod.DensityMatrix:
        return somod.DensityMatrix.from_bloch(self.initial_bloch)

    def jump_channel(self) -> somod.SuperOp:
        channel = somod.identity_superop(self.dim)
        for name, params in self.channels:  # listed order = temporal order
            channel = somod.compose(_CHANNEL_BUILDERS[name](params), channel)
        return channel

    def wtd_sequence(self) -> wtdmod.ModifiedWtdSequence:
        base = wtdmod.WaitingTime.exponential(self.base_ratio * self.rate_scale)
        mods = tuple(
            wtdmod.WaitingTime.exponential(r * self.rate_scale) for r in self.modified_ratios
        )
        return wtdmod.ModifiedWtdSequence(base=base, modified=mods)

    def to_renewal_spec(self) -> RenewalSpec:
        gen = somod.pauli_decay_generator(*self.lambdas)
        ordering = Ordering.FORWARD if self.ordering == "forward" else Ordering.INVERSE
        return RenewalSpec.build(gen, self.jump_channel(), self.wtd_sequence(), ordering=ordering)


def bundled_scenario_path(name: str) -> Path:
    path = resources.files("qrenewal") / "scenarios" / f"{name}.cfg"
    return Path(str(path))


def _read_sections(path: Path) -> dict:
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from exc
        return {str(k): {str(a): str(b) for a, b in v.items()} for k, v in data.items()}
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _require(sections: dict, section: str, key: str, path) -> str:
    try:
        return sections[section][key]
    except KeyError:
        raise ParseError(f"{path}: missing {section}.{key}") from None


def _floats(text: str) -> Tuple[float, ...]:
    parts = text.replace(",", " ").split()
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ParseError(f"cannot parse number list {text!r}: {exc}") from exc


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file; raises ParseError/ValidationError."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"scenario file {path} does not exist")
    sections = _read_sections(path)

    def get(section, key, default=None):
        value = sections.get(section, {}).get(key)
        return value if value is not None else default

    try:
        name = get("scenario", "name", path.stem)
        dim = int(get("scenario", "dim", "2"))
        lam3 = float(_require(sections, "generator", "lambda3", path))
        lam1 = float(get("generator", "lambda1", lam3))
        lam2 = float(get("generator", "lambda2", lam3))
        channel_names = [c.strip() for c in get("jumps", "channels", "").split(",") if c.strip()]
        channels = []
        for cname in channel_names:
            if cname not in _CHANNEL_BUILDERS:
                raise ValidationError(f"unknown channel {cname!r}; known: {sorted(_CHANNEL_BUILDERS)}")
            params = {}
            for key, value in sections.get("jumps", {}).items():
                if key.startswith(cname + "."):
                    params[key.split(".", 1)[1]] = value
            channels.append((cname, params))
        rate_scale = float(get("wtd", "rate_scale", "1.0"))
        base_ratio = float(get("wtd", "base_ratio", "1.0"))
        modified = _floats(get("wtd", "modified_ratios", ""))
        ordering = get("process", "ordering", "forward").strip().lower()
        bloch = _floats(get("initial_state", "bloch", "0 0 1"))
        t_min = float(get("grid", "t_min", "0.0"))
        t_max = float(_require(sections, "grid", "t_max", path))
        n_points = int(get("grid", "points", "200"))
        methods = tuple(
            m.strip() for m in get("methods", "enabled", "laplace").split(",") if m.strip()
        )
        mc_n = int(get("montecarlo", "trajectories", "100000"))
        mc_seed = int(get("montecarlo", "seed", "2024"))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc

    if dim != 2:
        raise ValidationError("scenario generator parametrization is qubit-only (dim = 2)")
    if min(lam1, lam2, lam3) < 0:
        raise ValidationError(f"decay rates must be nonnegative, got {(lam1, lam2, lam3)}")
    if rate_scale <= 0 or base_ratio <= 0:
        raise ValidationError("WTD rate scale and base ratio must be positive")
    if any(r <= 0 for r in modified):
        raise ValidationError(f"modified WTD ratios must be positive, got {modified}")
    if ordering not in ("forward", "inverse"):
        raise ValidationError(f"ordering must be forward or inverse, got {ordering!r}")
    if len(bloch) != 3 or np.linalg.norm(bloch) > 1 + 1e-12:
        raise ValidationError(f"initial Bloch vector must have 3 components inside the ball: {bloch}")
    if not (0 <= t_min < t_max):
        raise ValidationError(f"need 0 <= t_min < t_max, got ({t_min}, {t_max})")
    if n_points < 2:
        raise ValidationError("grid needs at least 2 points")
    unknown = [m for m in methods if m not in _KNOWN_METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}; known: {_KNOWN_METHODS}")
    if mc_n < 1:
        raise ValidationError("montecarlo.trajectories must be >= 1")

    scenario = Scenario(
        name=name,
        dim=dim,
        lambdas=(lam1, lam2, lam3),
        channels=tuple(channels),
        rate_scale=rate_scale,
        base_ratio=base_ratio,
        modified_ratios=modified,
        ordering=ordering,
        initial_bloch=tuple(bloch),
        t_min=t_min,
        t_max=t_max,
        n_points=n_points,
        methods=methods,
        mc_trajectories=mc_n,
        mc_seed=mc_seed,
    )
    scenario.to_renewal_spec()  # surfaces any channel/generator invariant violation
    return scenario


@dataclass
class CurveTable:
    """Column-oriented curve data; one row per grid time."""

    columns: dict

    def header(self) -> list:
        return list(self.columns)

    def write_csv(self, path) -> None:
        """All-or-nothing CSV write: 17 significant digits, LF endings."""
        path = Path(path)
        names = self.header()
        arrays = [np.asarray(self.columns[n]) for n in names]
        lines = [",".join(names)]
        for i in range(len(arrays[0])):
            lines.append(",".join(f"{float(a[i]):.17g}" for a in arrays))
        payload = "\n".join(lines) + "\n"
        fd, tmp = tempfile.mkstemp(dir=str(path.parent or Path(".")), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _pe(rho: np.ndarray) -> float:
    return float(np.real(rho[0, 0]))


def _laplace_curve(spec, rho0, grid, node_count=32):
    family = lpmod.map_family(spec, "auto")
    pe = np.empty(len(grid))
    defect = np.empty(len(grid))
    min_choi = np.empty(len(grid))
    for i, t in enumerate(grid):
        mp = (
            somod.identity_superop(spec.dim)
            if t == 0
            else lpmod.invert_laplace(family, float(t), node_count=node_count)
        )
        report = somod.certify_cpt(mp, tol=1e-6)
        pe[i] = _pe(somod.apply(mp, rho0))
        defect[i] = report.trace_defect
        min_choi[i] = report.min_choi_eigenvalue
    return pe, defect, min_choi


def run(
    scenario: Scenario,
    output_path=None,
    methods: Optional[Sequence[str]] = None,
    grid: Optional[np.ndarray] = None,
    trajectories: Optional[int] = None,
    seed: Optional[int] = None,
    node_count: int = 32,
) -> CurveTable:
    """Propagate the scenario by the selected methods and emit the curve table."""
    methods = tuple(methods) if methods else scenario.methods
    unknown = [m for m in methods if m not in _KNOWN_METHODS]
    if unknown:
        raise ValidationError(f"unknown methods {unknown}")
    grid = scenario.time_grid() if grid is None else np.asarray(grid, dtype=float)
    spec = scenario.to_renewal_spec()
    rho0 = scenario.initial_state()
    columns = {"t": grid}

    if "laplace" in methods:
        pe, defect, min_choi = _laplace_curve(spec, rho0, grid, node_count)
        columns["pe_laplace"] = pe
        columns["trace_defect_laplace"] = defect
        columns["min_choi_laplace"] = min_choi
        if spec.wtds.k > 0:
            ref = spec.with_wtds(wtdmod.ModifiedWtdSequence(base=spec.wtds.base))
            columns["pe_reference"] = _laplace_curve(ref, rho0, grid, node_count)[0]
            alt = spec.with_ordering(
                Ordering.INVERSE if spec.ordering is Ordering.FORWARD else Ordering.FORWARD
            )
            columns["pe_alt_ordering"] = _laplace_curve(alt, rho0, grid, node_count)[0]

    if "montecarlo" in methods:
        n = trajectories if trajectories is not None else scenario.mc_trajectories
        mc_seed = seed if seed is not None else scenario.mc_seed
        positive = grid[grid > 0]
        res = tjmod.monte_carlo(spec, rho0, positive, n=n, seed=mc_seed)
        pad = len(grid) - len(positive)
        pe0 = [_pe(rho0.entries)] * pad
        columns["pe_montecarlo"] = np.concatenate([pe0, res.pe])
        columns["stderr_montecarlo"] = np.concatenate([[0.0] * pad, res.pe_stderr])
        columns["trace_defect_montecarlo"] = np.concatenate([[0.0] * pad, res.trace_defect])

    if "dyson" in methods:
        pe = np.empty(len(grid))
        bound = np.empty(len(grid))
        defect = np.empty(len(grid))
        for i, t in enumerate(grid):
            state, b = tjmod.dyson_series(spec, rho0, float(t))
            pe[i] = _pe(state)
            bound[i] = b
            defect[i] = abs(np.real(np.trace(state)) - 1.0)
        columns["pe_dyson"] = pe
        columns["bound_dyson"] = bound
        columns["trace_defect_dyson"] = defect

    table = CurveTable(columns)
    eps = 1e-6
    if "stderr_montecarlo" in columns:
        eps = max(eps, 3.0 * float(np.max(columns["stderr_montecarlo"])))
    for name in table.header():
        if name.startswith("pe_"):
            values = np.asarray(columns[name])
            if np.any(values < -eps) or np.any(values > 1 + eps):
                raise ValidationError(f"column {name} leaves [0, 1] beyond tolerance {eps:.2e}")
    if output_path is not None:
        table.write_csv(output_path)
    return table


def verify(scenario: Scenario, output_path=None, node_count: int = 32) -> Tuple[bool, str]:
    """Run the identity suite on the scenario; returns (passed, report text)."""
    spec = scenario.to_renewal_spec()
    reports = legit.run_default_suite(spec, t_max=scenario.t_max, node_count=node_count)
    lines = [f"scenario {scenario.name} ordering={scenario.ordering}"]
    lines += [r.summary_line() for r in reports]
    passed = all(r.passed for r in reports)
    lines.append(f"overall {'PASS' if passed else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    if output_path is not None:
        Path(output_path).write_text(text)
    return passed, text


def compare(
    scenario: Scenario,
    output_path=None,
    methods: Sequence[str] = ("laplace", "montecarlo", "dyson"),
    grid_points: int = 21,
    trajectories: Optional[int] = None,
    seed: Optional[int] = None,
    tolerance: float = 1e-5,
) -> Tuple[bool, str]:
    """Cross-method agreement on P_e within max(3 sigma, series bound, tolerance)."""
    grid = np.linspace(scenario.t_min, scenario.t_max, grid_points)
    table = run(
        scenario,
        methods=methods,
        grid=grid,
        trajectories=trajectories,
        seed=seed,
    )
    cols = table.columns
    allowed = np.full(len(grid), tolerance)
    if "stderr_montecarlo" in cols:
        allowed = np.maximum(allowed, 3.0 * np.asarray(cols["stderr_montecarlo"]))
    if "bound_dyson" in cols:
        allowed = np.maximum(allowed, np.asarray(cols["bound_dyson"]))
    pe_cols = [c for c in ("pe_laplace", "pe_montecarlo", "pe_dyson") if c in cols]
    lines = [f"scenario {scenario.name}: comparing {', '.join(pe_cols)}"]
    passed = True
    for i, a in enumerate(pe_cols):
        for b in pe_cols[i + 1 :]:
            gap = np.abs(np.asarray(cols[a]) - np.asarray(cols[b]))
            bad = gap > allowed
            ok = not np.any(bad)
            passed = passed and ok
            worst = int(np.argmax(gap - allowed))
            lines.append(
                f"{a} vs {b}: max|diff|={gap.max():.3e} allowed[{worst}]={allowed[worst]:.3e} "
                f"{'PASS' if ok else 'FAIL'}"
            )
    lines.append(f"overall {'PASS' if passed else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    if output_path is not None:
        Path(output_path).write_text(text)
    return passed, text


def _resolve_config(value: str) -> Path:
    path = Path(value)
    if path.exists():
        return path
    bundled = bundled_scenario_path(value)
    if bundled.exists():
        return bundled
    raise ParseError(f"no scenario file {value!r} (not a path, not a bundled scenario)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrenewal",
        description="Quantum renewal process curves, verification and method comparison",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, help_text in (
        ("run", "propagate a scenario and write the curve CSV"),
        ("verify", "run the identity/CPT suite and write a PASS/FAIL report"),
        ("compare", "cross-check the propagation methods against each other"),
    ):
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("--config", required=True, help="scenario file path or bundled name (fig3a..fig4b)")
        p.add_argument("--output", help="output file (CSV for run, text otherwise)")
        p.add_argument("--method", help="comma-separated subset of laplace,montecarlo,dyson")
        p.add_argument("--trajectories", type=int, help="Monte Carlo trajectory count override")
        p.add_argument("--seed", type=int, help="Monte Carlo seed override")
        p.add_argument("--grid", help="tmin:tmax:n override for the time grid")
        p.add_argument("--tolerance", type=float, default=1e-5, help="comparison floor tolerance")
        p.add_argument("--nodes", type=int, default=32, help="Talbot node count")
    return parser


def _parse_grid(text: str) -> np.ndarray:
    try:
        t_min, t_max, n = text.split(":")
        return np.linspace(float(t_min), float(t_max), int(n))
    except ValueError as exc:
        raise ParseError(f"grid must be tmin:tmax:n, got {text!r}") from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = parse_scenario(_resolve_config(args.config))
        methods = tuple(m.strip() for m in args.method.split(",")) if args.method else None
        grid = _parse_grid(args.grid) if args.grid else None
        if args.command == "run":
            output = args.output or f"{scenario.name}_curves.csv"
            run(
                scenario,
                output_path=output,
                methods=methods,
                grid=grid,
                trajectories=args.trajectories,
                seed=args.seed,
                node_count=args.nodes,
            )
            print(f"wrote {output}")
            return 0
        if args.command == "verify":
            output = args.output or f"{scenario.name}_verify.txt"
            passed, text = verify(scenario, output_path=output, node_count=args.nodes)
            print(text, end="")
            return 0 if passed else 1
        output = args.output or f"{scenario.name}_compare.txt"
        passed, text = compare(
            scenario,
            output_path=output,
            methods=methods or ("laplace", "montecarlo", "dyson"),
            trajectories=args.trajectories,
            seed=args.seed,
            tolerance=args.tolerance,
        )
        print(text, end="")
        return 0 if passed else 1
    except (ParseError, ValidationError, ContourNonconvergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
