"""Config-driven runner for the structure scenarios (symplectic, kaehler, special-complex).

Config documents are INI files::

    [scenario]
    name = symplectic          ; symplectic | kaehler | special-complex | custom
    bundle = trivial           ; trivial | pure-gauge:<seed> | random-orthogonal:<seed>:<strength> | file:<path>
    seed = 0
    init = closed              ; closed | perturbed-closed:<amp> | random:<amp> | file:<path>
    outputs = out
    k = 2                      ; custom only
    rank = 1                   ; custom only

    [grid]
    n = 4
    sizes = 3, 3, 3, 3
    spacings = 1, 1, 1, 1

    [flow]
    step = auto
    max_steps = 2000
    project_each_step = false
    project_structure = false
    renormalize = false

Exit codes: 0 clean, 1 configuration error, 2 flow divergence.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from . import __version__
from .bundle import (
    BundleData,
    bundle_from_edge_table,
    induced_end_bundle,
    pure_gauge_bundle,
    random_orthogonal_bundle,
    trivial_bundle,
)
from .calculus import GradedCochain, d_cov, norm_k, random_cochain, random_graded
from .formats import read_cochains, read_edge_table, write_cochains, write_matrix_field
from .mesh import TorusGrid, build_torus_grid
from .structures import (
    JField,
    check_ac_orthogonal,
    check_nondegenerate,
    embed_j_one_form,
    embed_j_zero_form,
    kaehler_projector,
    kaehler_residual,
    nijenhuis_residual,
    recover_j_from_one_form,
    reconstruct_two_form,
    special_complex_projector,
    special_complex_residual,
    standard_complex_structure,
    standard_symplectic_cochain,
)
from .variational import (
    FlowDivergence,
    FlowParams,
    TildeDomain,
    critical_residual,
    estimate_operator_norm,
    extract_pk,
    functional_F,
    project_tilde,
    run_flow,
)

log = logging.getLogger(__name__)

SCENARIOS = {
    # name: (degree k, bundle kind)
    "symplectic": (2, "scalar"),
    "kaehler": (0, "endomorphism"),
    "special-complex": (1, "tangent"),
}

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2

NONDEGENERACY_EPS = 1e-6
INTEGRABILITY_TOL = 1e-6


class ConfigError(ValueError):
    pass


@dataclass
class GridSpec:
    n: int
    sizes: list[int]
    spacings: list[float]


@dataclass
class FlowSpec:
    step: Union[float, str] = "auto"
    max_steps: int = 2000
    project_each_step: bool = False
    project_structure: bool = False
    renormalize: bool = False


@dataclass
class ScenarioConfig:
    scenario: str
    grid: GridSpec
    bundle: str = "trivial"
    k: int = 0
    rank: int = 1
    seed: int = 0
    init: str = "closed"
    flow: FlowSpec = field(default_factory=FlowSpec)
    outputs: str = "out"
    base_dir: str = "."

    def echo(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d


# -- parsing -------------------------------------------------------------------

_ALLOWED = {
    "scenario": {"name", "bundle", "seed", "init", "outputs", "k", "rank"},
    "grid": {"n", "sizes", "spacings"},
    "flow": {"step", "max_steps", "project_each_step", "project_structure", "renormalize"},
}


def _locate(lines: list[str], section: str, key: str | None = None) -> int:
    current = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return no
    return 0


def parse_config(text: str, base_dir: str | Path = ".") -> ScenarioConfig:
    """Strict parse; every error names the offending line and field."""
    lines = text.splitlines()
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    def err(section: str, key: str | None, msg: str):
        line = _locate(lines, section, key)
        where = f"[{section}]" + (f".{key}" if key else "")
        raise ConfigError(f"line {line}: {where}: {msg}")

    for sec in cp.sections():
        if sec not in _ALLOWED:
            err(sec, None, f"unknown section {sec!r}")
        for key in cp[sec]:
            if key not in _ALLOWED[sec]:
                err(sec, key, f"unknown key {key!r}")
    for sec in ("scenario", "grid"):
        if sec not in cp:
            raise ConfigError(f"missing section [{sec}]")

    def get(sec, key, conv, default=None, required=False):
        if sec not in cp or key not in cp[sec]:
            if required:
                err(sec, None, f"missing required key {key!r}")
            return default
        raw = cp[sec][key].strip()
        try:
            return conv(raw)
        except ValueError as exc:
            err(sec, key, f"cannot parse {raw!r}: {exc}")

    def ints(s):
        return [int(x) for x in s.replace(",", " ").split()]

    def floats(s):
        return [float(x) for x in s.replace(",", " ").split()]

    def boolean(s):
        v = s.lower()
        if v in ("true", "yes", "1", "on"):
            return True
        if v in ("false", "no", "0", "off"):
            return False
        raise ValueError("expected a boolean")

    def step(s):
        return "auto" if s == "auto" else float(s)

    name = get("scenario", "name", str, required=True)
    if name not in SCENARIOS and name != "custom":
        err("scenario", "name", f"unknown scenario {name!r}")
    n = get("grid", "n", int, required=True)
    sizes = get("grid", "sizes", ints, required=True)
    spacings = get("grid", "spacings", floats, default=[1.0] * n)
    if n < 1:
        err("grid", "n", "dimension must be >= 1")
    if len(sizes) != n:
        err("grid", "sizes", f"expected {n} entries, got {len(sizes)}")
    if len(spacings) != n:
        err("grid", "spacings", f"expected {n} entries, got {len(spacings)}")
    if any(s < 3 for s in sizes):
        err("grid", "sizes", "every size must satisfy N_i >= 3")
    if any(h <= 0 for h in spacings):
        err("grid", "spacings", "every spacing must be positive")

    if name == "custom":
        k = get("scenario", "k", int, required=True)
        rank = get("scenario", "rank", int, default=1)
        if not 0 <= k <= n:
            err("scenario", "k", f"degree outside 0..{n}")
        if rank < 1:
            err("scenario", "rank", "rank must be >= 1")
    else:
        for key in ("k", "rank"):
            if "scenario" in cp and key in cp["scenario"]:
                err("scenario", key, f"{key!r} is fixed by scenario {name!r}")
        k = SCENARIOS[name][0]
        rank = 1 if name == "symplectic" else n
        if name != "symplectic" and n % 2:
            err("grid", "n", f"scenario {name!r} needs even dimension")
        if name == "symplectic" and n < 2:
            err("grid", "n", "symplectic scenario needs n >= 2")

    bundle = get("scenario", "bundle", str, default="trivial")
    try:
        _parse_connection(bundle)
    except ValueError as exc:
        err("scenario", "bundle", str(exc))
    init = get("scenario", "init", str, default="closed")
    try:
        _parse_init(init)
    except ValueError as exc:
        err("scenario", "init", str(exc))

    flow = FlowSpec(
        step=get("flow", "step", step, default="auto"),
        max_steps=get("flow", "max_steps", int, default=2000),
        project_each_step=get("flow", "project_each_step", boolean, default=False),
        project_structure=get("flow", "project_structure", boolean, default=False),
        renormalize=get("flow", "renormalize", boolean, default=False),
    )
    if flow.max_steps < 0:
        err("flow", "max_steps", "must be >= 0")
    if flow.step != "auto" and not flow.step > 0:
        err("flow", "step", "must be positive or 'auto'")

    return ScenarioConfig(
        scenario=name,
        grid=GridSpec(n, sizes, spacings),
        bundle=bundle,
        k=k,
        rank=rank,
        seed=get("scenario", "seed", int, default=0),
        init=init,
        flow=flow,
        outputs=get("scenario", "outputs", str, default="out"),
        base_dir=str(base_dir),
    )


def _parse_connection(spec: str) -> tuple[str, tuple]:
    parts = spec.split(":")
    kind = parts[0]
    if kind == "trivial" and len(parts) == 1:
        return kind, ()
    if kind == "pure-gauge" and len(parts) == 2:
        return kind, (int(parts[1]),)
    if kind == "random-orthogonal" and len(parts) == 3:
        return kind, (int(parts[1]), float(parts[2]))
    if kind == "file" and len(parts) >= 2:
        return kind, (":".join(parts[1:]),)
    raise ValueError(f"malformed connection spec {spec!r}")


def _parse_init(spec: str) -> tuple[str, Any]:
    kind, _, arg = spec.partition(":")
    if kind == "closed" and not arg:
        return kind, None
    if kind in ("perturbed-closed", "random") and arg:
        return kind, float(arg)
    if kind == "file" and arg:
        return kind, arg
    raise ValueError(f"malformed init spec {spec!r}")


# -- building ------------------------------------------------------------------

@dataclass
class Problem:
    config: ScenarioConfig
    grid: TorusGrid
    base: BundleData  # bundle the connection spec was applied to
    bundle: BundleData  # bundle the cochains live in
    k: int


def _resolve(cfg: ScenarioConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def build_problem(cfg: ScenarioConfig) -> Problem:
    grid = build_torus_grid(cfg.grid.n, cfg.grid.sizes, cfg.grid.spacings)
    kind, args = _parse_connection(cfg.bundle)
    m = cfg.rank
    if kind == "trivial":
        base = trivial_bundle(grid, m)
    elif kind == "pure-gauge":
        base = pure_gauge_bundle(grid, m, args[0])
    elif kind == "random-orthogonal":
        base = random_orthogonal_bundle(grid, m, args[0], args[1])
    else:
        base = bundle_from_edge_table(grid, m, read_edge_table(_resolve(cfg, args[0])))
    bundle = induced_end_bundle(base) if cfg.scenario == "kaehler" else base
    return Problem(cfg, grid, base, bundle, cfg.k)


def _closed_component(prob: Problem):
    cfg, grid, b, k = prob.config, prob.grid, prob.bundle, prob.k
    n = grid.n
    if cfg.scenario == "symplectic":
        return standard_symplectic_cochain(grid)
    J0 = JField(np.broadcast_to(standard_complex_structure(n), (grid.n_vertices, n, n)).copy()) if n % 2 == 0 else None
    if cfg.scenario == "kaehler":
        return embed_j_zero_form(J0)
    if cfg.scenario == "special-complex":
        return embed_j_one_form(grid, J0)
    if k == 0:
        vals = np.zeros((grid.n_cells(0), b.rank))
        vals[:, 0] = 1.0
        from .calculus import Cochain
        return Cochain(0, vals)
    return d_cov(grid, b, random_cochain(grid, b, k - 1, cfg.seed))


def initial_state(prob: Problem) -> GradedCochain:
    cfg, grid, b, k = prob.config, prob.grid, prob.bundle, prob.k
    kind, arg = _parse_init(cfg.init)
    if kind == "file":
        return read_cochains(_resolve(cfg, arg), grid, b.rank)
    if kind == "random":
        gamma = random_graded(grid, b, cfg.seed, arg)
        return project_tilde(TildeDomain(k), grid, b, gamma)
    gamma = GradedCochain.of(grid.n, _closed_component(prob))
    if kind == "perturbed-closed" and k + 1 <= grid.n:
        eta = random_cochain(grid, b, k, cfg.seed + 1)
        gamma = gamma.with_component(arg * d_cov(grid, b, eta))
    return gamma


def structure_checks(prob: Problem, gamma: GradedCochain) -> dict[str, Any]:
    cfg, grid, b, k = prob.config, prob.grid, prob.bundle, prob.k
    pk = extract_pk(k, gamma, grid, b)
    out: dict[str, Any] = {}
    if k < grid.n:
        out["closedness_residual"] = norm_k(grid, b, d_cov(grid, b, pk))
    G = prob.base.metric
    if cfg.scenario == "symplectic":
        nd = check_nondegenerate(reconstruct_two_form(grid, pk), NONDEGENERACY_EPS)
        out["nondegenerate"] = {"ok": nd.ok, "min_abs_det": nd.min_abs_det}
    elif cfg.scenario in ("kaehler", "special-complex"):
        n = grid.n
        if cfg.scenario == "kaehler":
            J = JField(pk.values.reshape(-1, n, n))
            out["kaehler_residual"] = kaehler_residual(grid, prob.base, J)
        else:
            J = recover_j_from_one_form(grid, pk)
            out["special_complex_residual"] = special_complex_residual(grid, prob.base, J)
            nij = nijenhuis_residual(grid, J)
            out["nijenhuis_residual"] = nij
            out["integrable"] = bool(nij <= INTEGRABILITY_TOL)
        ac = check_ac_orthogonal(J, G)
        out["ac_residual"] = ac.ac_residual
        out["orth_residual"] = ac.orth_residual
    return out


def _flow_params(prob: Problem) -> FlowParams:
    cfg = prob.config
    projector = None
    if cfg.flow.project_structure:
        if cfg.scenario == "kaehler":
            projector = kaehler_projector(prob.grid.n, prob.base.metric)
        elif cfg.scenario == "special-complex":
            projector = special_complex_projector(prob.grid, prob.base.metric)
    return FlowParams(
        step=cfg.flow.step,
        max_steps=cfg.flow.max_steps,
        renormalize=cfg.flow.renormalize,
        project_each_step=cfg.flow.project_each_step,
        structure_projector=projector,
        seed=cfg.seed,
    )


def _write_structure_fields(prob: Problem, gamma: GradedCochain, out: Path) -> None:
    grid, k = prob.grid, prob.k
    pk = extract_pk(k, gamma, grid, prob.bundle)
    if prob.config.scenario == "symplectic":
        write_matrix_field(out / "two_form.csv", reconstruct_two_form(grid, pk).matrices())
    elif prob.config.scenario == "kaehler":
        write_matrix_field(out / "j_field.csv", pk.values.reshape(-1, grid.n, grid.n))
    elif prob.config.scenario == "special-complex":
        write_matrix_field(out / "j_field.csv", recover_j_from_one_form(grid, pk).matrices)


def run_scenario(cfg: ScenarioConfig) -> int:
    """Run the flow and write its artifacts into the output directory."""
    t0 = time.perf_counter()
    out = _resolve(cfg, cfg.outputs)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc

    prob = build_problem(cfg)
    gamma0 = initial_state(prob)
    params = _flow_params(prob)
    status = EXIT_OK
    try:
        gamma, trace = run_flow(prob.k, prob.grid, prob.bundle, gamma0, params)
    except FlowDivergence as exc:
        gamma, trace = exc.gamma, exc.trace
        status = EXIT_DIVERGED
    trace.check()
    trace.to_csv(out / "trace.csv", prob.grid.n)
    write_cochains(out / "final_state.csv", gamma)
    if status == EXIT_OK:
        _write_structure_fields(prob, gamma, out)

    k, grid, b = prob.k, prob.grid, prob.bundle
    summary = {
        "library_version": __version__,
        "config": cfg.echo(),
        "status": trace.status,
        "steps": len(trace) - 1,
        "step_size": trace.step,
        "initial": {
            "F": trace.F_values[0],
            "grad_norm": trace.gradient_norms[0],
            "residual_by_degree": [float(x) for x in trace.residual_by_degree[0]],
        },
        "final": {
            "F": trace.F_values[-1],
            "grad_norm": trace.gradient_norms[-1],
            "residual_by_degree": [float(x) for x in trace.residual_by_degree[-1]],
            "constraint_drift": trace.constraint_drift[-1],
        },
        "checks": structure_checks(prob, gamma) if status == EXIT_OK else None,
        "wall_time_s": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return status


def check_scenario(cfg: ScenarioConfig) -> dict[str, Any]:
    prob = build_problem(cfg)
    gamma = initial_state(prob)
    res = critical_residual(prob.k, prob.grid, prob.bundle, gamma)
    return {
        "scenario": cfg.scenario,
        "k": prob.k,
        "F": functional_F(prob.k, prob.grid, prob.bundle, gamma),
        "residual_by_degree": [float(x) for x in res],
        "checks": structure_checks(prob, gamma),
    }


def spectrum(cfg: ScenarioConfig, iters: int = 50) -> dict[str, Any]:
    prob = build_problem(cfg)
    rho = estimate_operator_norm(prob.k, prob.grid, prob.bundle, iters=iters, seed=cfg.seed)
    return {
        "scenario": cfg.scenario,
        "k": prob.k,
        "power_iterations": iters,
        "operator_norm": rho,
        "auto_step": 0.9 / rho if rho > 0 else 1.0,
    }


# -- entry point ---------------------------------------------------------------

def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="covforms", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the gradient flow for a scenario")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override the seed")
    p_check = sub.add_parser("check", help="structure checks on the initial state, no flow")
    p_check.add_argument("scenario", choices=[*SCENARIOS, "custom"])
    p_check.add_argument("config")
    p_spec = sub.add_parser("spectrum", help="power-iteration estimate of ||d[k] + delta[k]||")
    p_spec.add_argument("config")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
        if args.command == "run":
            if args.out:
                cfg.outputs = str(Path(args.out).resolve())
            if args.seed is not None:
                cfg.seed = args.seed
            status = run_scenario(cfg)
            if status == EXIT_DIVERGED:
                print("flow diverged; partial trace written", file=sys.stderr)
            return status
        if args.command == "check":
            if args.scenario != cfg.scenario:
                raise ConfigError(f"config is for scenario {cfg.scenario!r}, not {args.scenario!r}")
            print(json.dumps(check_scenario(cfg), indent=2, sort_keys=True))
            return EXIT_OK
        print(json.dumps(spectrum(cfg), indent=2, sort_keys=True))
        return EXIT_OK
    except (ConfigError, ValueError, OSError) as exc:
        print(f"covforms: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
