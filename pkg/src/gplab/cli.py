"""Scenario-driven command line front end.

Configs are TOML files: top-level ``scenario`` and ``seed`` plus dotted
sections (``[grid]``, ``[potential]``, ``[evolution]``, ...).  Each run writes
``<scenario>.csv`` (17 significant digits, deterministic row order) and
``<scenario>.json`` (config hash, relations exercised, summary numbers).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dynamics import (ConvergenceError, EvolveParams, NumericalError, evolve_gp, evolve_hartree,
                       ground_state_imag_time, gp_energy_fn, harmonic_trap, trap_release)
from .fields import GridSpec, WaveField, export_csv, l2_norm, second_moment
from .hierarchy import MollifiedDelta, finite_bbgky_residual, infinite_hierarchy_residual
from .manybody import (CutoffParams, ManyBodyHamiltonian, MemoryBudgetError, check_budget, cutoff_theta,
                       energy_per_particle, evolve_exact, jastrow_state, marginal, mean_field_scan,
                       product_state, scaled_pair_kernel, sobolev_trace)
from .manybody.cutoff import empirical_level_sup, sample_configurations
from .potentials import KINDS, RadialPotential, ScaledPotential, born_coupling, bundled_suite, rho_measure
from .scattering import (BoundStateError, ShootingError, born_bound_check, scattering_identity_check,
                         solve_neumann_cell, solve_zero_energy, verify_w_bounds)

DEFAULT_SEED = 20240601
OUT_ENV = "GPLAB_OUT"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


# ---------------------------------------------------------------------------
# config access


_MISSING = object()


class _Section:
    """Typed access to a nested mapping; every error names the dotted key path."""

    def __init__(self, data: dict, prefix: str = ""):
        self.data = data
        self.prefix = prefix

    def path(self, key):
        return f"{self.prefix}.{key}" if self.prefix else key

    def has(self, key):
        return key in self.data

    def section(self, key, required=True):
        if key not in self.data:
            if required:
                raise ConfigError(self.path(key), "missing section")
            return None
        val = self.data[key]
        if not isinstance(val, dict):
            raise ConfigError(self.path(key), f"expected a section (table), got {type(val).__name__}")
        return _Section(val, self.path(key))

    def get(self, key, kind, default=_MISSING, check=None, why=""):
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(self.path(key), f"missing key (expected {_kind_name(kind)})")
            self.data[key] = default
            return default
        val = _coerce(self.data[key], kind, self.path(key))
        if check is not None and not check(val):
            raise ConfigError(self.path(key), f"value {val!r} out of range{': ' + why if why else ''}")
        self.data[key] = val
        return val

    def get_list(self, key, kind, default=_MISSING, check=None, why="", min_len=1):
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(self.path(key), f"missing key (expected list of {_kind_name(kind)})")
            self.data[key] = list(default)
            return list(default)
        raw = self.data[key]
        if not isinstance(raw, list):
            raise ConfigError(self.path(key), f"expected list of {_kind_name(kind)}, got {type(raw).__name__}")
        if len(raw) < min_len:
            raise ConfigError(self.path(key), f"expected at least {min_len} entries")
        vals = [_coerce(v, kind, f"{self.path(key)}[{i}]") for i, v in enumerate(raw)]
        for i, v in enumerate(vals):
            if check is not None and not check(v):
                raise ConfigError(f"{self.path(key)}[{i}]", f"value {v!r} out of range{': ' + why if why else ''}")
        self.data[key] = vals
        return vals


def _kind_name(kind):
    return {int: "integer", float: "real", str: "string", bool: "boolean"}[kind]


def _coerce(val, kind, path):
    if kind is bool:
        if isinstance(val, bool):
            return val
    elif kind is int:
        if isinstance(val, int) and not isinstance(val, bool):
            return val
    elif kind is float:
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            val = float(val)
            if not math.isfinite(val):
                raise ConfigError(path, "expected a finite real")
            return val
    elif kind is str:
        if isinstance(val, str):
            return val
    raise ConfigError(path, f"expected {_kind_name(kind)}, got {type(val).__name__} {val!r}")


_pos = lambda v: v > 0  # noqa: E731
_nonneg = lambda v: v >= 0  # noqa: E731
_pow2 = lambda v: v >= 2 and (v & (v - 1)) == 0  # noqa: E731


# ---------------------------------------------------------------------------
# scenario registry


@dataclass
class Scenario:
    name: str
    columns: list
    relations: list
    sort_keys: list
    validate: object = None
    run: object = None
    description: str = ""


SCENARIOS: dict[str, Scenario] = {}


def _scenario(name, columns, relations, sort_keys, description):
    def register(pair):
        validate, run = pair
        SCENARIOS[name] = Scenario(name, columns, relations, sort_keys, validate, run, description)
        return pair
    return register


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    data: dict
    source: str = ""
    output_dir: str = "."
    extras: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# shared block parsers


def _potential(sec: _Section) -> RadialPotential:
    kind = sec.get("kind", str)
    if kind not in KINDS:
        raise ConfigError(sec.path("kind"), f"unknown potential kind {kind!r}; valid: {', '.join(KINDS)}")
    strength = sec.get("strength", float, check=_nonneg, why="strength must be >= 0")
    R = sec.get("R", float, check=_pos, why="R must be positive")
    table = None
    if kind == "smooth_bump_table" and sec.has("table"):
        table = tuple(sec.get_list("table", float, min_len=4))
    try:
        return RadialPotential(kind, strength, R, table)
    except ValueError as exc:
        raise ConfigError(sec.prefix, str(exc)) from None


def _potentials(cfg: _Section):
    """Either ``suite = "bundled"``, a ``[[potentials]]`` array, or one ``[potential]``."""
    if cfg.has("suite"):
        name = cfg.get("suite", str)
        if name != "bundled":
            raise ConfigError("suite", f"unknown suite {name!r}; valid: bundled")
        return bundled_suite()
    if cfg.has("potentials"):
        raw = cfg.data["potentials"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("potentials", "expected a non-empty array of tables")
        out = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict):
                raise ConfigError(f"potentials[{i}]", "expected a table")
            out.append(_potential(_Section(entry, f"potentials[{i}]")))
        return out
    return [_potential(cfg.section("potential"))]


def _grid(cfg: _Section, dim_fixed: int | None = None) -> GridSpec:
    sec = cfg.section("grid")
    dim = sec.get("dim", int, 1, check=lambda d: d in (1, 2, 3), why="dim must be 1, 2 or 3")
    if dim_fixed is not None and dim != dim_fixed:
        raise ConfigError(sec.path("dim"), f"this scenario requires dim = {dim_fixed}")
    L = sec.get("L", float, check=_pos, why="box length must be positive")
    n = sec.get("n", int, check=_pow2, why="n must be a power of two >= 2")
    return GridSpec(dim, L, n)


def _initial(cfg: _Section, grid: GridSpec) -> WaveField:
    sec = cfg.section("initial", required=False)
    if sec is None:
        sec = _Section(cfg.data.setdefault("initial", {}), "initial")
    kind = sec.get("kind", str, "gaussian")
    if kind == "gaussian":
        width = sec.get("width", float, 1.0, check=_pos)
        center = sec.get("center", float, 0.0)
        momentum = sec.get("momentum", float, 0.0)

        def fn(*xs):
            r2 = (xs[0] - center) ** 2 + sum(x**2 for x in xs[1:])
            return np.exp(-r2 / (2 * width**2)) * np.exp(1j * momentum * xs[0])
    elif kind == "plane_wave":
        mode = sec.get("mode", int, 1)
        kx = 2 * np.pi * mode / grid.L

        def fn(*xs):
            return np.exp(1j * kx * xs[0]) + 0 * sum(xs)
    elif kind == "flat":
        def fn(*xs):
            return np.ones_like(xs[0], dtype=complex) + 0 * sum(xs)
    else:
        raise ConfigError(sec.path("kind"), f"unknown initial kind {kind!r}; valid: gaussian, plane_wave, flat")
    return WaveField.from_function(grid, fn)


def _trap(cfg: _Section, required=False):
    sec = cfg.section("trap", required=required)
    if sec is None:
        return None
    return harmonic_trap(sec.get("omega2", float, 1.0, check=_pos))


def _evolution(cfg: _Section, defaults=None) -> EvolveParams:
    defaults = defaults or {}
    sec = cfg.section("evolution", required=not defaults)
    if sec is None:
        sec = _Section(cfg.data.setdefault("evolution", {}), "evolution")
    dt = sec.get("dt", float, defaults.get("dt", _MISSING), check=_pos)
    t_final = sec.get("t_final", float, defaults.get("t_final", _MISSING), check=_pos)
    every = sec.get("record_every", int, defaults.get("record_every", 1), check=_pos)
    try:
        return EvolveParams(dt, t_final, every)
    except ValueError as exc:
        raise ConfigError("evolution", str(exc)) from None


# ---------------------------------------------------------------------------
# scenarios


def _scattering_validate(cfg):
    pots = _potentials(cfg)
    sec = cfg.section("scattering", required=False) or _Section(cfg.data.setdefault("scattering", {}), "scattering")
    Rmax = max(p.R for p in pots)
    sec.get("r_max", float, 4.0 * Rmax, check=_pos)
    sec.get("step", float, 1e-4, check=_pos)
    sec.get_list("N_list", int, [1], check=_pos)
    return {"potentials": pots}


def _scattering_run(cfg, ctx, threads):
    sec = cfg.section("scattering")
    r_max, step, N_list = sec.get("r_max", float), sec.get("step", float), sec.get_list("N_list", int)
    rows = []
    for pot in ctx["potentials"]:
        base_rho, b0 = rho_measure(pot), born_coupling(pot)
        base_rmax = max(r_max, 4.0 * pot.R) if r_max <= pot.R else r_max
        base_step = min(step, pot.R / 200.0)
        base_sol = solve_zero_energy(pot, r_max=base_rmax, step=base_step)
        for N in N_list:
            # step and r_max refer to the unscaled potential; the scaled one shrinks by 1/N
            target = pot if N == 1 else ScaledPotential(pot, N, 1.0)
            sol = base_sol if N == 1 else solve_zero_energy(target, r_max=base_rmax / N, step=base_step / N)
            ident = scattering_identity_check(sol, target)
            a0, born, _ = born_bound_check(base_sol, pot)
            rep = verify_w_bounds(sol, target)
            rows.append({
                "kind": pot.kind, "V0": pot.strength, "R": pot.R, "N": N,
                "rho": base_rho, "b0": b0, "a0": base_sol.a0, "a": sol.a0,
                "identity_rel_err": ident.error, "born_ratio": a0 / born if born > 0 else 0.0,
                "ode_residual": sol.ode_residual,
                "c_lower": rep.c_lower, "max_f": rep.max_f, "exterior_deviation": rep.exterior_deviation,
                "c_grad_a": rep.c_grad_a, "c_grad_rho": rep.c_grad_rho, "c_hess_rho": rep.c_hess_rho,
            })
    return rows, {}


_scenario(
    "scattering-report",
    ["kind", "V0", "R", "N", "rho", "b0", "a0", "a", "identity_rel_err", "born_ratio", "ode_residual",
     "c_lower", "max_f", "exterior_deviation", "c_grad_a", "c_grad_rho", "c_hess_rho"],
    ["zero-energy scattering equation", "scattering length from the affine exterior tail",
     "identity: integral of V f equals 8 pi a0", "Born upper bound a0 <= b0 / (8 pi)",
     "pointwise bounds on w and its first two derivatives", "strength measure rho"],
    ["kind", "V0", "R", "N"],
    "zero-energy scattering solutions, scattering lengths and bound constants per potential",
)((_scattering_validate, _scattering_run))


def _neumann_validate(cfg):
    pot = _potential(cfg.section("potential"))
    sec = cfg.section("neumann")
    sec.get_list("N_list", int, check=_pos)
    sec.get_list("ell_list", float, check=_pos)
    sec.get("beta", float, 1.0, check=lambda b: 0 <= b <= 1)
    return {"potential": pot}


def _neumann_run(cfg, ctx, threads):
    sec = cfg.section("neumann")
    rows = []
    for N in sec.get_list("N_list", int):
        scaled = ScaledPotential(ctx["potential"], N, sec.get("beta", float))
        for ell in sec.get_list("ell_list", float):
            sol = solve_neumann_cell(scaled, ell)
            ratio = sol.eigenvalue_ratio
            rows.append({"N": N, "ell": ell, "a": sol.a, "a_over_ell": sol.a / ell, "e_ell": sol.e_ell,
                         "ratio": ratio, "ratio_err": abs(ratio - 1.0), "c0": sol.c0})
    return rows, {}


_scenario(
    "neumann-scan",
    ["N", "ell", "a", "a_over_ell", "e_ell", "ratio", "ratio_err", "c0"],
    ["Neumann cell ground state energy e_ell ~ 3 a / ell^3", "bound |omega| <= c0 a / (r + a)"],
    ["N", "ell"],
    "lowest Neumann eigenvalue of the scaled potential on a ball of radius ell",
)((_neumann_validate, _neumann_run))


def _gp_common(cfg):
    grid = _grid(cfg)
    phi = _initial(cfg, grid)
    gp = cfg.section("gp", required=False) or _Section(cfg.data.setdefault("gp", {}), "gp")
    sigma = gp.get("sigma", float, 0.0, check=_nonneg, why="only defocusing sigma >= 0 is supported")
    return grid, phi, sigma


def _gp_evolve_validate(cfg):
    grid, phi, sigma = _gp_common(cfg)
    trap = _trap(cfg)
    params = _evolution(cfg)
    out = cfg.section("output", required=False)
    snap = out.get("snapshot", bool, False) if out else False
    return {"grid": grid, "phi": phi, "sigma": sigma, "trap": trap, "params": params, "snapshot": snap}


def _gp_evolve_run(cfg, ctx, threads):
    traj = evolve_gp(ctx["phi"], ctx["sigma"], ctx["trap"], ctx["params"])
    rows = traj.observables(gp_energy_fn(ctx["sigma"], ctx["trap"]))
    files = {}
    if ctx["snapshot"] and ctx["grid"].dim == 1:
        path = Path(ctx["out_dir"]) / "gp-evolve-final.csv"
        export_csv(traj.final, path)
        files["snapshot"] = path.name
    mass = [r["mass"] for r in rows]
    energy = [r["energy"] for r in rows]
    return rows, {"mass_drift": max(mass) - min(mass), "energy_drift": max(energy) - min(energy), "files": files}


_scenario(
    "gp-evolve",
    ["time", "mass", "energy", "x2", "peak_density"],
    ["cubic nonlinear Schroedinger (GP) evolution", "mass and GP energy conservation"],
    ["time"],
    "real-time GP evolution with trajectory observables",
)((_gp_evolve_validate, _gp_evolve_run))


def _groundstate_validate(cfg):
    grid = _grid(cfg)
    trap = _trap(cfg, required=True)
    gp = cfg.section("gp", required=False) or _Section(cfg.data.setdefault("gp", {}), "gp")
    if gp.has("sigma_list"):
        sigmas = gp.get_list("sigma_list", float, check=_nonneg)
    else:
        sigmas = [gp.get("sigma", float, 0.0, check=_nonneg)]
    sec = cfg.section("groundstate", required=False) or _Section(cfg.data.setdefault("groundstate", {}), "groundstate")
    tol = sec.get("tol", float, 1e-8, check=_pos)
    max_iter = sec.get("max_iter", int, 2_000_000, check=_pos)
    return {"grid": grid, "trap": trap, "sigmas": sorted(sigmas), "tol": tol, "max_iter": max_iter}


def _groundstate_run(cfg, ctx, threads):
    rows, files = [], {}
    for sigma in ctx["sigmas"]:
        res = ground_state_imag_time(ctx["grid"], sigma, ctx["trap"], tol=ctx["tol"], max_iter=ctx["max_iter"])
        rows.append({"sigma": sigma, "energy": res.energy, "mu": res.mu, "residual": res.residual,
                     "iterations": res.iterations, "x2": second_moment(res.field),
                     "peak_density": float(np.max(res.field.density))})
        if ctx["grid"].dim == 1:
            name = f"gp-groundstate-sigma{sigma:g}.csv"
            export_csv(res.field, Path(ctx["out_dir"]) / name)
            files[f"{sigma:g}"] = name
    return rows, {"files": files}


_scenario(
    "gp-groundstate",
    ["sigma", "energy", "mu", "residual", "iterations", "x2", "peak_density"],
    ["trapped GP energy functional", "positive normalized minimizer", "nonlinear eigenvalue equation"],
    ["sigma"],
    "imaginary-time minimizer of the trapped GP functional",
)((_groundstate_validate, _groundstate_run))


def _release_validate(cfg):
    ctx = _groundstate_validate(cfg)
    if len(ctx["sigmas"]) != 1:
        raise ConfigError("gp.sigma_list", "trap-release takes a single gp.sigma")
    ctx["params"] = _evolution(cfg)
    return ctx


def _release_run(cfg, ctx, threads):
    sigma = ctx["sigmas"][0]
    rel = trap_release(ctx["grid"], sigma, ctx["trap"], ctx["params"], tol=ctx["tol"])
    efn = gp_energy_fn(sigma)
    rows = [{"time": float(t), "x2": float(w), "mass": l2_norm(f) ** 2, "energy": efn(f)}
            for t, w, f in zip(rel.trajectory.times, rel.widths, rel.trajectory.fields)]
    return rows, {"ground_energy": rel.ground.energy, "ground_mu": rel.ground.mu}


_scenario(
    "trap-release",
    ["time", "x2", "mass", "energy"],
    ["trapped GP minimizer as initial data", "untrapped GP evolution after release"],
    ["time"],
    "trapped ground state released into free GP evolution",
)((_release_validate, _release_run))


def _hvg_validate(cfg):
    grid, phi, sigma = _gp_common(cfg)
    if sigma <= 0:
        raise ConfigError("gp.sigma", "hartree-vs-gp needs sigma > 0")
    params = _evolution(cfg)
    sec = cfg.section("mollifier")
    widths = sec.get_list("widths", float, check=_pos)
    for w in widths:
        if 6 * w >= grid.L / 2:
            raise ConfigError("mollifier.widths", f"width {w} does not fit in half the box")
    return {"grid": grid, "phi": phi, "sigma": sigma, "params": params, "widths": sorted(widths, reverse=True)}


def _hvg_run(cfg, ctx, threads):
    grid, phi, sigma, params = ctx["grid"], ctx["phi"], ctx["sigma"], ctx["params"]
    ref = evolve_gp(phi, sigma, None, params).final
    rows = []
    for w in ctx["widths"]:
        kernel = sigma * MollifiedDelta(w, grid).profile
        u = evolve_hartree(phi, kernel, params).final
        rows.append({"width": w, "l2_gap": l2_norm(WaveField(grid, u.values - ref.values))})
    gaps = [r["l2_gap"] for r in rows]
    ratios = [a / b for a, b in zip(gaps, gaps[1:]) if b > 0]
    return rows, {"gap_ratios": ratios}


_scenario(
    "hartree-vs-gp",
    ["width", "l2_gap"],
    ["Hartree equation with a mollified pair potential", "local GP limit as the mollifier narrows"],
    ["width"],
    "L2 gap between Hartree evolution with a narrowing mollifier and GP evolution",
)((_hvg_validate, _hvg_run))


def _pair_potential(cfg):
    pot = _potential(cfg.section("potential"))
    return pot


def _mb_validate(cfg):
    grid = _grid(cfg, dim_fixed=1)
    phi = _initial(cfg, grid)
    pot = _pair_potential(cfg)
    sec = cfg.section("scan")
    N_list = sec.get_list("N_list", int, check=lambda v: v >= 1)
    beta = sec.get("beta", float, 0.0, check=lambda b: 0 <= b <= 1)
    t = sec.get("t", float, check=_nonneg)
    over = []
    for N in sorted(set(N_list)):
        try:
            check_budget(grid.n, N)
        except MemoryBudgetError as exc:
            over.append((N, exc))
    if over:
        bad = ", ".join(str(N) for N, _ in over)
        raise ConfigError("scan.N_list", f"N in {{{bad}}} exceeds the memory budget: {over[-1][1]}")
    if 2 * pot.R >= grid.L / 2 and beta == 0:
        raise ConfigError("potential.R", "pair potential support must fit inside half the box")
    params = _evolution(cfg, defaults={"dt": 5e-3, "t_final": max(t, 1e-12)})
    return {"grid": grid, "phi": phi, "pot": pot, "N_list": N_list, "beta": beta, "t": t, "params": params}


def _mb_run(cfg, ctx, threads):
    rows = mean_field_scan(ctx["phi"], ctx["pot"], ctx["beta"], ctx["t"], ctx["N_list"], ctx["params"],
                           threads=threads)
    d = [r["trace_dist"] for r in rows]
    return rows, {"strictly_decreasing": bool(all(a > b for a, b in zip(d, d[1:])))}


_scenario(
    "manybody-convergence",
    ["N", "beta", "t", "trace_dist", "overlap", "energy_pp", "sobolev_trace_k1"],
    ["N-body Schroedinger evolution of a product state", "one-particle marginal",
     "Hartree (beta = 0) or cubic (beta > 0) one-body limit", "trace distance of marginals"],
    ["N"],
    "finite-N one-particle marginals against the one-body flow",
)((_mb_validate, _mb_run))


def _bbgky_validate(cfg):
    grid = _grid(cfg, dim_fixed=1)
    phi = _initial(cfg, grid)
    ctx = {"grid": grid, "phi": phi}
    fin = cfg.section("finite", required=False)
    if fin is not None:
        ctx["pot"] = _pair_potential(cfg)
        N = fin.get("N", int, check=lambda v: v >= 2, why="N must be at least 2")
        ks = fin.get_list("k_list", int, [1], check=lambda k: 1 <= k < N, why="need 1 <= k < N")
        fin.get_list("dt_list", float, check=_pos)
        fin.get("t", float, 0.1, check=_pos)
        fin.get("beta", float, 0.0, check=lambda b: 0 <= b <= 1)
        try:
            check_budget(grid.n, N)
            check_budget(grid.n, max(ks) + 1, what="marginal kernel", power=2)
        except MemoryBudgetError as exc:
            raise ConfigError("finite", str(exc)) from None
    inf = cfg.section("infinite", required=False)
    if inf is not None:
        if inf.has("grid"):
            # the one-body hierarchy check affords a much finer grid than the N-body part
            ctx["inf_grid"] = _grid(inf, dim_fixed=1)
            ctx["inf_phi"] = _initial(cfg, ctx["inf_grid"])
        inf.get("sigma", float, check=_nonneg)
        inf.get_list("k_list", int, [1], check=lambda k: k in (1, 2), why="k must be 1 or 2")
        inf.get_list("widths", float, check=_pos)
        inf.get_list("quadrature_dts", float, check=_pos)
        _evolution(cfg)
    if fin is None and inf is None:
        raise ConfigError("finite", "missing section (need [finite], [infinite] or both)")
    return ctx


def _bbgky_run(cfg, ctx, threads):
    grid, phi = ctx["grid"], ctx["phi"]
    rows, summary = [], {}
    fin = cfg.section("finite", required=False)
    if fin is not None:
        N, t = fin.get("N", int), fin.get("t", float)
        kernel = scaled_pair_kernel(ctx["pot"], grid, N, fin.get("beta", float))
        ham = ManyBodyHamiltonian(N, grid, kernel)
        psi0 = product_state(phi, N)
        for dt in sorted(fin.get_list("dt_list", float), reverse=True):
            traj = evolve_exact(psi0, ham, EvolveParams(dt, t))
            for k in sorted(fin.get_list("k_list", int)):
                rows.append({"hierarchy": "finite", "N": N, "k": k, "beta_m": 0.0, "dt": dt,
                             "residual": finite_bbgky_residual(traj, kernel, k, dt)})
        summary["finite_slopes"] = _slopes([r for r in rows if r["hierarchy"] == "finite"], "dt")
    inf = cfg.section("infinite", required=False)
    if inf is not None:
        sigma = inf.get("sigma", float)
        params = _evolution(cfg)
        igrid = ctx.get("inf_grid", grid)
        traj = evolve_gp(ctx.get("inf_phi", phi), sigma, None, params)
        inf_rows = []
        for w in sorted(inf.get_list("widths", float), reverse=True):
            delta = MollifiedDelta(w, igrid)
            for q in sorted(inf.get_list("quadrature_dts", float), reverse=True):
                for k in sorted(inf.get_list("k_list", int)):
                    inf_rows.append({"hierarchy": "infinite", "N": 0, "k": k, "beta_m": w, "dt": q,
                                     "residual": infinite_hierarchy_residual(traj, sigma, k, delta, q)})
        rows += inf_rows
        summary["infinite_width_slopes"] = _slopes(inf_rows, "beta_m")
    return rows, summary


def _slopes(rows, var):
    """Log-log slope of residual against ``var`` for each group of the other keys."""
    groups = {}
    for r in rows:
        key = tuple((c, r[c]) for c in ("k", "beta_m", "dt") if c != var)
        groups.setdefault(key, []).append((r[var], r["residual"]))
    out = []
    for key, pts in sorted(groups.items()):
        pts = [(x, y) for x, y in pts if x > 0 and y > 0]
        if len(pts) >= 2:
            xs, ys = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
            out.append({**dict(key), "slope": float(np.polyfit(xs, ys, 1)[0])})
    return out


_scenario(
    "bbgky-residual",
    ["hierarchy", "N", "k", "beta_m", "dt", "residual"],
    ["finite-N BBGKY hierarchy for marginals", "infinite GP hierarchy in integral form",
     "factorized solutions of the infinite hierarchy", "free k-particle evolution", "mollified delta"],
    ["hierarchy", "N", "k", "beta_m", "dt"],
    "residuals of the finite and infinite hierarchies (N = 0 marks the infinite hierarchy)",
)((_bbgky_validate, _bbgky_run))


def _energy_validate(cfg):
    grid = _grid(cfg, dim_fixed=1)
    phi = _initial(cfg, grid)
    pot = _pair_potential(cfg)
    sec = cfg.section("scan")
    N_list = sec.get_list("N_list", int, check=lambda v: v >= 2, why="N must be at least 2")
    sec.get("beta", float, 0.0, check=lambda b: 0 <= b <= 1)
    over = []
    for N in sorted(set(N_list)):
        try:
            check_budget(grid.n, N)
        except MemoryBudgetError as exc:
            over.append((N, exc))
    if over:
        bad = ", ".join(str(N) for N, _ in over)
        raise ConfigError("scan.N_list", f"N in {{{bad}}} exceeds the memory budget: {over[-1][1]}")
    jas = cfg.section("jastrow", required=False) or _Section(cfg.data.setdefault("jastrow", {}), "jastrow")
    depth = jas.get("depth", float, 0.5, check=lambda d: 0 <= d < 1, why="depth must lie in [0, 1)")
    width = jas.get("width", float, 0.3, check=_pos)
    return {"grid": grid, "phi": phi, "pot": pot, "N_list": N_list,
            "factor": lambda r: 1.0 - depth * np.exp(-np.asarray(r) ** 2 / (2 * width**2))}


def _energy_run(cfg, ctx, threads):
    grid, phi = ctx["grid"], ctx["phi"]
    beta = cfg.section("scan").get("beta", float)
    rows = []
    for N in ctx["N_list"]:
        ham = ManyBodyHamiltonian(N, grid, scaled_pair_kernel(ctx["pot"], grid, N, beta))
        for label, state in (("jastrow", jastrow_state(phi, N, ctx["factor"])), ("product", product_state(phi, N))):
            rep = energy_per_particle(state, ham, phi)
            rows.append({"N": N, "state": label, "energy_pp": rep.energy_pp, "kinetic_pp": rep.kinetic_pp,
                         "interaction_pp": rep.interaction_pp, "comparator": rep.comparator,
                         "comparator_limit": rep.comparator_limit, "b_eff": rep.b_eff,
                         "sobolev_trace_k2": sobolev_trace(marginal(state, 2))})
    return rows, {}


_scenario(
    "energy-compare",
    ["N", "state", "energy_pp", "kinetic_pp", "interaction_pp", "comparator", "comparator_limit", "b_eff",
     "sobolev_trace_k2"],
    ["energy per particle of a product state", "Jastrow trial state with short-scale correlations",
     "Sobolev-weighted trace of the two-particle marginal"],
    ["N", "state"],
    "energy per particle and Sobolev trace for product vs Jastrow states",
)((_energy_validate, _energy_run))


def _cutoff_validate(cfg):
    sec = cfg.section("cutoff")
    ell = sec.get("ell", float, check=_pos)
    eps = sec.get("eps", float, check=lambda e: 0 < e < 1, why="eps must lie in (0, 1)")
    sec.get("particles", int, 4, check=lambda p: p >= 2)
    sec.get("dim", int, 3, check=lambda d: d in (1, 2, 3))
    sec.get("samples", int, 1000, check=_pos)
    sec.get("box", float, 4.0 * ell, check=_pos)
    sec.get("n_max", int, 3, check=lambda v: v >= 1)
    sec.get_list("m_list", int, [1, 2], check=_pos)
    sec.get_list("sup_samples", int, [1000, 10000], check=_pos)
    try:
        CutoffParams(ell, eps)
    except ValueError as exc:
        raise ConfigError("cutoff", str(exc)) from None
    return {}


def _cutoff_run(cfg, ctx, threads):
    sec = cfg.section("cutoff")
    ell, eps = sec.get("ell", float), sec.get("eps", float)
    P, dim, samples, box = sec.get("particles", int), sec.get("dim", int), sec.get("samples", int), sec.get("box", float)
    n_max = sec.get("n_max", int)
    params = CutoffParams(ell, eps)
    rng = np.random.default_rng(cfg_seed(cfg))
    configs = sample_configurations(rng, samples, P, dim, box)
    rows = []
    for n in range(0, n_max + 1):
        for k in range(0, P + 1):
            theta = np.array([cutoff_theta(c, params, k, n) for c in configs])
            viol_k = viol_n = 0
            if k < P:
                nxt = np.array([cutoff_theta(c, params, k + 1, n) for c in configs])
                viol_k = int(np.sum(nxt > theta))
            if n < n_max:
                up = np.array([cutoff_theta(c, params, k, n + 1) for c in configs])
                viol_n = int(np.sum(up > theta))
            rows.append({"test": "monotone", "k": k, "n_level": n, "m": 0, "samples": samples,
                         "value": float(theta.min()), "bound": 1.0, "violations": viol_k + viol_n})
    for m in sec.get_list("m_list", int):
        bound = (2 * m / math.e) ** m
        for s in sorted(sec.get_list("sup_samples", int)):
            sub = np.random.default_rng(cfg_seed(cfg) + 1000 * m + s)
            val = empirical_level_sup(sub, s, params, P, P, 1, m, dim=dim, box=box)
            rows.append({"test": "level_ratio", "k": P, "n_level": 1, "m": m, "samples": s,
                         "value": val, "bound": bound, "violations": int(val > bound * (1 + 1e-12))})
    total = sum(r["violations"] for r in rows)
    return rows, {"violations": total}


def cfg_seed(cfg: _Section) -> int:
    return int(cfg.data.get("seed", DEFAULT_SEED))


_scenario(
    "cutoff-props",
    ["test", "k", "n_level", "m", "samples", "value", "bound", "violations"],
    ["exponential cutoff h(x)", "cumulative cutoffs Theta_k^(n)", "monotonicity in k and n",
     "level-ratio bound X^m Theta^(n) / Theta^(n-1) <= (2m/e)^m"],
    ["test", "k", "n_level", "m", "samples"],
    "monotonicity and level-ratio properties of the cumulative cutoff functions",
)((_cutoff_validate, _cutoff_run))


# ---------------------------------------------------------------------------
# parsing, running, output


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("", f"{path}: not valid TOML ({exc})") from None
    return validate_config(data, source=str(path))


def validate_config(data: dict, source: str = "") -> ScenarioConfig:
    cfg = _Section(data)
    name = cfg.get("scenario", str)
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {name!r}; valid: {', '.join(sorted(SCENARIOS))}")
    seed = cfg.get("seed", int, DEFAULT_SEED)
    out = cfg.section("output", required=False)
    out_dir = out.get("dir", str, ".") if out else "."
    extras = SCENARIOS[name].validate(cfg)
    return ScenarioConfig(name, seed, data, source, out_dir, extras)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class NumericalFailure(RuntimeError):
    pass


def write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    for r in rows:
        for c in columns:
            v = r[c]
            if isinstance(v, (float, np.floating)) and not math.isfinite(v):
                raise NumericalFailure(f"non-finite value in column {c!r}: {v}")
        lines.append(",".join(_fmt(r[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def run_scenario(config: ScenarioConfig, out_dir=None, threads: int = 1):
    """Run and write ``<scenario>.csv`` / ``<scenario>.json``; returns ``(rows, summary)``."""
    sc = SCENARIOS[config.scenario]
    out = Path(out_dir or os.environ.get(OUT_ENV) or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = dict(config.extras)
    ctx["out_dir"] = str(out)
    t0 = time.time()
    rows, extra = sc.run(_Section(config.data), ctx, max(int(threads), 1))
    rows = sorted(rows, key=lambda r: tuple(r[k] for k in sc.sort_keys))
    write_csv(out / f"{sc.name}.csv", sc.columns, rows)
    summary = {
        "scenario": sc.name,
        "config_hash": config.config_hash,
        "config_source": config.source,
        "seed": config.seed,
        "relations": sc.relations,
        "columns": sc.columns,
        "rows": len(rows),
        "version": __version__,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "runtime_s": round(time.time() - t0, 3),
        **extra,
    }
    (out / f"{sc.name}.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default))
    return rows, summary


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


NUMERICAL_ERRORS = (NumericalError, ConvergenceError, ShootingError, BoundStateError, NumericalFailure,
                    FloatingPointError, np.linalg.LinAlgError, RuntimeError)


def _help_epilog() -> str:
    lines = ["scenarios and CSV columns:"]
    for name in sorted(SCENARIOS):
        sc = SCENARIOS[name]
        lines.append(f"  {name}: {sc.description}")
        lines.append(f"      columns: {', '.join(sc.columns)}")
    lines.append("")
    lines.append("exit codes: 0 success, 1 numerical failure, 2 configuration error")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gplab", description="GP / many-body numerical laboratory",
                                     epilog=_help_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario described by a TOML config",
                         epilog=_help_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config")
    run.add_argument("--out", default=None, help=f"output directory (default: output.dir, or ${OUT_ENV})")
    run.add_argument("--threads", type=int, default=1, help="worker threads for scan points")
    sub.add_parser("list-scenarios", help="print the available scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name in sorted(SCENARIOS):
            print(f"{name}\t{SCENARIOS[name].description}")
        return 0
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        rows, summary = run_scenario(config, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure in {config.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {config.scenario}: {exc}", file=sys.stderr)
        return 2
    print(f"{config.scenario}: {len(rows)} rows written to {Path(args.out or os.environ.get(OUT_ENV) or config.output_dir)}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
