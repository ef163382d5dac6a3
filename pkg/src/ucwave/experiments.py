"""Experiment harness: manufactured solutions, noise models, region-restricted
error norms, convergence drivers, worst-mode and trace studies.

All drivers consume a plain configuration dictionary (see DEFAULT_CONFIG) and
return an ExperimentReport that serializes to report.json / table.csv.
Refinement levels are independent; UCWAVE_THREADS > 1 runs them concurrently.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import gauss_rule
from .exceptions import ConfigurationError, NumericalError
from .forms import (
    StabilizationWeights,
    assemble_saddle,
    mass_blocks,
    spectral_system,
)
from .geometry import (
    GeometryConfig,
    Region,
    WeightParams,
    check_pseudoconvexity,
    derive_params,
    region_contains,
)
from .mesh import SpaceTimeMesh, build_mesh
from .solver import factorize, smallest_eigenpair, solve
from .spaces import (
    SlabSpace,
    TraceSpace,
    build_trace_space,
    check_A1,
    default_gamma_predicate,
    interpolate,
    lift,
)

__all__ = [
    "ManufacturedSolution",
    "NoiseSpec",
    "ExperimentReport",
    "DEFAULT_CONFIG",
    "load_config",
    "make_noise",
    "error_norm",
    "region_errors",
    "eoc",
    "fit_slope",
    "run_convergence",
    "run_region_sweep",
    "run_worst_mode_study",
    "run_trace_experiment",
    "run_cm_study",
]


# ----------------------------------------------------------------------
# manufactured solutions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form wave solution sum_j amp_j cos(a_j t) cos(a_j x) with
    a_j = m_j pi / 4; every term solves the 1D wave equation exactly."""

    id: str
    terms: tuple[tuple[float, int], ...]  # (amplitude, mode index)

    def _freqs(self):
        return [(amp, m * math.pi / 4.0) for amp, m in self.terms]

    def u(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(t, x).shape)
        for amp, a in self._freqs():
            out = out + amp * np.cos(a * t) * np.cos(a * x)
        return out

    def dt_u(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(t, x).shape)
        for amp, a in self._freqs():
            out = out - amp * a * np.sin(a * t) * np.cos(a * x)
        return out

    def box_residual(self, t, x):
        """d_tt u - d_xx u, analytically zero for every separated term."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        out = np.zeros(np.broadcast(t, x).shape)
        for amp, a in self._freqs():
            out = out + amp * a**2 * (-np.cos(a * t) + np.cos(a * t)) * np.cos(a * x)
        return out

    def h3_norm(self, p: WeightParams) -> float:
        """Full H^3 norm over Q for a single-mode solution (closed form)."""
        if len(self.terms) != 1:
            raise ConfigurationError("analytic H^3 norm implemented for single modes")
        amp, m = self.terms[0]
        a = m * math.pi / 4.0
        t_lo, t_hi, R = p.t_lo, p.t_hi, p.R

        def int_cos2(a_, lo, hi):
            return 0.5 * (hi - lo) + (math.sin(2 * a_ * hi) - math.sin(2 * a_ * lo)) / (4 * a_)

        def int_sin2(a_, lo, hi):
            return 0.5 * (hi - lo) - (math.sin(2 * a_ * hi) - math.sin(2 * a_ * lo)) / (4 * a_)

        It = {0: int_cos2(a, t_lo, t_hi), 1: int_sin2(a, t_lo, t_hi)}
        Ix = {0: int_cos2(a, -R, 0.0), 1: int_sin2(a, -R, 0.0)}
        total = 0.0
        for pt in range(4):
            for px in range(4 - pt):
                total += amp**2 * a ** (2 * (pt + px)) * It[pt % 2] * Ix[px % 2]
        return math.sqrt(total)

    @staticmethod
    def mode(m: int, amplitude: float = 1.0) -> "ManufacturedSolution":
        return ManufacturedSolution(id=f"{amplitude:g}*phi_{m}", terms=((amplitude, m),))

    @staticmethod
    def reference() -> "ManufacturedSolution":
        """5 cos(pi t / 2) cos(pi x / 2), the second Fourier mode scaled by 5."""
        return ManufacturedSolution.mode(2, 5.0)

    @staticmethod
    def perturbed(eta: float) -> "ManufacturedSolution":
        return ManufacturedSolution(
            id=f"5*phi_2+{eta:g}*phi_3", terms=((5.0, 2), (eta, 3))
        )


# ----------------------------------------------------------------------
# noise
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"  # none | smooth | worst_mode
    theta: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "smooth", "worst_mode"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if not (1.0 <= self.theta <= 2.0):
            raise ConfigurationError(f"theta must lie in [1, 2], got {self.theta}")


def _restrict_to_omega(space: SlabSpace, coeffs: np.ndarray) -> np.ndarray:
    mask = space.fe_nodes <= -space.mesh.cfg.r + 1e-12
    w3 = space.reshape(coeffs.copy())
    w3[:, :, ~mask] = 0.0
    return w3.ravel()


def _omega_norm(space: SlabSpace, coeffs: np.ndarray) -> float:
    """Exact L2(omega_T) norm of a discrete field (Gauss per omega cell)."""
    mesh = space.mesh
    n_q = max(space.k, space.q) + 2
    pts, wts = gauss_rule(n_q)
    tb = space.time_basis.values(pts)
    total = 0.0
    w3 = space.reshape(coeffs)
    sb = space.space_basis.values(pts)
    for c in mesh.omega_cells:
        i0 = c * space.k
        local = w3[:, :, i0 : i0 + space.k + 1]  # (N, q+1, k+1)
        vals = np.einsum("nal,ag,lh->ngh", local, tb, sb)
        total += np.sum(vals**2 * (mesh.h_t * wts)[None, :, None] * (mesh.h_x * wts)[None, None, :])
    return math.sqrt(total)


def make_noise(
    spec: NoiseSpec,
    space: SlabSpace,
    u_exact: Callable,
    h: float,
    mode_u1: np.ndarray | None = None,
) -> np.ndarray:
    """Noise coefficient vector supported on the data region, scaled so that
    its L2(omega_T) norm equals h**theta exactly."""
    if spec.kind == "none":
        return np.zeros(space.global_dof_count)
    if spec.kind == "smooth":
        shape = interpolate(space, lambda t, x: u_exact(t, x) * np.cos(2 * np.pi * x))
    else:
        if mode_u1 is None:
            raise ConfigurationError("worst_mode noise requires an eigenmode shape")
        shape = np.asarray(mode_u1, dtype=float).copy()
    shape = _restrict_to_omega(space, shape)
    nrm = _omega_norm(space, shape)
    if nrm <= 0.0 or not np.isfinite(nrm):
        raise NumericalError("noise shape vanishes on the data region")
    return shape * (h**spec.theta / nrm)


# ----------------------------------------------------------------------
# region quadrature and error norms
# ----------------------------------------------------------------------


class _RegionQuadrature:
    """Tensor quadrature over all space-time cells: n_sub x n_sub subcells
    with 3x3 Gauss points each; region membership by pointwise predicate."""

    def __init__(self, mesh: SpaceTimeMesh, n_sub: int = 8):
        g, gw = gauss_rule(3)
        offs = ((np.arange(n_sub)[:, None] + g[None, :]).ravel()) / n_sub
        wts = np.tile(gw, n_sub) / n_sub
        t = (mesh.slabs[:, 0][:, None] + mesh.h_t * offs[None, :]).ravel()
        x = (mesh.spatial_nodes[:-1][:, None] + mesh.h_x * offs[None, :]).ravel()
        wt = np.tile(wts * mesh.h_t, mesh.N)
        wx = np.tile(wts * mesh.h_x, mesh.n_x)
        T, X = np.meshgrid(t, x, indexing="ij")
        self.t = T.ravel()
        self.x = X.ravel()
        self.w = np.outer(wt, wx).ravel()
        self.mesh = mesh

    def mask(self, region: Region) -> np.ndarray:
        return region_contains(self.mesh.params, region, self.t, self.x)


def region_errors(
    mesh: SpaceTimeMesh,
    u_exact: Callable | None,
    fields: dict[str, Callable],
    regions: Sequence[Region],
    n_sub: int = 8,
    quad: _RegionQuadrature | None = None,
) -> dict[str, dict[str, float]]:
    """L2 errors of several fields over several regions in one quadrature
    pass; returns {field_name: {region_label: error}}."""
    rq = quad or _RegionQuadrature(mesh, n_sub)
    exact = u_exact(rq.t, rq.x) if u_exact is not None else 0.0
    masks = {reg.label(): rq.mask(reg) for reg in regions}
    out = {}
    for name, f in fields.items():
        diff2 = (exact - f(rq.t, rq.x)) ** 2
        out[name] = {
            lbl: float(np.sqrt(np.sum(rq.w * diff2 * msk))) for lbl, msk in masks.items()
        }
    return out


def error_norm(
    mesh: SpaceTimeMesh,
    u_exact: Callable | None,
    field: Callable,
    region: Region,
    n_sub: int = 8,
) -> float:
    """L2(region) norm of (u_exact - field) by subdivision quadrature."""
    res = region_errors(mesh, u_exact, {"f": field}, [region], n_sub=n_sub)
    return res["f"][region.label()]


def eoc(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """Estimated orders of convergence; nan marks undefined rates."""
    if len(errors) != len(hs) or len(errors) < 2:
        raise ConfigurationError("need equally many errors and mesh widths, >= 2")
    if any(hs[i + 1] >= hs[i] for i in range(len(hs) - 1)):
        raise ConfigurationError("mesh widths must be strictly decreasing")
    rates = []
    for i in range(len(errors) - 1):
        if errors[i] <= 0.0 or errors[i + 1] <= 0.0:
            rates.append(float("nan"))
        else:
            rates.append(math.log(errors[i] / errors[i + 1]) / math.log(hs[i] / hs[i + 1]))
    return rates


def fit_slope(hs: Sequence[float], errors: Sequence[float], n_last: int = 3) -> float:
    """Least-squares slope of log(error) against log(h) over the last levels."""
    hs = np.asarray(hs, dtype=float)[-n_last:]
    errors = np.asarray(errors, dtype=float)[-n_last:]
    if np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

DEFAULT_CONFIG: dict = {
    "geometry": {
        "r": 0.75,
        "R": 1.0,
        "beta": 0.5,
        "eps": 0.05,
        "rho_fraction": 0.1,
        "delta_fraction": 0.1,
        "T": None,
        "time_interval": "symmetric",
    },
    "mesh": {"n_x": 8, "N": None, "levels": 4},
    "spaces": {
        "k": 1,
        "q": 1,
        "k_star": None,
        "q_star": None,
        "trace_space": {"family": "fourier_modes", "M": 2},
    },
    "forms": {
        "gamma": 1e-4,
        "use_trace_space": False,
        "penalties": {},
    },
    "solver": {"eig_tol": 1e-8, "eig_max_iter": 400, "eig_seed": 0},
    "experiment": {
        "solution": "reference",
        "noise": {"kind": "none", "theta": 2.0, "seed": 0},
        "kappa_list": [1.0, 0.75, 0.5, 0.25],
        "eta": 1e-3,
        "M": 2,
        "M_list": [2, 3, 4, 5, 6],
        "n_sub": 8,
        "pseudoconvexity_samples": 10000,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(overrides: dict | None = None) -> dict:
    cfg = _merge(DEFAULT_CONFIG, overrides or {})
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _geometry_from(config: dict) -> GeometryConfig:
    g = config["geometry"]
    return GeometryConfig(
        r=g["r"],
        R=g["R"],
        beta=g["beta"],
        eps=g["eps"],
        rho_fraction=g["rho_fraction"],
        delta_fraction=g["delta_fraction"],
        T=g["T"],
        time_interval=g["time_interval"],
    )


def _weights_from(config: dict) -> StabilizationWeights:
    f = config["forms"]
    return StabilizationWeights(gamma=f["gamma"], **f.get("penalties", {}))


def _solution_from(config: dict) -> ManufacturedSolution:
    name = config["experiment"]["solution"]
    if name == "reference":
        return ManufacturedSolution.reference()
    if name.startswith("mode:"):
        return ManufacturedSolution.mode(int(name.split(":")[1]), 5.0)
    if name.startswith("perturbed:"):
        return ManufacturedSolution.perturbed(float(name.split(":")[1]))
    raise ConfigurationError(f"unknown manufactured solution {name!r}")


def _ladder(config: dict) -> list[tuple[int, int]]:
    n_x0 = config["mesh"]["n_x"]
    N0 = config["mesh"]["N"] or n_x0
    levels = config["mesh"]["levels"]
    return [(n_x0 * 2**l, N0 * 2**l) for l in range(levels)]


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("UCWAVE_THREADS", "1")))
    except ValueError:
        return 1


# ----------------------------------------------------------------------
# reports
# ----------------------------------------------------------------------


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    solution_id: str = ""
    levels: list = field(default_factory=list)
    eoc_table: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def compute_eoc(self):
        if len(self.levels) < 2:
            return
        hs = [lv["h"] for lv in self.levels]
        cols = sorted(self.levels[0]["errors"].keys())
        for col in cols:
            errs = [lv["errors"][col] for lv in self.levels]
            self.eoc_table[col] = eoc(errs, hs)

    def to_json(self) -> str:
        def clean(o):
            if isinstance(o, dict):
                return {k: clean(v) for k, v in o.items()}
            if isinstance(o, (list, tuple)):
                return [clean(v) for v in o]
            if isinstance(o, (np.floating, float)):
                v = float(o)
                return v if math.isfinite(v) else str(v)
            if isinstance(o, (np.integer,)):
                return int(o)
            if isinstance(o, np.ndarray):
                return clean(o.tolist())
            return o

        payload = {
            "kind": self.kind,
            "solution": self.solution_id,
            "config": clean(self.config),
            "levels": clean(self.levels),
            "eoc": clean(self.eoc_table),
            "extras": clean(self.extras),
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        if not self.levels:
            return "level,h\n"
        cols = sorted(self.levels[0]["errors"].keys())
        header = ["level", "h"] + [f"err_{c}" for c in cols] + [f"eoc_{c}" for c in cols]
        lines = [",".join(header)]
        for i, lv in enumerate(self.levels):
            row = [str(i), f"{lv['h']:.16g}"]
            row += [f"{lv['errors'][c]:.16g}" for c in cols]
            for c in cols:
                rates = self.eoc_table.get(c, [])
                row.append(f"{rates[i - 1]:.16g}" if 0 < i <= len(rates) else "")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def save(self, outdir: str):
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "report.json"), "w") as fh:
            fh.write(self.to_json())
        with open(os.path.join(outdir, "table.csv"), "w") as fh:
            fh.write(self.to_csv())


# ----------------------------------------------------------------------
# core level solve
# ----------------------------------------------------------------------


def _solve_level(
    cfg: GeometryConfig,
    params: WeightParams,
    config: dict,
    n_x: int,
    N: int,
    weights: StabilizationWeights,
    trace: TraceSpace | None,
    solution: ManufacturedSolution,
    noise_spec: NoiseSpec,
    regions: Sequence[Region],
    mode_shape_factory: Callable | None = None,
):
    """Build, solve and measure one refinement level."""
    sp = config["spaces"]
    k, q = sp["k"], sp["q"]
    k_star = sp["k_star"] or k
    q_star = sp["q_star"] if sp["q_star"] is not None else q
    mesh = build_mesh(cfg, params, n_x, N)
    space = SlabSpace(mesh, k, q)
    dual = SlabSpace(mesh, k_star, q_star)

    noise_coeffs = None
    extras: dict = {}
    if noise_spec.kind == "worst_mode":
        mode_u1, eig_info = mode_shape_factory(mesh, space, dual)
        extras.update(eig_info)
        noise_coeffs = make_noise(noise_spec, space, solution.u, mesh.h_x, mode_u1)
    elif noise_spec.kind == "smooth":
        noise_coeffs = make_noise(noise_spec, space, solution.u, mesh.h_x)

    if noise_coeffs is not None:
        data = lambda t, x: solution.u(t, x) + space.eval_many(noise_coeffs, t, x)
    else:
        data = solution.u

    system = assemble_saddle(space, dual, weights, trace, data)
    x = solve(factorize(system), system.rhs)
    U, _, _ = system.layout.unpack(x)
    lifted = lift(space, U.u1)
    raw = lambda t, xq: space.eval_many(U.u1, t, xq)

    n_sub = config["experiment"]["n_sub"]
    quad = _RegionQuadrature(mesh, n_sub)
    table = region_errors(mesh, solution.u, {"raw": raw, "lift": lifted}, regions,
                          quad=quad)
    errors = {}
    for reg in regions:
        lbl = reg.label()
        errors[lbl] = table["raw"][lbl] if lbl == "omega" else table["lift"][lbl]
        errors[f"{lbl}_raw"] = table["raw"][lbl]

    # optimality sanity: the solve never fits the data worse than zero does
    misfit = region_errors(mesh, data, {"raw": raw}, [Region.omega_T()], quad=quad)
    zero_fit = region_errors(mesh, data, {"z": lambda t, xq: 0.0 * t},
                             [Region.omega_T()], quad=quad)
    extras["data_misfit"] = misfit["raw"]["omega"]
    extras["zero_misfit"] = zero_fit["z"]["omega"]

    return {
        "n_x": n_x,
        "N": N,
        "h": mesh.h_x,
        "errors": errors,
        "extras": extras,
    }


def _run_ladder(config, weights, trace, solution, noise_spec, regions,
                mode_factory=None):
    cfg = _geometry_from(config)
    params = derive_params(cfg)
    ladder = _ladder(config)
    workers = _max_workers()

    def work(pair):
        n_x, N = pair
        return _solve_level(cfg, params, config, n_x, N, weights, trace,
                            solution, noise_spec, regions, mode_factory)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            levels = list(pool.map(work, ladder))
    else:
        levels = [work(pair) for pair in ladder]
    return levels


_BASE_REGIONS = (Region.omega_T(), Region.B(), Region.complement_of_B(), Region.full())


# ----------------------------------------------------------------------
# drivers
# ----------------------------------------------------------------------


def run_convergence(config: dict, extra_regions: Sequence[Region] = ()) -> ExperimentReport:
    """Convergence study under h-refinement with the configured noise."""
    config = load_config(config)
    weights = _weights_from(config)
    solution = _solution_from(config)
    noise_spec = NoiseSpec(**config["experiment"]["noise"])
    if noise_spec.kind == "worst_mode":
        raise ConfigurationError(
            "worst_mode noise is driven by run_worst_mode_study"
        )
    trace = None
    if config["forms"]["use_trace_space"]:
        ts_cfg = config["spaces"]["trace_space"]
        trace = build_trace_space(_geometry_from(config), ts_cfg["M"], ts_cfg["family"])
    regions = tuple(_BASE_REGIONS) + tuple(extra_regions)
    levels = _run_ladder(config, weights, trace, solution, noise_spec, regions)
    report = ExperimentReport(kind="convergence", config=config,
                              solution_id=solution.id, levels=levels)
    report.compute_eoc()
    hs = [lv["h"] for lv in levels]
    report.extras["fitted_slope_B_raw"] = fit_slope(hs, [lv["errors"]["B_raw"] for lv in levels])
    report.extras["noise"] = {
        "kind": noise_spec.kind, "theta": noise_spec.theta, "seed": noise_spec.seed}
    for lv in levels:
        if lv["extras"]["data_misfit"] > lv["extras"]["zero_misfit"] * (1 + 1e-12):
            report.notes.append(
                f"level n_x={lv['n_x']}: data misfit exceeds the zero-field misfit"
            )
    return report


def run_region_sweep(config: dict, kappas: Sequence[float] | None = None) -> ExperimentReport:
    """Errors on the stretched regions B_kappa for a list of kappa values."""
    config = load_config(config)
    kappas = list(kappas if kappas is not None else config["experiment"]["kappa_list"])
    for kap in kappas:
        if not (0.0 < kap <= 1.0):
            raise ConfigurationError(f"kappa must lie in (0, 1], got {kap}")
    extra = [Region.B_kappa(k) for k in kappas if k != 1.0]
    report = run_convergence(config, extra_regions=extra)
    report.kind = "region-sweep"
    report.extras["kappas"] = kappas
    finest = {}
    for kap in kappas:
        lbl = "B" if kap == 1.0 else f"B_{kap:g}"
        finest[str(kap)] = report.eoc_table[f"{lbl}_raw"][-1]
    report.extras["finest_pair_eoc_by_kappa"] = finest
    return report


def run_worst_mode_study(config: dict) -> ExperimentReport:
    """Adversarial-noise study: per level, the smallest eigenpair of the
    stabilized system against the mass pencil provides the noise shape; the
    study re-solves with that noise and with the smooth noise at the same
    scaling and reports both fitted exponents."""
    config = load_config(config)
    weights = _weights_from(config)
    if weights.gamma <= 0.0 and not config["forms"]["use_trace_space"]:
        raise ConfigurationError("worst-mode study needs gamma > 0 or a trace space")
    solution = _solution_from(config)
    theta = config["experiment"]["noise"].get("theta", 2.0)
    seed = config["experiment"]["noise"].get("seed", 0)
    sol_cfg = config["solver"]

    eig_log: list[dict] = []

    def mode_factory(mesh, space, dual):
        pencil = spectral_system(space, dual, weights)
        blocks = mass_blocks(space, dual, pencil.layout)
        res = smallest_eigenpair(
            pencil, blocks, tol=sol_cfg["eig_tol"],
            max_iter=sol_cfg["eig_max_iter"], seed=sol_cfg["eig_seed"],
        )
        U, _, _ = pencil.layout.unpack(res.mode)
        quad = _RegionQuadrature(mesh, config["experiment"]["n_sub"])
        mass = region_errors(
            mesh, None, {"m": lambda t, x: space.eval_many(U.u1, t, x)},
            [Region.omega_T(), Region.B(), Region.complement_of_B()], quad=quad,
        )["m"]
        masses = {k: v**2 for k, v in mass.items()}
        info = {
            "lambda": res.lam,
            "eig_residual": res.residual,
            "eig_iterations": res.iterations,
            "mode_mass": masses,
            "mode_mass_ratio_omega_to_QminusB": masses["omega"] / masses["QminusB"],
        }
        eig_log.append(info)
        return U.u1, info

    worst_spec = NoiseSpec(kind="worst_mode", theta=theta, seed=seed)
    smooth_spec = NoiseSpec(kind="smooth", theta=theta, seed=seed)
    levels_w = _run_ladder(config, weights, None, solution, worst_spec,
                           _BASE_REGIONS, mode_factory)
    levels_s = _run_ladder(config, weights, None, solution, smooth_spec,
                           _BASE_REGIONS)

    report = ExperimentReport(kind="worst-mode", config=config,
                              solution_id=solution.id, levels=levels_w)
    report.compute_eoc()
    hs = [lv["h"] for lv in levels_w]
    s = min(config["spaces"]["k"], config["spaces"]["q"])
    slope_w = fit_slope(hs, [lv["errors"]["B_raw"] for lv in levels_w])
    slope_s = fit_slope(hs, [lv["errors"]["B_raw"] for lv in levels_s])
    report.extras.update(
        {
            "theta": theta,
            "eigen": eig_log,
            "lambdas": [e["lambda"] for e in eig_log],
            "alpha_hat_worst": slope_w / s,
            "alpha_hat_smooth": slope_s / s,
            "errors_B_smooth": [lv["errors"]["B_raw"] for lv in levels_s],
            "errors_B_worst": [lv["errors"]["B_raw"] for lv in levels_w],
        }
    )
    return report


def run_trace_experiment(
    config: dict,
    M: int | None = None,
    eta: float | None = None,
    trace_space: TraceSpace | None = None,
) -> ExperimentReport:
    """Lipschitz-recovery study with the finite-dimensional trace space.

    Refuses to run when the injectivity check of the trace family on the
    light-cone boundary set fails.
    """
    config = load_config(config)
    cfg = _geometry_from(config)
    if cfg.time_interval != "forward":
        raise ConfigurationError("the trace experiment runs on the forward interval")
    params = derive_params(cfg)
    M = M if M is not None else config["experiment"]["M"]
    eta = eta if eta is not None else config["experiment"]["eta"]
    trace = trace_space if trace_space is not None else build_trace_space(
        cfg, M, config["spaces"]["trace_space"]["family"])
    a1 = check_A1(trace, default_gamma_predicate(cfg, params.T))
    if not a1["holds"]:
        raise ConfigurationError(
            "the trace space fails the boundary-injectivity requirement"
            f" (margin {a1['margin']:.3e}); refusing to run"
        )
    weights = _weights_from(config)
    solution = (
        ManufacturedSolution.reference() if eta == 0.0
        else ManufacturedSolution.perturbed(eta)
    )
    noise_spec = NoiseSpec(**config["experiment"]["noise"])
    levels = _run_ladder(config, weights, trace, solution, noise_spec, _BASE_REGIONS)
    report = ExperimentReport(kind="trace", config=config,
                              solution_id=solution.id, levels=levels)
    report.compute_eoc()
    report.extras.update({"M": M, "eta": eta, "A1": a1})
    return report


def run_cm_study(config: dict, M_list: Sequence[int] | None = None) -> ExperimentReport:
    """Growth of the error constants with the trace-space dimension at fixed h.

    For each M the exact solution is 5 phi_M; one solve uses the minimal space
    span{phi_M}, the other the full family span{phi_1..phi_M}; the constants
    normalize the Q error by h^3 times the analytic H^3 norm of the solution.
    """
    config = load_config(config)
    cfg = _geometry_from(config)
    if cfg.time_interval != "forward":
        raise ConfigurationError("the constant study runs on the forward interval")
    params = derive_params(cfg)
    M_list = list(M_list if M_list is not None else config["experiment"]["M_list"])
    weights = _weights_from(config)
    n_x = config["mesh"]["n_x"]
    N = config["mesh"]["N"] or n_x
    gpred = default_gamma_predicate(cfg, params.T)

    sp = config["spaces"]
    k, q = sp["k"], sp["q"]
    if k != 2 or q != 2:
        raise ConfigurationError("the constant study is defined for k = q = 2")
    mesh = build_mesh(cfg, params, n_x, N)
    space = SlabSpace(mesh, k, q)
    dual = SlabSpace(mesh, sp["k_star"] or k, sp["q_star"] or q)
    quad = _RegionQuadrature(mesh, config["experiment"]["n_sub"])

    from .spaces import fourier_mode  # local import to avoid cycle noise

    rows = []
    for M in M_list:
        solution = ManufacturedSolution.mode(M, 5.0)
        h3 = solution.h3_norm(params)
        result = {}
        for label, funcs in (
            ("opt", [fourier_mode(M)]),
            ("full", [fourier_mode(m) for m in range(1, M + 1)]),
        ):
            ts = TraceSpace(funcs, params.t_lo, params.t_hi, cfg.R)
            a1 = check_A1(ts, gpred)
            if not a1["holds"]:
                raise ConfigurationError(
                    f"trace space ({label}, M={M}) fails boundary injectivity"
                )
            system = assemble_saddle(space, dual, weights, ts, solution.u)
            x = solve(factorize(system), system.rhs)
            U, _, _ = system.layout.unpack(x)
            err_q = region_errors(
                mesh, solution.u,
                {"raw": lambda t, xq: space.eval_many(U.u1, t, xq)},
                [Region.full()], quad=quad,
            )["raw"]["Q"]
            result[label] = err_q / (mesh.h_x**3 * h3)
        rows.append({"M": M, "C_opt": result["opt"], "C_full": result["full"],
                     "h": mesh.h_x, "h3_norm": h3})
    report = ExperimentReport(kind="cm-study", config=config, solution_id="5*phi_M")
    report.extras["table"] = rows
    return report


def run_geometry_check(config: dict) -> ExperimentReport:
    """Parameter derivation plus randomized pseudoconvexity verification."""
    config = load_config(config)
    cfg = _geometry_from(config)
    params = derive_params(cfg)
    rep = check_pseudoconvexity(
        params, config["experiment"]["pseudoconvexity_samples"],
        config["experiment"]["noise"]["seed"],
    )
    report = ExperimentReport(kind="check-geometry", config=config)
    report.extras = {
        "rho0": params.rho0,
        "rho1": params.rho1,
        "rho": params.rho,
        "delta": params.delta,
        "T": params.T,
        "pseudoconvexity": {
            "passed": rep.passed,
            "n_samples": rep.n_samples,
            "hessian_max_dev": rep.hessian_max_dev,
            "grad_min_margin": rep.grad_min_margin,
            "message": rep.message,
        },
    }
    if not rep.passed:
        raise NumericalError(f"pseudoconvexity check failed: {rep.message}")
    return report
