"""From material, object and frequency to a TensorBundle.

Two routes: "analytic" (sphere only, series solution) and "fem" (edge
elements on a generated mesh).  The model is "full", "eddy" or "auto"
(eddy-current model when the regime classifier says so).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (ContrastSet, Excitation, MaterialSpec, ObjectPlacement, Rank2TensorC, Rank3TensorC, Regime,
                   classify_regime, derive_contrasts)
from .fem import SolverParams, ThetaProblem, VarthetaProblem, solve_phi_eddy
from .mesh import BoundaryLayer, UnitShape, generate_mesh
from .oracles import (SphereSeriesParams, polya_szego_ellipsoid, polya_szego_sphere, sphere_mpt_eddy,
                      sphere_mpt_full)
from .tensors import TensorBundle

log = logging.getLogger("mptwave.pipeline")

MODELS = ("auto", "full", "eddy")
SOLVERS = ("analytic", "fem")


@dataclass(frozen=True)
class MeshSettings:
    """Defaults give the desk-scale sphere mesh (about 6e4 edges) with a
    boundary layer thin enough for the skin depth at nu_i = 1000, mu_r = 100."""

    resolution: float = 0.2
    truncation_radius: float = 5.0
    boundary_layer: float = 0.0015  # first layer thickness, 0 for none
    layer_growth: float = 1.3
    exterior_stretch: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class RunSettings:
    solver: str = "analytic"
    model: str = "auto"
    mesh: MeshSettings = field(default_factory=MeshSettings)
    params: SolverParams = field(default_factory=lambda: SolverParams(tol=1e-8, max_iter=1000))

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")


@dataclass(frozen=True)
class RunResult:
    omega: float
    regime: Regime
    model: str
    contrasts: ContrastSet
    bundle: TensorBundle
    oracle: complex | None
    residual: float
    iterations: int


def choose_model(settings: RunSettings, regime: Regime) -> str:
    if settings.model != "auto":
        return settings.model
    return "eddy" if regime is Regime.EDDY_CURRENT else "full"


def oracle_value(shape: UnitShape, model: str, cs: ContrastSet, alpha: float):
    """Series value m of M = m I for spheres, None otherwise."""
    if shape.kind != "sphere":
        return None
    if model == "eddy":
        return sphere_mpt_eddy(cs.mu_r, cs.nu_i, alpha)
    return sphere_mpt_full(SphereSeriesParams(mu_r=cs.mu_r, eps_r=cs.eps_r, k_alpha=cs.k_alpha), alpha)


def scalar_tensor(shape: UnitShape, contrast: complex, alpha: float) -> Rank2TensorC:
    if shape.kind == "sphere":
        return polya_szego_sphere(contrast, alpha)
    if shape.kind == "ellipsoid":
        return polya_szego_ellipsoid(shape.semi_axes, contrast, alpha)
    raise ValueError(f"no closed form for shape {shape.kind!r}")


_MESHES: dict = {}


def cached_mesh(shape: UnitShape, ms: MeshSettings):
    key = (shape, ms)
    if key not in _MESHES:
        layer = BoundaryLayer(ms.boundary_layer, ms.layer_growth) if ms.boundary_layer > 0 else None
        _MESHES[key] = generate_mesh(shape, ms.truncation_radius, ms.resolution, boundary_layer=layer,
                                     exterior_stretch=ms.exterior_stretch, seed=ms.seed)
    return _MESHES[key]


def is_trivial(material: MaterialSpec) -> bool:
    mat = material
    return math.isclose(mat.mu_star, MaterialSpec.from_relative().mu_star, rel_tol=1e-15) and \
        mat.sigma_star == 0 and math.isclose(mat.eps_star, MaterialSpec.from_relative().eps_star, rel_tol=1e-15)


def compute(material: MaterialSpec, shape: UnitShape, placement: ObjectPlacement, omega: float,
            settings: RunSettings = RunSettings()) -> RunResult:
    exc = Excitation(omega)
    cs = derive_contrasts(material, exc, placement)
    regime = classify_regime(cs, exc, placement)
    model = choose_model(settings, regime)
    prov = {"omega": repr(omega), "regime": str(regime), "model": model, "solver": settings.solver,
            "shape": shape.kind, "alpha": repr(placement.alpha), "mu_r": repr(cs.mu_r),
            "eps_r": repr(cs.eps_r), "nu": repr(cs.nu), "k_alpha": repr(cs.k_alpha)}
    oracle = oracle_value(shape, model, cs, placement.alpha)
    if is_trivial(material):
        return RunResult(omega, regime, model, cs, TensorBundle.zeros(prov), oracle, 0.0, 0)
    if settings.solver == "analytic":
        bundle = _analytic_bundle(shape, model, cs, placement.alpha, oracle, prov)
        return RunResult(omega, regime, model, cs, bundle, oracle, 0.0, 0)
    return _fem_run(material, shape, placement, exc, cs, regime, model, oracle, settings, prov)


def _analytic_bundle(shape, model, cs, alpha, oracle, prov):
    if oracle is None:
        raise ValueError("the analytic route only covers spheres")
    M = Rank2TensorC.identity(oracle)
    # the series gives M only; it is stored in N with a zero C_check
    B = Rank2TensorC.zeros() if model == "eddy" else scalar_tensor(shape, cs.eps_r, alpha)
    z = Rank2TensorC.zeros()
    prov = dict(prov, note="analytic sphere: N holds M, A and C are not resolved")
    return TensorBundle(A=z, B=B, C=Rank3TensorC.zeros(), C_check=z, N=M, M=M, R_msi_norm=0.0, provenance=prov)


def _fem_run(material, shape, placement, exc, cs, regime, model, oracle, settings, prov):
    mesh = cached_mesh(shape, settings.mesh)
    params = settings.params
    if model == "eddy":
        cs_model = ContrastSet.eddy(cs.nu_i, cs.mu_r)
        problem = ThetaProblem(mesh, cs_model, "eddy", params)
        scalars = [solve_phi_eddy(i, mesh, params) for i in (1, 2, 3)]
    else:
        cs_model = cs
        problem = ThetaProblem(mesh, cs, "full", params)
        scalar_problem = VarthetaProblem(mesh, cs.eps_r, params)
        scalars = [scalar_problem.solve(i) for i in (1, 2, 3)]
    thetas = problem.solve_all()
    diags = [f.diagnostics for f in thetas] + [s.diagnostics for s in scalars]
    residual = max(d.get("residual", 0.0) for d in diags)
    iterations = sum(d.get("iterations", 0) for d in diags)
    prov = dict(prov, edges=str(mesh.n_edges), edge_family=params.edge_family,
                resolution=repr(settings.mesh.resolution), residual=f"{residual:.3e}",
                iterations=str(iterations))
    bundle = TensorBundle.from_fields(thetas, scalars, cs_model, exc.k, placement.alpha, provenance=prov)
    log.info("fem omega=%g model=%s edges=%d iterations=%d residual=%.2e M11=%s", exc.omega, model,
             mesh.n_edges, iterations, residual, np.asarray(bundle.M)[0, 0])
    return RunResult(exc.omega, regime, model, cs, bundle, oracle, residual, iterations)
