"""Construction of systems, fields and observables from validated config blocks."""

from __future__ import annotations

import numpy as np

from .fields import (Observable, Roof, VerticalField, ZeroField, benchmark_field,
                     benchmark_observable, constant_observable, coordinate_observable,
                     lorenz_rho_field, trig_observable)
from .flow_core import CatSuspension, FlowSystem, lorenz63
from .symbolic import SftSystem


def build_roof(sys_cfg: dict) -> Roof:
    if sys_cfg["roof_eps"] == 0.0:
        return Roof.constant(sys_cfg["roof_base"])
    r = Roof.default(sys_cfg["roof_eps"])
    if sys_cfg["roof_base"] != 1.0:
        r = Roof(sys_cfg["roof_base"], r.terms)
    return r


def build_perturbation(sys_cfg: dict, system: FlowSystem):
    kind = sys_cfg["perturbation"]
    c = sys_cfg["perturbation_scale"]
    if kind == "zero":
        return ZeroField(system.dim)
    if kind == "flow":
        return system.base_field * c if c != 1.0 else system.base_field
    if kind == "vertical":
        return VerticalField(c)
    if isinstance(system, CatSuspension):
        X = benchmark_field(system.roof)
    else:
        X = lorenz_rho_field()
    return X * c if c != 1.0 else X


def build_observable(sys_cfg: dict, system: FlowSystem) -> Observable:
    kind = sys_cfg["observable"]
    if kind == "constant":
        return constant_observable(1.0, system.dim)
    if isinstance(system, CatSuspension):
        if kind == "benchmark":
            return benchmark_observable(system.roof)
        if kind == "cos_x1":
            return trig_observable((1, 0))
        if kind == "cos_x2":
            return trig_observable((0, 1))
        return coordinate_observable(2)
    if kind in ("benchmark", "height"):
        return coordinate_observable(2)
    if kind == "cos_x1":
        return coordinate_observable(0)
    return coordinate_observable(1)


def build_system(cfg) -> tuple[FlowSystem, object, Observable]:
    """``(system with perturbation attached at parameter a, X, A)``."""
    s = cfg["system"]
    if s["kind"] == "cat":
        base = CatSuspension(build_roof(s))
    else:
        base = lorenz63()
    X = build_perturbation(s, base)
    system = base.with_perturbation(X).with_parameter(s["a"])
    return system, X, build_observable(s, system)


def build_sft(cfg) -> SftSystem:
    y = cfg["symbolic"]
    return SftSystem(np.array(y["tau"]), y["memory"], psi=np.array(y["psi"], dtype=float),
                     phi=np.array(y["phi"], dtype=float), psi_min=y["psi_min"])
