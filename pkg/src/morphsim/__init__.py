"""Shape simulation of self-morphing bilayer plates on quadrilateral meshes.

Typical use::

    from morphsim import rect_design, simulate, fit_bend_radius
    result = simulate(rect_design(delta_eps=0.02))
    fit_bend_radius(result.mesh, (1, 0), thickness=1.0, delta_eps=0.02).radius
"""
from .analysis import BendReport, fit_bend_radius, fit_circle_3d, fit_helix, helix_metrics, rigid_align, verify_tables
from .designs import (DesignSpec, LayerParams, finite_strain_rect, flower_design, grass_design, rect_design,
                      rotate_design, seashell_design)
from .energy import ShellEnergy, Weights, assemble
from .errors import FitFailure, MeshError, MorphError, SolverError
from .material import LayerSpec, TargetForms, pure_bending_targets, speed_from_strain, strain_from_speed, target_forms
from .quadmesh import QuadMesh, grid_mesh, load_obj, save_obj
from .simulate import SimulationResult, simulate
from .solver import SolverConfig, SolverReport, lm_minimize

__version__ = "0.1.0"
