"""Finite element laboratory for domain perturbation of parabolic problems.

The package solves linear parabolic equations and parabolic variational
inequalities with P1 finite elements on families of perturbed domains
(cracked disks, dumbbells, disks with holes), embeds all solutions into a
common hold-all ball, and measures whether the perturbed solutions converge
to the declared limit against a calibrated discretization floor.
"""

__version__ = "0.1.0"

from .mesh import (
    Mesh, MeshError, DomainFamily,
    generate_cracked_disk, generate_dumbbell, generate_fixed_hole,
    generate_disk, generate_rectangle, locate_point, read_mesh, write_mesh,
)
from .fem import (
    Coefficient, CoefficientSet, FunctionSpace, FEField, AssemblyError,
    SolverError, assemble_form, assemble_mass, assemble_load, solve_linear,
    estimate_form_constants, interpolate,
)
from .parabolic import (
    TimeGrid, Trajectory, TimeProfile, ParabolicProblem, solve_parabolic,
    energy_estimate_check, weak_residual, integration_by_parts_check,
    read_trajectory, write_trajectory,
)
from .vi import (
    ConvexConstraint, VIProblem, project_H, solve_parabolic_vi,
    weak_vi_residual, feasibility_report,
)
from .mosco import (
    HoldallGrid, EmbeddedField, EmbeddedTrajectory, MoscoDefectSeries,
    embed, embed_trajectory, m1_defect, m1_defect_time, stretch_time,
    restrict_time, mollify_time, pou_recovery, capacity, write_defect_series,
)
from .study import (
    StudyConfig, ConvergenceReport, run_dirichlet_study, run_neumann_study,
    run_vi_study, fit_rate, write_report,
)
