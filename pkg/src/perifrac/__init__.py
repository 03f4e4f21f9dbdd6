"""State-based peridynamic fracture simulator and verification harness."""

from .config import SCENARIO_PRESETS, ScenarioConfig, build_scenario, parse_config
from .diagnostics import (
    CSV_FIELDS,
    DiagnosticRecord,
    StabilityReport,
    convergence_rate,
    crack_length,
    damage_field,
    energies,
    fracture_energies,
    l2_difference,
    l2_norm,
    snapshot_record,
    stability_report,
)
from .errors import ConfigError, NumericalError, PropertyViolation
from .geometry import (
    DomainSpec,
    Grid,
    NeighborTable,
    boundary_weight,
    build_grid,
    build_neighbors,
    project_to_cells,
)
from .integrator import (
    CollarCondition,
    FieldState,
    RunResult,
    Scenario,
    TimePlan,
    run,
)
from .materials import (
    DilatationalPotential,
    InfluenceFunction,
    MaterialModel,
    TensilePotential,
    ball_volume,
    critical_bond_strain,
    influence_moment,
    lipschitz_l3,
    material_preset,
)
from .operators import ForceAssembler, hydrostatic_strain
from .output import read_csv, snapshot_path, write_csv, write_vtk
from .scenarios import (
    CRACK_PRESETS,
    build_bending_scenario,
    build_crack_scenario,
    crack_preset_grid,
    manufactured_scenario,
    relaxation_scenario,
)
from .verification import (
    lipschitz_l2_suite,
    oracle_equivalence_suite,
    projection_error_suite,
    relaxation_stability,
    spatial_convergence_study,
    temporal_convergence_study,
)

__version__ = "0.1.0"
