"""Variable speed random walks on rooted metric trees.

A tree plus a positive vertex measure determines a continuous time walk:
conductance 1/length per edge, jump rates conductance / (2 * vertex mass).
The package builds such trees, runs the walk singly or in ensembles,
evaluates the classical exact formulas (scale, green kernel, occupation,
heat kernel, entrance times) against independent solvers, and measures
convergence of walk laws across refining tree families.
"""

from .tree import (
    FourPointReport,
    MeasureError,
    RootedMetricTree,
    SpeedMeasure,
    TreeError,
    branch_closure,
    build_tree,
    check_four_point,
    discretize,
    load_tree,
    lower_mass,
    save_tree,
    spanned_subtree,
)
from .walk import (
    ChainError,
    StopRule,
    WalkChain,
    WalkPath,
    batch_simulate,
    build_chain,
    dirichlet_energy,
    export_paths_csv,
    generator_apply,
    max_displacement,
    occupation_times,
    simulate,
)
from .exact import (
    AtomLaw,
    HeatKernelResult,
    OracleError,
    atom_law,
    capacity,
    capacity_variational,
    expected_hitting,
    green_kernel,
    harmonic_extension,
    heat_kernel,
    hit_bound,
    hitting_prob,
    occupation_functional,
    occupation_solve,
    speed_bound,
    tree_energy,
)
from .measures import (
    ConvergenceReport,
    ConvergenceRow,
    FiniteAtomMeasure,
    fdd_compare,
    gh_vague_report,
    hausdorff_distance,
    kr_distance,
    polynomial_lower_bound,
    prohorov,
    tree_metric,
)
from .families import (
    CoalescentSpec,
    CoalescentTree,
    Excursion,
    FamilyError,
    GluedTree,
    GWSample,
    KestenSample,
    OffspringLaw,
    binary_tree,
    coalescent_speed_measure,
    coalescent_tree,
    degree_measure,
    excursion_distance,
    glue_excursion,
    gw_conditioned,
    kesten_excursion,
    merge_rate,
    offspring_custom,
    offspring_geometric,
    offspring_poisson,
    reflect_path,
    stone_tq,
    stone_vertex,
)
from .harness import (
    CheckRecord,
    ConfigError,
    ExperimentConfig,
    EXPERIMENTS,
    RunArtifacts,
    SuiteResult,
    run_experiment,
    stone_level,
)

__version__ = "0.1.0"
