"""Online allocation of reusable resources.

Simulation and algorithms for online b-matching and assortment offering when
allocated units return after random usage durations: a deterministic
fractional guide driven by fluid reusability, randomized-rounding policies
built on it, classic baselines, an exact availability recursion with its
Monte Carlo twin, a tiny-instance clairvoyant oracle, and a batch CLI.
"""

from .model import (
    Arrival,
    Instance,
    InstanceError,
    Resource,
    RunRecord,
    SamplePath,
    UsageDistribution,
    draw_sample_path,
    load_instance,
    save_instance,
)
from .fluid import (
    FluidTrace,
    PointProcessSpec,
    augment_zero_set,
    compare_monotone,
    fluid_availability,
    simulate_random_process,
)
from .guide import FluidState, FractionalMatch, fluid_update, match_arrival, run_galg
from .rounding import DeltaSchedule, availability_estimate, run_alg
from .assortment import (
    AssortmentPlan,
    ChoiceContext,
    MatchedCollection,
    MNLChoiceModel,
    TableChoiceModel,
    best_assortment,
    probability_match,
    run_astalg,
    run_astgalg,
)
from .benchmarks import (
    certificate_check,
    clairvoyant_dp,
    DPOracle,
    exact_policy_value,
    run_greedy,
    run_ib,
    run_rba,
)
from .generators import generate, golden_suite

__version__ = "0.1.0"

__all__ = [
    "Arrival", "Instance", "InstanceError", "Resource", "RunRecord", "SamplePath",
    "UsageDistribution", "draw_sample_path", "load_instance", "save_instance",
    "FluidTrace", "PointProcessSpec", "augment_zero_set", "compare_monotone",
    "fluid_availability", "simulate_random_process",
    "FluidState", "FractionalMatch", "fluid_update", "match_arrival", "run_galg",
    "DeltaSchedule", "availability_estimate", "run_alg",
    "AssortmentPlan", "ChoiceContext", "MatchedCollection", "MNLChoiceModel",
    "TableChoiceModel", "best_assortment", "probability_match", "run_astalg",
    "run_astgalg",
    "certificate_check", "clairvoyant_dp", "DPOracle", "exact_policy_value",
    "run_greedy", "run_ib", "run_rba",
    "generate", "golden_suite",
    "__version__",
]
