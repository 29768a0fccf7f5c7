"""Multiscale multicrystal benchmark corpus and evaluation harness.

Builds spherical supercells of ten reference materials, renders them in ten
quasi-uniform orientations, annotates each pose with a structured property
record, assembles Spatial-Exclusion and Compositional-Exclusion splits, and
scores model responses with a physically grounded metric suite.  Everything
runs fully offline against the bundled mock endpoints.
"""

from .annotation import AnnotationRecord, annotate, read_xyz, write_xyz
from .corpus import CorpusIndex, generate_corpus, load_corpus
from .gateway import ModelEndpoint, Prompt, build_prompt, parse_response, query
from .lattice import (
    MultiplicityMatrix,
    Supercell,
    generate_supercell,
    lattice_matrix,
    select_multiplicity,
)
from .materials import ElementData, MaterialSpec, element_data, load_materials
from .metrics import (
    PredictionRecord,
    angle_abs_error,
    correlation_shift,
    format_faithfulness,
    group_stats,
    hallucination_score,
    pearson,
    per_example_mean,
    percent_error,
    physics_compliance,
    prediction_consistency,
    space_group_match,
    transfer_report,
)
from .protocols import (
    BenchmarkInstance,
    EntryRef,
    aggregate,
    build_ce_instances,
    build_se_instances,
)
from .rendering import RenderConfig, project, rasterize, render_cell
from .rotation import fibonacci_axes, rodrigues, rotate_about_centroid

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "BenchmarkInstance",
    "CorpusIndex",
    "ElementData",
    "EntryRef",
    "MaterialSpec",
    "ModelEndpoint",
    "MultiplicityMatrix",
    "PredictionRecord",
    "Prompt",
    "RenderConfig",
    "Supercell",
    "aggregate",
    "angle_abs_error",
    "annotate",
    "build_ce_instances",
    "build_prompt",
    "build_se_instances",
    "correlation_shift",
    "element_data",
    "fibonacci_axes",
    "format_faithfulness",
    "generate_corpus",
    "generate_supercell",
    "group_stats",
    "hallucination_score",
    "lattice_matrix",
    "load_corpus",
    "load_materials",
    "parse_response",
    "pearson",
    "per_example_mean",
    "percent_error",
    "physics_compliance",
    "prediction_consistency",
    "project",
    "query",
    "rasterize",
    "read_xyz",
    "render_cell",
    "rodrigues",
    "rotate_about_centroid",
    "select_multiplicity",
    "space_group_match",
    "transfer_report",
    "write_xyz",
]
