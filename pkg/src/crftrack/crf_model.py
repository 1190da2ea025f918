"""Per-frame CRF assembly: filtering, dummy padding, shared-weight energies.

Every frame yields a graph with exactly `node_budget` variables. Tracklets
are first split by score and history thresholds; of the remaining candidates
the lowest-scoring ones become CRF nodes (confident tracklets need no joint
reasoning) and the rest stay active without entering the graph. Dummy
variables with all-zero tables pad the graph to the fixed size.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import FormatError, ValidationError
from .factor_graph import BpConfig, FactorGraph, PairFactor, exact_inference, max_product
from .features import FeatureParams, FrameContext, binary_feature, unary_feature


@dataclass(frozen=True)
class ModelParams:
    """CRF weights, feature hyperparameters, and workflow thresholds."""

    theta_u: float = 0.98
    theta_b: float = 0.12
    features: FeatureParams = field(default_factory=FeatureParams)
    node_budget: int = 10
    pre_threshold: float = 0.4
    short_threshold: float = 0.5
    min_crf_length: int = 3

    def __post_init__(self):
        if self.node_budget < 1:
            raise ValidationError("node_budget must be >= 1")
        for name in ("pre_threshold", "short_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")


@dataclass
class FrameAssembly:
    """One frame's CRF plus the tracklets routed around it.

    node_map sends variable indices 0..n_real-1 to tracklet ids; the
    remaining variables up to node_budget are dummies. unary_phi and pair_phi
    hold the raw (weight-free) feature tables for the real part of the graph,
    which training reuses under candidate weights.
    """

    graph: FactorGraph
    node_map: dict[int, int]
    bypass_active: list[int]
    bypass_inactive: list[int]
    unary_phi: np.ndarray
    pair_phi: list[tuple[int, int, np.ndarray]]

    @property
    def real_ids(self) -> list[int]:
        return [self.node_map[i] for i in range(len(self.node_map))]


def compute_feature_tables(windows, params: ModelParams, ctx: FrameContext):
    """Split windows into CRF nodes and bypasses; compute feature tables.

    Returns (nodes, unary_phi, pair_phi, bypass_active, bypass_inactive)
    where nodes is the selected window list ordered by tracklet id.
    """
    ids = [w.tracklet_id for w in windows]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate tracklet ids in frame")

    bypass_active, bypass_inactive, candidates = [], [], []
    for w in windows:
        if w.score < params.pre_threshold:
            bypass_inactive.append(w.tracklet_id)
        elif w.length < params.min_crf_length:
            if w.score < params.short_threshold:
                bypass_inactive.append(w.tracklet_id)
            else:
                bypass_active.append(w.tracklet_id)
        else:
            candidates.append(w)

    # Over budget: the highest-score candidates are filtered out and simply
    # stay active. Ties break toward the smaller tracklet id entering the CRF.
    candidates.sort(key=lambda w: (w.score, w.tracklet_id))
    if len(candidates) > params.node_budget:
        bypass_active.extend(w.tracklet_id for w in candidates[params.node_budget:])
        candidates = candidates[:params.node_budget]
    nodes = sorted(candidates, key=lambda w: w.tracklet_id)

    fp = params.features
    if nodes:
        unary_phi = np.array([[unary_feature(w, 0, fp), unary_feature(w, 1, fp)]
                              for w in nodes])
    else:
        unary_phi = np.zeros((0, 2))
    pair_phi = []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            table = np.zeros((2, 2))
            table[1, 1] = binary_feature(nodes[a], nodes[b], (1, 1), fp, ctx)
            pair_phi.append((a, b, table))

    return nodes, unary_phi, pair_phi, sorted(bypass_active), sorted(bypass_inactive)


def graph_from_features(unary_phi, pair_phi, theta_u, theta_b, num_vars=None):
    """Energy graph E = theta * phi; optionally padded with dummy variables."""
    n_real = unary_phi.shape[0]
    if num_vars is None:
        num_vars = n_real
    if num_vars < n_real:
        raise ValidationError(f"cannot fit {n_real} real nodes into {num_vars} variables")
    unary = np.zeros((num_vars, 2))
    unary[:n_real] = theta_u * unary_phi
    mask = np.zeros(num_vars, dtype=bool)
    mask[:n_real] = True
    pairs = [PairFactor(a, b, theta_b * tbl) for a, b, tbl in pair_phi]
    return FactorGraph(num_vars=num_vars, unary=unary, pairs=pairs, real_mask=mask)


def assemble_frame_graph(windows, params: ModelParams, ctx: FrameContext) -> FrameAssembly:
    """Build the fixed-size CRF for one frame of tracking hypotheses."""
    nodes, unary_phi, pair_phi, bypass_active, bypass_inactive = \
        compute_feature_tables(windows, params, ctx)
    graph = graph_from_features(unary_phi, pair_phi, params.theta_u, params.theta_b,
                                num_vars=params.node_budget)
    node_map = {i: w.tracklet_id for i, w in enumerate(nodes)}
    return FrameAssembly(graph=graph, node_map=node_map,
                         bypass_active=bypass_active, bypass_inactive=bypass_inactive,
                         unary_phi=unary_phi, pair_phi=pair_phi)


def decide_inactivation(windows, params: ModelParams, ctx: FrameContext,
                        inference: str = "loopy-bp",
                        bp: BpConfig | None = None) -> dict[int, int]:
    """Label every tracklet in the frame: 1 keeps it active, 0 inactivates.

    CRF nodes get their MAP labels (exact enumeration or loopy max-product);
    bypassed tracklets get their threshold decisions. Dummy variables produce
    no entries.
    """
    assembly = assemble_frame_graph(windows, params, ctx)
    if inference == "exact":
        result = exact_inference(assembly.graph)
    elif inference == "loopy-bp":
        result = max_product(assembly.graph, bp or BpConfig())
    else:
        raise ValidationError(f"unknown inference mode {inference!r}")

    labels = {tid: int(result.map_labels[vi]) for vi, tid in assembly.node_map.items()}
    labels.update((tid, 1) for tid in assembly.bypass_active)
    labels.update((tid, 0) for tid in assembly.bypass_inactive)
    return labels


def labeling_energy(assembly: FrameAssembly, labels: dict[int, int]) -> float:
    """Total energy of a labeling of the real nodes; exp(-E)/Z is its probability."""
    var_label = {}
    for vi, tid in assembly.node_map.items():
        if tid not in labels:
            raise ValidationError(f"labeling misses real node for tracklet {tid}")
        var_label[vi] = labels[tid]
    energy = 0.0
    for vi, y in var_label.items():
        energy += float(assembly.graph.unary[vi, y])
    for pf in assembly.graph.pairs:
        energy += float(pf.table[var_label[pf.i], var_label[pf.j]])
    return energy


# --------------------------------------------------------------------------
# Parameter files: flat key=value text. The shipped default reproduces the
# published weights and workflow constants.
# --------------------------------------------------------------------------

_FLOAT_KEYS = ("theta_u", "theta_b", "alpha1", "alpha2", "beta", "pre_threshold",
               "short_threshold", "high_score_cut", "epsilon_dl", "damping",
               "tolerance")
_INT_KEYS = ("node_budget", "max_iterations")
PARAM_KEYS = _FLOAT_KEYS + _INT_KEYS


def save_params(path, params: ModelParams, bp: BpConfig | None = None):
    bp = bp or BpConfig()
    values = {
        "theta_u": params.theta_u,
        "theta_b": params.theta_b,
        "alpha1": params.features.alpha1,
        "alpha2": params.features.alpha2,
        "beta": params.features.beta,
        "node_budget": params.node_budget,
        "pre_threshold": params.pre_threshold,
        "short_threshold": params.short_threshold,
        "high_score_cut": params.features.high_score_cut,
        "epsilon_dl": params.features.epsilon_dl,
        "damping": bp.damping,
        "max_iterations": bp.max_iterations,
        "tolerance": bp.tolerance,
    }
    with open(path, "w", encoding="ascii") as fh:
        for key in PARAM_KEYS:
            fh.write(f"{key}={values[key]}\n")


def _parse_param_lines(lines, source="<params>"):
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{source}: expected key=value, got {line!r}", line=lineno)
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in PARAM_KEYS:
            raise FormatError(f"{source}: unknown parameter {key!r}", line=lineno)
        if key in values:
            raise FormatError(f"{source}: duplicate parameter {key!r}", line=lineno)
        try:
            values[key] = int(text) if key in _INT_KEYS else float(text)
        except ValueError:
            raise FormatError(f"{source}: bad value for {key!r}: {text!r}", line=lineno)
    missing = [k for k in PARAM_KEYS if k not in values]
    if missing:
        raise FormatError(f"{source}: missing parameters {missing}")
    return values


def _build_params(values) -> tuple[ModelParams, BpConfig]:
    features = FeatureParams(alpha1=values["alpha1"], alpha2=values["alpha2"],
                             beta=values["beta"], high_score_cut=values["high_score_cut"],
                             epsilon_dl=values["epsilon_dl"])
    params = ModelParams(theta_u=values["theta_u"], theta_b=values["theta_b"],
                         features=features, node_budget=values["node_budget"],
                         pre_threshold=values["pre_threshold"],
                         short_threshold=values["short_threshold"])
    bp = BpConfig(max_iterations=values["max_iterations"],
                  tolerance=values["tolerance"], damping=values["damping"])
    return params, bp


def load_params(path) -> tuple[ModelParams, BpConfig]:
    """Read a parameter file and split it into model and inference settings."""
    with open(path, encoding="ascii") as fh:
        return _build_params(_parse_param_lines(fh, source=str(path)))


def default_params_text() -> str:
    return resources.files("crftrack.data").joinpath("default_params.txt").read_text("ascii")


def default_params() -> tuple[ModelParams, BpConfig]:
    """The shipped defaults: published weight values and workflow constants."""
    return _build_params(_parse_param_lines(default_params_text().splitlines(),
                                            source="default_params.txt"))


def with_weights(params: ModelParams, theta_u: float, theta_b: float) -> ModelParams:
    """Copy of params with new CRF weights (feature hyperparameters untouched)."""
    return replace(params, theta_u=theta_u, theta_b=theta_b)
