"""The 63-dimensional feature map over (belief, operation) pairs.

Every softmax policy in this package scores operations as a weighted sum of
these features.  The catalog order is fixed and versioned: weight vectors
index into it.

Conventions
-----------
* Click-only features are exactly 0 on the termination operation, and
  termination-only features are exactly 0 on clicks.
* Stopping-condition features (the "you could stop now" family) are -1 on
  clicks while their condition holds, 0 otherwise.
* Satisficing (`hs_*`) and pruning (`hp_*`) threshold features live on the
  termination operation: -1 when the best expected path return is above
  (resp. below) the threshold.
* Preference indicators are +1, avoidance indicators -1.

Several catalog names have no prose definition anywhere; their
implementations here are plain-reading reconstructions and are flagged in
the entry docstrings below.

Scaling: policies consume the *normalized* feature map, where each entry is
divided by a fixed scale constant derived from the reward configuration
(attainable path-sum range for expected-return features, half the reward
range for value/uncertainty features, attainable maxima for within-trial
counts) and the four cross-trial counters are divided additionally by the
number of completed trials, turning them into per-trial frequencies.  The
reference weight presets are only scale-consistent with this map.  Raw
values remain available via feature_matrix(..., normalized=False).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import (
    ALL_NODES,
    ANCESTORS,
    BRANCH,
    CHILDREN,
    DESCENDANTS,
    IMMEDIATES,
    LEVEL,
    OUTERS,
    PARENT,
    PATHS,
    PATHS_THROUGH,
    SIBLINGS,
    TERMINATE,
    BeliefState,
    available_operations,
    branch_outers,
)

MASK_VERSION = "v1"

N_FEATURES = 63

SATISFICING_THRESHOLDS = (0, 8, 16, 24, 32, 40, 48)
PRUNING_THRESHOLDS = (0, -8, -24, -48)

GROUPS = (
    "pavlovian",
    "model_free_heuristic",
    "mental_effort_avoidance",
    "satisficing_stopping",
    "model_based_metareasoning",
    "habitual",
    "constant",
)


@dataclass(frozen=True)
class FeatureDef:
    name: str
    group: str
    applies_to: str  # "click", "termination", or "both"
    index: int = -1


_CATALOG_SPEC = [
    # (name, group, applies_to)
    ("all_leaf_nodes_observed", "satisficing_stopping", "click"),
    ("all_roots_observed", "satisficing_stopping", "click"),
    ("ancestor_count", "habitual", "click"),
    ("are_max_paths_observed", "satisficing_stopping", "click"),
    ("avoid_first_level", "mental_effort_avoidance", "click"),
    ("avoid_second_level", "mental_effort_avoidance", "click"),
    ("avoid_third_level", "mental_effort_avoidance", "click"),
    ("best_expected", "pavlovian", "click"),
    ("best_largest", "pavlovian", "click"),
    ("branch_count", "habitual", "click"),
    ("click_count", "habitual", "click"),
    ("constant", "constant", "both"),
    ("count_observed_node_branch", "habitual", "click"),
    ("depth", "habitual", "click"),
    ("depth_count", "habitual", "click"),
    ("first_level", "model_free_heuristic", "click"),
    ("level_observed_std", "model_based_metareasoning", "click"),
    ("hp_0", "satisficing_stopping", "termination"),
    ("hp_neg8", "satisficing_stopping", "termination"),
    ("hp_neg24", "satisficing_stopping", "termination"),
    ("hp_neg48", "satisficing_stopping", "termination"),
    ("hs_0", "satisficing_stopping", "termination"),
    ("hs_8", "satisficing_stopping", "termination"),
    ("hs_16", "satisficing_stopping", "termination"),
    ("hs_24", "satisficing_stopping", "termination"),
    ("hs_32", "satisficing_stopping", "termination"),
    ("hs_40", "satisficing_stopping", "termination"),
    ("hs_48", "satisficing_stopping", "termination"),
    ("immediate_successor_count", "habitual", "click"),
    ("is_leaf", "model_free_heuristic", "click"),
    ("is_max_path_observed", "satisficing_stopping", "click"),
    ("is_pos_ancestor_leaf", "habitual", "click"),
    ("is_positive_observed", "satisficing_stopping", "click"),
    ("is_previous_max", "satisficing_stopping", "click"),
    ("is_previous_successor_negative", "satisficing_stopping", "click"),
    ("is_root", "model_free_heuristic", "click"),
    ("is_successor_highest", "pavlovian", "click"),
    ("level_count", "habitual", "click"),
    ("max_expected_return", "pavlovian", "click"),
    ("max_immediate_successor", "pavlovian", "click"),
    ("max_successor", "pavlovian", "click"),
    ("max_uncertainty", "model_based_metareasoning", "click"),
    ("most_promising", "pavlovian", "click"),
    ("num_clicks_adaptive", "habitual", "click"),
    ("observed_height", "habitual", "click"),
    ("parent_observed", "habitual", "click"),
    ("parent_value", "pavlovian", "click"),
    ("positive_root_leaves_termination", "satisficing_stopping", "termination"),
    ("previous_observed_successor", "habitual", "click"),
    ("second_level", "model_free_heuristic", "click"),
    ("second_most_promising", "model_based_metareasoning", "click"),
    ("siblings_count", "habitual", "click"),
    ("single_path_completion", "satisficing_stopping", "click"),
    ("soft_pruning", "satisficing_stopping", "click"),
    ("soft_satisficing", "satisficing_stopping", "click"),
    ("sq_successor_count", "habitual", "click"),
    ("successor_count", "habitual", "click"),
    ("successor_uncertainty", "model_based_metareasoning", "click"),
    ("conditional_termination", "satisficing_stopping", "click"),
    ("termination_constant", "constant", "click"),
    ("third_level", "model_free_heuristic", "click"),
    ("trial_level_std", "model_based_metareasoning", "click"),
    ("uncertainty", "model_based_metareasoning", "click"),
]

CATALOG: tuple[FeatureDef, ...] = tuple(
    FeatureDef(name, group, applies, i) for i, (name, group, applies) in enumerate(_CATALOG_SPEC)
)
FEATURE_INDEX = {f.name: f.index for f in CATALOG}

MODEL_BASED_FEATURES = tuple(f.name for f in CATALOG if f.group == "model_based_metareasoning")
HABITUAL_FEATURES = tuple(f.name for f in CATALOG if f.group == "habitual")

assert len(CATALOG) == N_FEATURES
assert len({f.name for f in CATALOG}) == N_FEATURES
assert len(MODEL_BASED_FEATURES) == 6


def feature_catalog() -> tuple[FeatureDef, ...]:
    """The fixed, versioned catalog (order is load-bearing)."""
    return CATALOG


def mask_for_variant(variant: str) -> np.ndarray:
    """Active-feature mask for a model variant.

    hybrid: all 63; model_free: hybrid minus the 6 metareasoning features;
    non_learning: model_free minus every habitual feature.
    """
    mask = np.ones(N_FEATURES, dtype=bool)
    if variant == "hybrid":
        return mask
    if variant in ("model_free", "non_learning"):
        for name in MODEL_BASED_FEATURES:
            mask[FEATURE_INDEX[name]] = False
        if variant == "non_learning":
            for name in HABITUAL_FEATURES:
                mask[FEATURE_INDEX[name]] = False
        return mask
    raise ValueError(f"unknown variant {variant!r}")


def export_catalog_json(path):
    """Write feature_catalog.json so UIs and notebooks can label weights."""
    entries = [
        {"name": f.name, "group": f.group, "applies_to": f.applies_to, "index": f.index}
        for f in CATALOG
    ]
    with open(path, "w") as fh:
        json.dump({"version": MASK_VERSION, "entries": entries}, fh, indent=1)


# ---------------------------------------------------------------------------
# Scale constants for the normalized feature map

_PATH_VALUE_FEATURES = ("best_expected", "soft_satisficing", "soft_pruning", "max_expected_return")
_NODE_VALUE_FEATURES = ("best_largest", "max_immediate_successor", "max_successor", "parent_value")
_NODE_STD_FEATURES = ("uncertainty", "level_observed_std", "trial_level_std")
_COUNT_SCALES = {
    "ancestor_count": 2.0,
    "immediate_successor_count": 2.0,
    "siblings_count": 2.0,
    "successor_count": 3.0,
    "sq_successor_count": 9.0,
    "depth_count": 6.0,
    "observed_height": 2.0,
    "num_clicks_adaptive": 3.0,
    "depth": 3.0,
}
# cross-trial counters become per-trial frequencies: divided by the listed
# constant times the number of completed trials
_FREQUENCY_SCALES = {
    "count_observed_node_branch": 1.0,
    "branch_count": 4.0,
    "level_count": 6.0,
    "click_count": 12.0,
}


class FeatureScales:
    """Per-feature divisors derived from one reward configuration."""

    _cache: dict = {}

    def __new__(cls, reward_config):
        hit = cls._cache.get(reward_config)
        if hit is not None:
            return hit
        self = super().__new__(cls)
        self._build(reward_config)
        cls._cache[reward_config] = self
        return self

    def _build(self, rc):
        max_imm = max(rc.immediate_support_positive)
        min_imm = min(rc.immediate_support_negative)
        max_mid, min_mid = max(rc.middle_support), min(rc.middle_support)
        outer_vals = set(rc.nontarget_outer_support) | set(rc.target_outer_values)
        path_max = max_imm + max_mid + max(outer_vals)
        # the positive-immediate constraint keeps min-imm off the target branch
        path_min = min(
            min_imm + min_mid + min(rc.nontarget_outer_support),
            min(rc.immediate_support_positive) + min_mid + min(rc.target_outer_values),
        )
        path_scale = float(max(abs(path_max), abs(path_min)))
        value_scale = float(max(abs(rc.reward_min), abs(rc.reward_max)))
        std_scale = (rc.reward_max - rc.reward_min) / 2.0
        path_std_scale = (path_max - path_min) / 2.0

        div = np.ones(N_FEATURES)
        for name in _PATH_VALUE_FEATURES:
            div[FEATURE_INDEX[name]] = path_scale
        for name in _NODE_VALUE_FEATURES:
            div[FEATURE_INDEX[name]] = value_scale
        for name in _NODE_STD_FEATURES:
            div[FEATURE_INDEX[name]] = std_scale
        div[FEATURE_INDEX["max_uncertainty"]] = path_std_scale
        div[FEATURE_INDEX["successor_uncertainty"]] = 3.0 * std_scale
        for name, s in _COUNT_SCALES.items():
            div[FEATURE_INDEX[name]] = s
        for name, s in _FREQUENCY_SCALES.items():
            div[FEATURE_INDEX[name]] = s
        self.divisors = div
        self.frequency_idx = np.array([FEATURE_INDEX[n] for n in _FREQUENCY_SCALES])

    def apply(self, raw: np.ndarray, trial_index: int) -> np.ndarray:
        out = raw / self.divisors
        t = max(trial_index, 1)
        if t > 1:
            out[..., self.frequency_idx] /= t
        return out


# ---------------------------------------------------------------------------
# Computation


def _observed_height(belief: BeliefState, node: int) -> int:
    # edge count of the longest fully observed descent from `node` to an
    # outer node; 0 when no observed descent reaches a final outcome
    if LEVEL[node] == 3:
        return 0
    if LEVEL[node] == 2:
        return 1 if any(belief.is_observed(o) for o in CHILDREN[node]) else 0
    mid = CHILDREN[node][0]
    if belief.is_observed(mid) and any(belief.is_observed(o) for o in CHILDREN[mid]):
        return 2
    return 0


def feature_matrix(belief: BeliefState, ops: Sequence[int], normalized: bool = True) -> np.ndarray:
    """Feature vectors for every operation, shape (len(ops), 63).

    `ops` must all be available in `belief` (TERMINATE and/or unobserved
    nodes); this is the hot path for both simulation and fitting.  Policies
    use the normalized map; normalized=False gives the raw defined values.
    """
    rc = belief.reward_config
    obs = belief.observed
    out = np.zeros((len(ops), N_FEATURES))
    F = FEATURE_INDEX

    # ---- belief-level quantities, shared by all operations
    path_ev = belief.path_ev
    max_path_ev = float(path_ev.max())
    ev_sorted = np.sort(path_ev)[::-1]
    second_ev = float(ev_sorted[1])
    node_std = np.sqrt(belief.node_var)

    all_leaves_obs = all(belief.is_observed(n) for n in OUTERS)
    all_roots_obs = all(belief.is_observed(n) for n in IMMEDIATES)

    observed_outer_vals = {n: obs[n] for n in OUTERS if n in obs}
    if observed_outer_vals:
        vmax_outer = max(observed_outer_vals.values())
        max_paths_obs = all(
            all(belief.is_observed(m) for m in ANCESTORS[n])
            for n, v in observed_outer_vals.items()
            if v == vmax_outer
        )
    else:
        max_paths_obs = False

    # any observed node at reward_max whose full path from the start is observed
    max_path_observed = any(
        v == rc.reward_max and all(belief.is_observed(m) for m in ANCESTORS[n])
        for n, v in obs.items()
    )
    positive_observed = any(v > 0 for v in obs.values())
    last = belief.last_click()
    last_val = obs[last] if last is not None else None
    previous_max = last_val is not None and last_val == rc.reward_max
    complete_path = any(all(belief.is_observed(n) for n in p) for p in PATHS)

    # conditional termination: a positive immediate plus an observed outer on
    # the same branch
    cond_term = any(
        belief.is_observed(imm)
        and obs[imm] > 0
        and any(belief.is_observed(o) for o in branch_outers(BRANCH[imm]))
        for imm in IMMEDIATES
    )

    # all outer nodes have an observed, positive branch root
    pos_root_leaves = all(
        belief.is_observed(IMMEDIATES[BRANCH[n]]) and obs[IMMEDIATES[BRANCH[n]]] > 0 for n in OUTERS
    )

    level_std = {
        lvl: float(np.mean([node_std[n - 1] for n in ALL_NODES if LEVEL[n] == lvl])) for lvl in (1, 2, 3)
    }
    depth_counts = {lvl: sum(1 for n in obs if LEVEL[n] == lvl) for lvl in (1, 2, 3)}

    counters = belief.counters
    adaptive_prefix = belief.rr_state.prefix_len  # frozen at the first deviation

    # ---- per-operation fill
    for i, op in enumerate(ops):
        row = out[i]
        row[F["constant"]] = 1.0
        if op == TERMINATE:
            for thr in PRUNING_THRESHOLDS:
                key = f"hp_{thr}" if thr >= 0 else f"hp_neg{-thr}"
                row[F[key]] = -1.0 if max_path_ev < thr else 0.0
            for thr in SATISFICING_THRESHOLDS:
                row[F[f"hs_{thr}"]] = -1.0 if max_path_ev > thr else 0.0
            row[F["positive_root_leaves_termination"]] = 0.0 if pos_root_leaves else -1.0
            continue

        n = op
        lvl = LEVEL[n]
        row[F["termination_constant"]] = 1.0
        row[F["all_leaf_nodes_observed"]] = -1.0 if all_leaves_obs else 0.0
        row[F["all_roots_observed"]] = -1.0 if all_roots_obs else 0.0
        row[F["ancestor_count"]] = sum(1 for m in ANCESTORS[n] if m in obs)
        row[F["are_max_paths_observed"]] = -1.0 if max_paths_obs else 0.0
        row[F[("avoid_first_level", "avoid_second_level", "avoid_third_level")[lvl - 1]]] = -1.0
        paths_through = PATHS_THROUGH[n]
        row[F["best_expected"]] = max(path_ev[p] for p in paths_through)
        nodes_on_paths = set()
        for p in paths_through:
            nodes_on_paths.update(PATHS[p])
        obs_on_paths = [obs[m] for m in nodes_on_paths if m in obs]
        row[F["best_largest"]] = max(obs_on_paths) if obs_on_paths else 0.0
        row[F["branch_count"]] = counters.branch_counts[BRANCH[n]]
        row[F["click_count"]] = counters.total_clicks
        row[F["count_observed_node_branch"]] = counters.node_counts[n - 1]
        row[F["depth"]] = lvl
        row[F["depth_count"]] = depth_counts[lvl]
        row[F[("first_level", "second_level", "third_level")[lvl - 1]]] = 1.0
        row[F["level_observed_std"]] = level_std[lvl]
        children_obs = [obs[m] for m in CHILDREN[n] if m in obs]
        row[F["immediate_successor_count"]] = len(children_obs)
        row[F["is_leaf"]] = 1.0 if lvl == 3 else 0.0
        row[F["is_max_path_observed"]] = -1.0 if max_path_observed else 0.0
        row[F["is_pos_ancestor_leaf"]] = (
            1.0 if lvl == 3 and any(m in obs and obs[m] > 0 for m in ANCESTORS[n]) else 0.0
        )
        row[F["is_positive_observed"]] = -1.0 if positive_observed else 0.0
        row[F["is_previous_max"]] = -1.0 if previous_max else 0.0
        row[F["is_previous_successor_negative"]] = (
            1.0 if last is not None and last in CHILDREN[n] and obs[last] < 0 else 0.0
        )
        row[F["is_root"]] = 1.0 if lvl == 1 else 0.0
        desc_obs = [obs[m] for m in DESCENDANTS[n] if m in obs]
        row[F["is_successor_highest"]] = 1.0 if any(v == rc.reward_max for v in desc_obs) else 0.0
        row[F["level_count"]] = counters.level_counts[lvl - 1]
        row[F["max_expected_return"]] = max_path_ev
        row[F["max_immediate_successor"]] = max(children_obs) if children_obs else 0.0
        row[F["max_successor"]] = max(desc_obs) if desc_obs else 0.0
        row[F["max_uncertainty"]] = max(belief.path_std[p] for p in paths_through)
        row[F["most_promising"]] = (
            1.0 if any(path_ev[p] >= max_path_ev - 1e-9 for p in paths_through) else 0.0
        )
        row[F["second_most_promising"]] = (
            1.0 if any(abs(path_ev[p] - second_ev) <= 1e-9 for p in paths_through) else 0.0
        )
        row[F["num_clicks_adaptive"]] = adaptive_prefix
        row[F["observed_height"]] = _observed_height(belief, n)
        parent = PARENT[n]
        row[F["parent_observed"]] = 1.0 if parent != 0 and parent in obs else 0.0
        row[F["parent_value"]] = obs.get(parent, 0.0) if parent != 0 else 0.0
        row[F["previous_observed_successor"]] = (
            1.0 if last is not None and last in DESCENDANTS[n] else 0.0
        )
        row[F["siblings_count"]] = sum(1 for m in SIBLINGS[n] if m in obs)
        row[F["single_path_completion"]] = -1.0 if complete_path else 0.0
        row[F["soft_pruning"]] = min(path_ev[p] for p in paths_through)
        row[F["soft_satisficing"]] = max(path_ev[p] for p in paths_through)
        sc = len(desc_obs)
        row[F["sq_successor_count"]] = sc * sc
        row[F["successor_count"]] = sc
        row[F["successor_uncertainty"]] = sum(node_std[m - 1] for m in DESCENDANTS[n])
        row[F["conditional_termination"]] = -1.0 if cond_term else 0.0
        row[F["trial_level_std"]] = counters.node_value_std(n, belief.prior_node_var(n))
        row[F["uncertainty"]] = node_std[n - 1]
    if normalized:
        out = FeatureScales(rc).apply(out, belief.trial_index)
    return out


def compute_features(belief: BeliefState, op: int, normalized: bool = True) -> np.ndarray:
    """Feature vector for one operation (node id or TERMINATE)."""
    if op not in available_operations(belief):
        raise ValueError(f"operation {op} not available in this belief state")
    return feature_matrix(belief, [op], normalized=normalized)[0]
