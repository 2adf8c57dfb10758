"""Three-branch click-to-reveal maze environment.

The task world is a tree of 12 revealable nodes hanging off a start node:
three branches, each with one immediate node (level 1), one middle node
(level 2), and two outer nodes (level 3).  Exactly one branch starts with a
positive immediate reward, and that branch's two outer nodes carry the two
target values (+50/-50 by default).  Revealing a node costs a level-dependent
fee.  An episode is a sequence of reveals followed by termination, at which
point a root-to-outer path is chosen and scored.

Node ids are fixed: 0 is the start node, 1..12 are revealable nodes in
branch-major order (branch b in 0..2 owns 1+4b immediate, 2+4b middle,
3+4b and 4+4b outer).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

TERMINATE = 0  # operation id for "stop deliberating and act"

N_BRANCHES = 3
N_NODES = 12
ALL_NODES = tuple(range(1, 13))

LEVEL = {n: (1, 2, 3, 3)[(n - 1) % 4] for n in ALL_NODES}
BRANCH = {n: (n - 1) // 4 for n in ALL_NODES}

IMMEDIATES = tuple(1 + 4 * b for b in range(3))
MIDDLES = tuple(2 + 4 * b for b in range(3))
OUTERS = tuple(n for n in ALL_NODES if LEVEL[n] == 3)

PARENT = {}
for b in range(3):
    imm, mid, o1, o2 = 1 + 4 * b, 2 + 4 * b, 3 + 4 * b, 4 + 4 * b
    PARENT[imm] = 0
    PARENT[mid] = imm
    PARENT[o1] = mid
    PARENT[o2] = mid

ANCESTORS = {n: () for n in ALL_NODES}
for n in ALL_NODES:
    chain, p = [], PARENT[n]
    while p != 0:
        chain.append(p)
        p = PARENT[p]
    ANCESTORS[n] = tuple(chain)

CHILDREN = {n: tuple(m for m in ALL_NODES if PARENT[m] == n) for n in ALL_NODES}
DESCENDANTS = {n: tuple(m for m in ALL_NODES if n in ANCESTORS[m]) for n in ALL_NODES}
SIBLINGS = {n: tuple(m for m in ALL_NODES if m != n and PARENT[m] == PARENT[n]) for n in ALL_NODES}

# Six root-to-outer paths (immediate, middle, outer), two per branch.
PATHS = tuple((1 + 4 * b, 2 + 4 * b, o) for b in range(3) for o in (3 + 4 * b, 4 + 4 * b))
PATHS_THROUGH = {n: tuple(i for i, p in enumerate(PATHS) if n in p) for n in ALL_NODES}

N_CONFIGS = 6


def branch_outers(b: int) -> tuple[int, int]:
    return (3 + 4 * b, 4 + 4 * b)


class EnvError(ValueError):
    """A click or log is inconsistent with the environment rules."""


@dataclass(frozen=True)
class EnvStructure:
    """Topology and click fees.  The tree shape itself is fixed."""

    n_branches: int = 3
    nodes_per_branch: tuple[int, int, int] = (1, 1, 2)
    click_cost_by_level: tuple[float, float, float] = (1, 3, 30)

    def __post_init__(self):
        if self.n_branches != 3 or tuple(self.nodes_per_branch) != (1, 1, 2):
            raise ValueError("only the 3-branch (1,1,2) structure is supported here")

    def click_cost(self, node: int) -> float:
        return self.click_cost_by_level[LEVEL[node] - 1]


@dataclass(frozen=True)
class RewardConfig:
    """Value supports for each node role.

    The defaults for the non-target supports are artifact choices (the task
    description only pins the target outer values and the one-positive-branch
    constraint); every support is configurable.
    """

    immediate_support_positive: tuple[int, ...] = (1, 2, 3, 4, 5)
    immediate_support_negative: tuple[int, ...] = (-5, -4, -3, -2, -1)
    middle_support: tuple[int, ...] = (-10, -5, 5, 10)
    nontarget_outer_support: tuple[int, ...] = (-20, -10, 10, 20)
    target_outer_values: tuple[int, int] = (50, -50)
    reward_min: int = -50
    reward_max: int = 50

    def __post_init__(self):
        if not all(v > 0 for v in self.immediate_support_positive):
            raise ValueError("positive immediate support must be positive")
        if not all(v < 0 for v in self.immediate_support_negative):
            raise ValueError("negative immediate support must be negative")
        lo, hi = self.reward_min, self.reward_max
        for v in self.all_values():
            if not lo <= v <= hi:
                raise ValueError(f"support value {v} outside [{lo}, {hi}]")

    def all_values(self) -> set[int]:
        return (
            set(self.immediate_support_positive)
            | set(self.immediate_support_negative)
            | set(self.middle_support)
            | set(self.nontarget_outer_support)
            | set(self.target_outer_values)
        )

    def to_json_dict(self, structure: EnvStructure | None = None) -> dict:
        structure = structure or EnvStructure()
        return {
            "immediate_support_positive": list(self.immediate_support_positive),
            "immediate_support_negative": list(self.immediate_support_negative),
            "middle_support": list(self.middle_support),
            "nontarget_outer_support": list(self.nontarget_outer_support),
            "target_outer_values": list(self.target_outer_values),
            "reward_min": self.reward_min,
            "reward_max": self.reward_max,
            "click_cost_by_level": list(structure.click_cost_by_level),
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> tuple["RewardConfig", EnvStructure]:
        cfg = cls(
            immediate_support_positive=tuple(d["immediate_support_positive"]),
            immediate_support_negative=tuple(d["immediate_support_negative"]),
            middle_support=tuple(d["middle_support"]),
            nontarget_outer_support=tuple(d["nontarget_outer_support"]),
            target_outer_values=tuple(d["target_outer_values"]),
            reward_min=int(d["reward_min"]),
            reward_max=int(d["reward_max"]),
        )
        structure = EnvStructure(click_cost_by_level=tuple(d.get("click_cost_by_level", (1, 3, 30))))
        return cfg, structure


def config_target_branch(config_id: int) -> int:
    """Target branch for a configuration id in 1..6."""
    return (config_id - 1) // 2


def config_plus_outer(config_id: int) -> int:
    """Node id that carries target_outer_values[0] under this configuration."""
    b = config_target_branch(config_id)
    return branch_outers(b)[(config_id - 1) % 2]


class ConfigTables:
    """Per-configuration value distributions, cached per RewardConfig.

    For each configuration c (0-based internally) and node n the value is
    drawn from a finite support; conditioning a belief on observed values is
    exact Bayesian filtering over the six configurations.
    """

    _cache: dict[RewardConfig, "ConfigTables"] = {}

    def __new__(cls, reward_config: RewardConfig):
        hit = cls._cache.get(reward_config)
        if hit is not None:
            return hit
        self = super().__new__(cls)
        self._build(reward_config)
        cls._cache[reward_config] = self
        return self

    def _build(self, rc: RewardConfig):
        self.reward_config = rc
        # support[c][n] -> dict value -> prob
        self.support: list[dict[int, dict[int, float]]] = []
        for cid in range(1, N_CONFIGS + 1):
            tb = config_target_branch(cid)
            plus = config_plus_outer(cid)
            per_node: dict[int, dict[int, float]] = {}
            for n in ALL_NODES:
                if LEVEL[n] == 1:
                    vals = rc.immediate_support_positive if BRANCH[n] == tb else rc.immediate_support_negative
                elif LEVEL[n] == 2:
                    vals = rc.middle_support
                elif BRANCH[n] == tb:
                    vals = (rc.target_outer_values[0],) if n == plus else (rc.target_outer_values[1],)
                else:
                    vals = rc.nontarget_outer_support
                p = 1.0 / len(vals)
                per_node[n] = {int(v): p for v in vals}
            self.support.append(per_node)
        # mean/second-moment tables, (6, 12) indexed by [config, node-1]
        self.mean = np.zeros((N_CONFIGS, N_NODES))
        self.second_moment = np.zeros((N_CONFIGS, N_NODES))
        for c in range(N_CONFIGS):
            for n in ALL_NODES:
                dist = self.support[c][n]
                vs = np.array(list(dist.keys()), dtype=float)
                ps = np.array(list(dist.values()))
                self.mean[c, n - 1] = vs @ ps
                self.second_moment[c, n - 1] = (vs**2) @ ps
        self.var = self.second_moment - self.mean**2
        # marginal moments under the uniform configuration prior
        prior = np.full(N_CONFIGS, 1.0 / N_CONFIGS)
        self.marginal_mean = prior @ self.mean
        self.marginal_var = prior @ self.second_moment - self.marginal_mean**2

    def likelihood(self, node: int, value: int) -> np.ndarray:
        """P(value at node | config) for all six configurations."""
        return np.array([self.support[c][node].get(int(value), 0.0) for c in range(N_CONFIGS)])


@dataclass(frozen=True)
class TrialGroundTruth:
    config_id: int  # 1..6
    values: dict[int, int]  # node id -> realized reward
    target_branch: int  # 0..2

    def to_json_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "values": {str(n): int(v) for n, v in self.values.items()},
            "target_branch": self.target_branch,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "TrialGroundTruth":
        return cls(
            config_id=int(d["config_id"]),
            values={int(k): int(v) for k, v in d["values"].items()},
            target_branch=int(d["target_branch"]),
        )


def generate_trial(
    reward_config: RewardConfig,
    rng_seed,
    config_id: Optional[int] = None,
) -> TrialGroundTruth:
    """Sample one maze.  `rng_seed` is an int seed or a numpy Generator.

    The configuration is sampled uniformly over 1..6 unless given.
    """
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    if config_id is None:
        config_id = int(rng.integers(1, N_CONFIGS + 1))
    elif not 1 <= config_id <= N_CONFIGS:
        raise ValueError(f"config_id must be in 1..6, got {config_id}")
    tables = ConfigTables(reward_config)
    per_node = tables.support[config_id - 1]
    values = {}
    for n in ALL_NODES:
        vals = sorted(per_node[n].keys())
        values[n] = int(vals[rng.integers(len(vals))]) if len(vals) > 1 else int(vals[0])
    return TrialGroundTruth(config_id=config_id, values=values, target_branch=config_target_branch(config_id))


# ---------------------------------------------------------------------------
# Cross-trial counters (the substrate of the habitual features)


@dataclass(frozen=True)
class CrossTrialCounters:
    """Observation frequencies accumulated over preceding trials.

    node_value_sum / node_value_sumsq accumulate the observed values so the
    across-trial empirical node variance is available to the features.
    """

    node_counts: tuple[int, ...] = (0,) * N_NODES
    branch_counts: tuple[int, int, int] = (0, 0, 0)
    level_counts: tuple[int, int, int] = (0, 0, 0)
    total_clicks: int = 0
    node_value_sum: tuple[float, ...] = (0.0,) * N_NODES
    node_value_sumsq: tuple[float, ...] = (0.0,) * N_NODES

    def add_trial(self, clicks: Sequence[int], values: Mapping[int, int]) -> "CrossTrialCounters":
        node = list(self.node_counts)
        branch = list(self.branch_counts)
        level = list(self.level_counts)
        vsum = list(self.node_value_sum)
        vsq = list(self.node_value_sumsq)
        for n in clicks:
            node[n - 1] += 1
            branch[BRANCH[n]] += 1
            level[LEVEL[n] - 1] += 1
            v = float(values[n])
            vsum[n - 1] += v
            vsq[n - 1] += v * v
        return CrossTrialCounters(
            node_counts=tuple(node),
            branch_counts=tuple(branch),
            level_counts=tuple(level),
            total_clicks=self.total_clicks + len(clicks),
            node_value_sum=tuple(vsum),
            node_value_sumsq=tuple(vsq),
        )

    def node_value_std(self, node: int, prior_var: float) -> float:
        """Across-trial empirical std of this node's observed values.

        Falls back to the generative marginal std before any observation.
        """
        k = self.node_counts[node - 1]
        if k == 0:
            return float(np.sqrt(prior_var))
        mean = self.node_value_sum[node - 1] / k
        var = max(self.node_value_sumsq[node - 1] / k - mean * mean, 0.0)
        return float(np.sqrt(var))


# ---------------------------------------------------------------------------
# Adaptive-strategy (resource-rational decision tree) automaton
#
# Legal prefixes: click unclicked immediates while the positive branch is
# neither identified (positive value seen) nor inferable (two negatives
# seen); then exactly one outer click on the identified branch; then stop.


@dataclass(frozen=True)
class RRState:
    valid: bool = True
    identified_branch: Optional[int] = None
    neg_immediates: int = 0
    outer_clicked: bool = False
    prefix_len: int = 0


def rr_step(state: RRState, node: int, value: int) -> RRState:
    """Advance the automaton by one click (inference is resolved here too)."""
    if not state.valid:
        return state
    invalid = replace(state, valid=False)
    if state.outer_clicked:
        return invalid  # nothing may follow the single outer click
    if state.identified_branch is not None:
        if LEVEL[node] == 3 and BRANCH[node] == state.identified_branch:
            return replace(state, outer_clicked=True, prefix_len=state.prefix_len + 1)
        return invalid
    if LEVEL[node] != 1:
        return invalid  # middles never; outers only after identification
    if value > 0:
        return replace(state, identified_branch=BRANCH[node], prefix_len=state.prefix_len + 1)
    return replace(state, neg_immediates=state.neg_immediates + 1, prefix_len=state.prefix_len + 1)


def rr_replay(clicks: Sequence[int], values: Mapping[int, int]) -> RRState:
    """Run the decision-tree automaton over a full click sequence."""
    state = RRState()
    seen_neg_branches: set[int] = set()
    for n in clicks:
        if not state.valid:
            break
        if state.identified_branch is None and LEVEL[n] == 1 and values[n] <= 0:
            seen_neg_branches.add(BRANCH[n])
        state = rr_step(state, n, values[n])
        if state.valid and state.identified_branch is None and len(seen_neg_branches) == 2:
            remaining = ({0, 1, 2} - seen_neg_branches).pop()
            state = replace(state, identified_branch=remaining)
    return state


# ---------------------------------------------------------------------------
# Belief state


class BeliefState:
    """What the agent knows: revealed values this trial plus carried counters.

    Immutable in use: `apply_click` / `commit_trial` return new instances.
    Derived arrays (configuration posterior, per-node conditional moments,
    path expectations) are computed eagerly; they are cheap (6 x 12).
    """

    __slots__ = (
        "reward_config",
        "structure",
        "observed",
        "click_history",
        "counters",
        "trial_index",
        "config_post",
        "node_mean",
        "node_var",
        "path_ev",
        "path_std",
        "rr_state",
        "_tables",
    )

    def __init__(
        self,
        reward_config: RewardConfig,
        structure: EnvStructure | None = None,
        observed: Mapping[int, int] | None = None,
        click_history: Sequence[int] = (),
        counters: CrossTrialCounters | None = None,
        trial_index: int = 0,
    ):
        self.reward_config = reward_config
        self.structure = structure or EnvStructure()
        self.observed = dict(observed or {})
        self.click_history = tuple(click_history)
        self.counters = counters or CrossTrialCounters()
        self.trial_index = trial_index
        if set(self.observed) != set(self.click_history):
            raise EnvError("observed nodes must match click history")
        self._tables = ConfigTables(reward_config)
        self._refresh()
        self.rr_state = rr_replay(self.click_history, self.observed)

    # -- derived quantities -------------------------------------------------

    def _refresh(self):
        t = self._tables
        post = np.full(N_CONFIGS, 1.0 / N_CONFIGS)
        for n, v in self.observed.items():
            post = post * t.likelihood(n, v)
        total = post.sum()
        if total <= 0:
            raise EnvError("observations impossible under this reward configuration")
        post = post / total
        self.config_post = post

        # conditional means / variances given the filtered configuration,
        # with observed nodes clamped to their values
        eff_mean = t.mean.copy()
        eff_m2 = t.second_moment.copy()
        for n, v in self.observed.items():
            eff_mean[:, n - 1] = v
            eff_m2[:, n - 1] = float(v) ** 2
        mean = post @ eff_mean
        second = post @ eff_m2
        self.node_mean = mean
        self.node_var = np.maximum(second - mean**2, 0.0)

        # path return expectation and std under the configuration mixture
        path_idx = np.array([[p[0] - 1, p[1] - 1, p[2] - 1] for p in PATHS])
        path_mean_c = eff_mean[:, path_idx].sum(axis=2)  # (6, 6)
        eff_var = np.maximum(eff_m2 - eff_mean**2, 0.0)
        path_var_c = eff_var[:, path_idx].sum(axis=2)
        ev = post @ path_mean_c
        var = post @ (path_var_c + path_mean_c**2) - ev**2
        self.path_ev = ev
        self.path_std = np.sqrt(np.maximum(var, 0.0))

    # -- queries --------------------------------------------------------------

    def is_observed(self, node: int) -> bool:
        return node in self.observed

    def unobserved_nodes(self) -> tuple[int, ...]:
        return tuple(n for n in ALL_NODES if n not in self.observed)

    def expected_path_values(self) -> np.ndarray:
        return self.path_ev.copy()

    def last_click(self) -> Optional[int]:
        return self.click_history[-1] if self.click_history else None

    def prior_node_var(self, node: int) -> float:
        return float(self._tables.marginal_var[node - 1])

    # -- transitions ------------------------------------------------------------

    def apply_click(self, node: int, truth: TrialGroundTruth) -> tuple["BeliefState", float]:
        if node not in ALL_NODES:
            raise EnvError(f"invalid node id {node}")
        if node in self.observed:
            raise EnvError(f"node {node} already observed")
        new_obs = dict(self.observed)
        new_obs[node] = int(truth.values[node])
        nb = BeliefState(
            self.reward_config,
            self.structure,
            observed=new_obs,
            click_history=self.click_history + (node,),
            counters=self.counters,
            trial_index=self.trial_index,
        )
        return nb, -self.structure.click_cost(node)

    def commit_trial(self, log: "TrialLog") -> "BeliefState":
        if log.trial_index != self.trial_index:
            raise EnvError(
                f"trial index mismatch: belief at {self.trial_index}, log is {log.trial_index}"
            )
        counters = self.counters.add_trial(log.clicks, log.ground_truth.values)
        return BeliefState(
            self.reward_config,
            self.structure,
            observed={},
            click_history=(),
            counters=counters,
            trial_index=self.trial_index + 1,
        )


def fresh_belief(reward_config: RewardConfig, structure: EnvStructure | None = None) -> BeliefState:
    return BeliefState(reward_config, structure)


def available_operations(belief: BeliefState) -> set[int]:
    """All legal operations: every unobserved node plus termination."""
    ops = set(belief.unobserved_nodes())
    ops.add(TERMINATE)
    return ops


def apply_click(belief: BeliefState, node: int, truth: TrialGroundTruth) -> tuple[BeliefState, float]:
    return belief.apply_click(node, truth)


def terminate_and_act(
    belief: BeliefState, truth: TrialGroundTruth, rng_seed
) -> tuple[tuple[int, ...], float]:
    """Choose the path with maximal expected return; ties uniform at random.

    Returns ((0, immediate, middle, outer), realized path value sum).
    """
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    ev = belief.path_ev
    best = ev.max()
    candidates = np.flatnonzero(ev >= best - 1e-12)
    pick = int(candidates[rng.integers(len(candidates))]) if len(candidates) > 1 else int(candidates[0])
    path = PATHS[pick]
    external = float(sum(truth.values[n] for n in path))
    return (0,) + path, external


@dataclass(frozen=True)
class TrialLog:
    """One participant-trial: the unit of fitting."""

    participant_id: str
    trial_index: int
    ground_truth: TrialGroundTruth
    clicks: tuple[int, ...]
    terminated: bool
    chosen_path: tuple[int, ...]  # (0, immediate, middle, outer)
    score: float

    def click_fees(self, structure: EnvStructure | None = None) -> float:
        structure = structure or EnvStructure()
        return float(sum(structure.click_cost(n) for n in self.clicks))

    def external_return(self) -> float:
        return float(sum(self.ground_truth.values.get(n, 0) for n in self.chosen_path))

    def to_json_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "trial_index": self.trial_index,
            "ground_truth": self.ground_truth.to_json_dict(),
            "clicks": list(self.clicks),
            "terminated": self.terminated,
            "chosen_path": list(self.chosen_path),
            "score": self.score,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "TrialLog":
        return cls(
            participant_id=str(d["participant_id"]),
            trial_index=int(d["trial_index"]),
            ground_truth=TrialGroundTruth.from_json_dict(d["ground_truth"]),
            clicks=tuple(int(c) for c in d["clicks"]),
            terminated=bool(d["terminated"]),
            chosen_path=tuple(int(n) for n in d["chosen_path"]),
            score=float(d["score"]),
        )


def validate_log(log: TrialLog, structure: EnvStructure | None = None):
    """Structural validity: no repeats, proper path, score identity."""
    structure = structure or EnvStructure()
    if len(set(log.clicks)) != len(log.clicks):
        raise EnvError("duplicate click in log")
    for n in log.clicks:
        if n not in ALL_NODES:
            raise EnvError(f"invalid clicked node {n}")
    path = tuple(log.chosen_path)
    if len(path) != 4 or path[0] != 0 or path[1:] not in PATHS:
        raise EnvError(f"invalid chosen path {path}")
    expect = log.external_return() - log.click_fees(structure)
    if abs(expect - log.score) > 1e-9:
        raise EnvError(f"score {log.score} violates score identity (expected {expect})")


def classify_adaptive(log: TrialLog) -> bool:
    """True iff the click sequence conforms to the resource-rational tree."""
    validate_log(log)
    state = rr_replay(log.clicks, log.ground_truth.values)
    return state.valid and state.outer_clicked


def save_logs(logs: Iterable[TrialLog], path):
    with open(path, "w") as fh:
        json.dump([lg.to_json_dict() for lg in logs], fh, indent=1)


def load_logs(path) -> list[TrialLog]:
    with open(path) as fh:
        raw = json.load(fh)
    return [TrialLog.from_json_dict(d) for d in raw]
