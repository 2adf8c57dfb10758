"""Learning agents over the maze's deliberation problem.

Four softmax-policy kinds share one parameter container:

* hybrid_reinforce      - policy-gradient learner, all 63 features
* model_free_reinforce  - policy-gradient learner, no metareasoning features
* mental_habit          - frozen weights, model-free feature set (behavior
                          drifts only through the cross-trial counters)
* non_learning          - frozen weights, habitual features masked out too

plus the Thompson-sampling strategy-selection agent (RSSL), which picks one
of a fixed repertoire of scripted strategies per trial and does Bayesian
bookkeeping on their returns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import env as E
from .env import (
    BRANCH,
    IMMEDIATES,
    LEVEL,
    MIDDLES,
    OUTERS,
    TERMINATE,
    BeliefState,
    EnvStructure,
    RewardConfig,
    TrialGroundTruth,
    TrialLog,
    branch_outers,
)
from .features import MASK_VERSION, N_FEATURES, FEATURE_INDEX, feature_matrix, mask_for_variant

REINFORCE_KINDS = ("hybrid_reinforce", "model_free_reinforce")
FROZEN_KINDS = ("mental_habit", "non_learning")
SOFTMAX_KINDS = REINFORCE_KINDS + FROZEN_KINDS
ALL_KINDS = SOFTMAX_KINDS + ("rssl",)

KIND_VARIANT = {
    "hybrid_reinforce": "hybrid",
    "model_free_reinforce": "model_free",
    "mental_habit": "model_free",
    "non_learning": "non_learning",
}

DEFAULT_FROZEN_LAPSE = 0.05

# Learning-rate compensation used by the "reference" transform: the raw
# reference learning rates pair with gradients an order of magnitude larger
# than the normalized feature map produces, so they are rescaled by a fixed
# constant calibrated once against the discovery-capability check.
REFERENCE_ALPHA_SCALE = 20.0


def transform_alpha(raw: float) -> float:
    return float(np.exp(raw))


def transform_tau(raw: float) -> float:
    return float(np.exp(raw))


def transform_gamma(raw: float) -> float:
    return float(1.0 / (1.0 + np.exp(-raw)))


@dataclass(frozen=True)
class PolicyParams:
    """Everything that defines one softmax meta-policy."""

    weights: np.ndarray  # (63,), inactive entries exactly 0
    alpha: float
    gamma: float
    tau: float
    mask: np.ndarray  # (63,) bool
    credit_mode: str = "immediate"  # or "return_to_go"
    frozen: bool = False
    epsilon: float = 0.0  # uniform-lapse mixture weight
    terminal_reward: str = "realized"  # or "expected"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if self.credit_mode not in ("immediate", "return_to_go"):
            raise ValueError(f"unknown credit_mode {self.credit_mode!r}")
        w = np.asarray(self.weights, dtype=float).copy()
        w[~self.mask] = 0.0
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))


def make_model(kind: str, hyper: Mapping) -> PolicyParams:
    """Build PolicyParams from raw hyperparameters.

    Raw learning rate and inverse temperature are exponentiated, raw gamma
    is squashed through a sigmoid ("exp_sigmoid" transform, the default);
    pass transform="identity" to use the values as-is.  Weights are always
    taken as-is and may be a dict of catalog names or a full-length array.
    """
    if kind not in SOFTMAX_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    transform = hyper.get("transform", "exp_sigmoid")
    if transform == "exp_sigmoid":
        tau = transform_tau(float(hyper["inverse_temperature"]))
        alpha = transform_alpha(float(hyper["learning_rate"])) if kind in REINFORCE_KINDS else 0.0
        gamma = transform_gamma(float(hyper["gamma"])) if kind in REINFORCE_KINDS else 1.0
    elif transform == "reference":
        # used by the bundled presets: exp for tau and gamma (clipped to a
        # valid discount), exp times a fixed scale for the learning rate
        tau = transform_tau(float(hyper["inverse_temperature"]))
        alpha = (
            transform_alpha(float(hyper["learning_rate"])) * REFERENCE_ALPHA_SCALE
            if kind in REINFORCE_KINDS
            else 0.0
        )
        gamma = min(float(np.exp(float(hyper["gamma"]))), 1.0) if kind in REINFORCE_KINDS else 1.0
    elif transform == "identity":
        tau = float(hyper["inverse_temperature"])
        alpha = float(hyper.get("learning_rate", 0.0)) if kind in REINFORCE_KINDS else 0.0
        gamma = float(hyper.get("gamma", 1.0)) if kind in REINFORCE_KINDS else 1.0
    else:
        raise ValueError(f"unknown transform {transform!r}")

    mask = mask_for_variant(KIND_VARIANT[kind])
    weights = np.zeros(N_FEATURES)
    raw_w = hyper.get("weights", {})
    if isinstance(raw_w, Mapping):
        for name, v in raw_w.items():
            weights[FEATURE_INDEX[name]] = float(v)
    else:
        arr = np.asarray(raw_w, dtype=float)
        if arr.shape != (N_FEATURES,):
            raise ValueError(f"weights array must have length {N_FEATURES}")
        weights = arr

    frozen = kind in FROZEN_KINDS
    eps = float(hyper.get("epsilon", DEFAULT_FROZEN_LAPSE if frozen else 0.0))
    return PolicyParams(
        weights=weights,
        alpha=alpha,
        gamma=gamma,
        tau=tau,
        mask=mask,
        credit_mode=str(hyper.get("credit_mode", "immediate")),
        frozen=frozen,
        epsilon=eps,
        terminal_reward=str(hyper.get("terminal_reward", "realized")),
    )


# ---------------------------------------------------------------------------
# Softmax policy arithmetic


def ordered_operations(belief: BeliefState) -> list[int]:
    """Canonical operation ordering: termination first, then node ids."""
    return [TERMINATE] + list(belief.unobserved_nodes())


def _policy_probs(params: PolicyParams, F: np.ndarray) -> np.ndarray:
    """Softmax over rows of the feature matrix, with optional lapse mix."""
    q = (F * params.mask) @ params.weights
    z = q / params.tau
    z = z - z.max()
    p = np.exp(z)
    p = p / p.sum()
    if params.epsilon > 0:
        p = (1 - params.epsilon) * p + params.epsilon / len(p)
    return p


def q_values(params: PolicyParams, belief: BeliefState) -> dict[int, float]:
    """Linear value estimate for every available operation."""
    ops = ordered_operations(belief)
    F = feature_matrix(belief, ops)
    q = (F * params.mask) @ params.weights
    return {op: float(v) for op, v in zip(ops, q)}


def click_probabilities(params: PolicyParams, belief: BeliefState) -> dict[int, float]:
    """Softmax choice distribution over the available operations."""
    ops = ordered_operations(belief)
    F = feature_matrix(belief, ops)
    p = _policy_probs(params, F)
    return {op: float(v) for op, v in zip(ops, p)}


def grad_log_policy(params: PolicyParams, F: np.ndarray, taken: int) -> np.ndarray:
    """d ln pi(op_taken | b) / d w for a lapse-free softmax policy."""
    q = (F * params.mask) @ params.weights
    z = q / params.tau
    z = z - z.max()
    p = np.exp(z)
    p = p / p.sum()
    fbar = p @ (F * params.mask)
    return (F[taken] * params.mask - fbar) / params.tau


@dataclass
class EpisodeStep:
    belief: BeliefState
    ops: list[int]
    features: np.ndarray  # (len(ops), 63)
    op: int
    meta_reward: float
    log_prob: float


@dataclass
class EpisodeTrajectory:
    steps: list[EpisodeStep]
    external_return: float

    def total_log_prob(self) -> float:
        return float(sum(s.log_prob for s in self.steps))


def sample_episode(
    params: PolicyParams,
    truth: TrialGroundTruth,
    belief_in: BeliefState,
    rng_seed,
    participant_id: str = "sim",
) -> tuple[EpisodeTrajectory, TrialLog, BeliefState]:
    """Roll one trial under the policy.  Deterministic given the seed.

    Returns the trajectory (with per-step choice log-probabilities), the
    trial log, and the post-trial belief (clicks applied, counters not yet
    committed).
    """
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    belief = belief_in
    steps: list[EpisodeStep] = []
    fees = 0.0
    while True:
        ops = ordered_operations(belief)
        F = feature_matrix(belief, ops)
        p = _policy_probs(params, F)
        idx = int(rng.choice(len(ops), p=p))
        op = ops[idx]
        logp = float(np.log(p[idx]))
        if op == TERMINATE:
            path, external = E.terminate_and_act(belief, truth, rng)
            if params.terminal_reward == "expected":
                meta = float(belief.path_ev.max())
            else:
                meta = external
            steps.append(EpisodeStep(belief, ops, F, op, meta, logp))
            clicks = belief.click_history
            log = TrialLog(
                participant_id=participant_id,
                trial_index=belief.trial_index,
                ground_truth=truth,
                clicks=clicks,
                terminated=True,
                chosen_path=path,
                score=external - fees,
            )
            return EpisodeTrajectory(steps, external), log, belief
        nb, meta = belief.apply_click(op, truth)
        fees += -meta
        steps.append(EpisodeStep(belief, ops, F, op, meta, logp))
        belief = nb


def reinforce_update(params: PolicyParams, traj: EpisodeTrajectory) -> PolicyParams:
    """Policy-gradient weight update from one episode.

    credit_mode="immediate" multiplies each step's own meta reward into its
    score-function term; "return_to_go" uses the discounted remaining sum.
    Masked-out weights are untouched (their gradient is identically zero).
    """
    if params.frozen:
        raise ValueError("frozen policies do not update weights")
    rewards = np.array([s.meta_reward for s in traj.steps])
    T = len(rewards)
    if params.credit_mode == "return_to_go":
        credit = np.zeros(T)
        acc = 0.0
        for t in range(T - 1, -1, -1):
            acc = rewards[t] + params.gamma * acc
            credit[t] = acc
    else:
        credit = rewards
    delta = np.zeros(N_FEATURES)
    for t, step in enumerate(traj.steps):
        coef = params.gamma**t * credit[t]
        if coef != 0.0:
            taken_idx = step.ops.index(step.op)
            delta += coef * grad_log_policy(params, step.features, taken_idx)
    return replace(params, weights=params.weights + params.alpha * delta)


# ---------------------------------------------------------------------------
# RSSL: Thompson sampling over a scripted strategy repertoire


class Strategy:
    """A scripted click policy: a distribution over operations per belief."""

    def __init__(self, name: str, dist_fn: Callable[[BeliefState], dict[int, float]]):
        self.name = name
        self._dist_fn = dist_fn

    def operation_distribution(self, belief: BeliefState) -> dict[int, float]:
        return self._dist_fn(belief)


def _uniform(nodes: Sequence[int]) -> dict[int, float]:
    p = 1.0 / len(nodes)
    return {n: p for n in nodes}


def _positive_branch(belief: BeliefState) -> Optional[int]:
    for imm in IMMEDIATES:
        if belief.is_observed(imm) and belief.observed[imm] > 0:
            return BRANCH[imm]
    neg = [BRANCH[i] for i in IMMEDIATES if belief.is_observed(i) and belief.observed[i] <= 0]
    if len(set(neg)) == 2:
        return ({0, 1, 2} - set(neg)).pop()
    return None


def _immediates_then_positive_outer(belief: BeliefState) -> dict[int, float]:
    unobs_imm = [n for n in IMMEDIATES if not belief.is_observed(n)]
    if unobs_imm:
        return _uniform(unobs_imm)
    if any(LEVEL[n] == 3 for n in belief.click_history):
        return {TERMINATE: 1.0}
    b = _positive_branch(belief)
    outers = [o for o in branch_outers(b) if not belief.is_observed(o)] if b is not None else []
    return _uniform(outers) if outers else {TERMINATE: 1.0}


def _no_clicking(belief: BeliefState) -> dict[int, float]:
    return {TERMINATE: 1.0}


def _all_nodes(belief: BeliefState) -> dict[int, float]:
    unobs = belief.unobserved_nodes()
    return _uniform(unobs) if unobs else {TERMINATE: 1.0}


def _breadth_first(belief: BeliefState) -> dict[int, float]:
    for level_nodes in (IMMEDIATES, MIDDLES, OUTERS):
        unobs = [n for n in level_nodes if not belief.is_observed(n)]
        if unobs:
            return _uniform(unobs)
    return {TERMINATE: 1.0}


def _depth_first(belief: BeliefState) -> dict[int, float]:
    last = belief.last_click()
    if last is not None:
        b = BRANCH[last]
        branch_nodes = [n for n in E.ALL_NODES if BRANCH[n] == b]
        unobs = [n for n in branch_nodes if not belief.is_observed(n)]
        if unobs:
            lvl = min(LEVEL[n] for n in unobs)
            return _uniform([n for n in unobs if LEVEL[n] == lvl])
    fresh = [IMMEDIATES[b] for b in range(3) if not any(belief.is_observed(n) for n in E.ALL_NODES if BRANCH[n] == b)]
    return _uniform(fresh) if fresh else {TERMINATE: 1.0}


def _outer_first(belief: BeliefState) -> dict[int, float]:
    unobs = [n for n in OUTERS if not belief.is_observed(n)]
    return _uniform(unobs) if unobs else {TERMINATE: 1.0}


def _positive_immediate_then_both_outers(belief: BeliefState) -> dict[int, float]:
    b = _positive_branch(belief)
    if b is None:
        unobs_imm = [n for n in IMMEDIATES if not belief.is_observed(n)]
        return _uniform(unobs_imm) if unobs_imm else {TERMINATE: 1.0}
    outers = [o for o in branch_outers(b) if not belief.is_observed(o)]
    return _uniform(outers) if outers else {TERMINATE: 1.0}


def _immediates_only(belief: BeliefState) -> dict[int, float]:
    unobs = [n for n in IMMEDIATES if not belief.is_observed(n)]
    return _uniform(unobs) if unobs else {TERMINATE: 1.0}


def _random_k(k: int) -> Callable[[BeliefState], dict[int, float]]:
    def dist(belief: BeliefState) -> dict[int, float]:
        if len(belief.click_history) >= k:
            return {TERMINATE: 1.0}
        unobs = belief.unobserved_nodes()
        return _uniform(unobs) if unobs else {TERMINATE: 1.0}

    return dist


_STRATEGY_BUILDERS: dict[str, Callable[[], Strategy]] = {
    "immediates_then_positive_outer": lambda: Strategy(
        "immediates_then_positive_outer", _immediates_then_positive_outer
    ),
    "no_clicking": lambda: Strategy("no_clicking", _no_clicking),
    "all_nodes": lambda: Strategy("all_nodes", _all_nodes),
    "breadth_first": lambda: Strategy("breadth_first", _breadth_first),
    "depth_first": lambda: Strategy("depth_first", _depth_first),
    "outer_first": lambda: Strategy("outer_first", _outer_first),
    "positive_immediate_then_both_outers": lambda: Strategy(
        "positive_immediate_then_both_outers", _positive_immediate_then_both_outers
    ),
    "immediates_only": lambda: Strategy("immediates_only", _immediates_only),
    "random_1": lambda: Strategy("random_1", _random_k(1)),
    "random_2": lambda: Strategy("random_2", _random_k(2)),
    "random_3": lambda: Strategy("random_3", _random_k(3)),
    "random_6": lambda: Strategy("random_6", _random_k(6)),
}

DEFAULT_STRATEGY_NAMES = tuple(_STRATEGY_BUILDERS)


def build_strategies(names: Sequence[str] | None = None) -> list[Strategy]:
    names = list(names) if names is not None else list(DEFAULT_STRATEGY_NAMES)
    out = []
    for nm in names:
        if nm not in _STRATEGY_BUILDERS:
            raise ValueError(f"unknown strategy {nm!r}")
        out.append(_STRATEGY_BUILDERS[nm]())
    return out


def load_strategy_names(path) -> list[str]:
    with open(path) as fh:
        return list(json.load(fh)["strategies"])


@dataclass(frozen=True)
class RsslState:
    strategies: tuple[Strategy, ...]
    means: np.ndarray
    variances: np.ndarray
    observation_noise_variance: float
    lapse_rate: float = DEFAULT_FROZEN_LAPSE

    def __post_init__(self):
        if len(self.strategies) == 0:
            raise ValueError("RSSL needs at least one strategy")
        if not 0 <= self.lapse_rate < 1:
            raise ValueError("lapse rate must be in [0, 1)")
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float).copy())
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float).copy())


def make_rssl(
    prior_mean: float,
    prior_variance: float,
    observation_noise_variance: float,
    lapse_rate: float = DEFAULT_FROZEN_LAPSE,
    strategy_names: Sequence[str] | None = None,
) -> RsslState:
    strategies = tuple(build_strategies(strategy_names))
    S = len(strategies)
    return RsslState(
        strategies=strategies,
        means=np.full(S, float(prior_mean)),
        variances=np.full(S, float(prior_variance)),
        observation_noise_variance=float(observation_noise_variance),
        lapse_rate=float(lapse_rate),
    )


def rssl_select(state: RsslState, rng_seed) -> int:
    """Thompson draw: sample each posterior once, return the argmax index."""
    rng = np.random.default_rng(rng_seed) if not isinstance(rng_seed, np.random.Generator) else rng_seed
    draws = state.means + np.sqrt(state.variances) * rng.standard_normal(len(state.strategies))
    return int(np.argmax(draws))


def rssl_update(state: RsslState, strategy: int, observed_return: float) -> RsslState:
    """Conjugate normal update of one strategy's posterior."""
    if not 0 <= strategy < len(state.strategies):
        raise ValueError(f"invalid strategy index {strategy}")
    means = state.means.copy()
    variances = state.variances.copy()
    prec = 1.0 / variances[strategy] + 1.0 / state.observation_noise_variance
    means[strategy] = (
        means[strategy] / variances[strategy] + observed_return / state.observation_noise_variance
    ) / prec
    variances[strategy] = 1.0 / prec
    return replace(state, means=means, variances=variances)


def thompson_selection_probs(state: RsslState, n_draws: int = 4096, rng_seed: int = 0) -> np.ndarray:
    """Monte Carlo estimate of P(strategy wins the Thompson draw)."""
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal((n_draws, len(state.strategies)))
    samples = state.means + np.sqrt(state.variances) * z
    winners = np.argmax(samples, axis=1)
    return np.bincount(winners, minlength=len(state.strategies)) / n_draws


def _strategy_click_loglik(strategy: Strategy, log: TrialLog, belief: BeliefState, lapse: float) -> float:
    """ln prod_t [(1-eps) P_s(c_t|b_t) + eps/|ops|] over clicks and the stop."""
    total = 0.0
    b = belief
    for node in log.clicks + (TERMINATE,):
        dist = strategy.operation_distribution(b)
        n_ops = len(E.available_operations(b))
        p = (1 - lapse) * dist.get(node, 0.0) + lapse / n_ops
        if p <= 0:
            return -np.inf
        total += np.log(p)
        if node != TERMINATE:
            b, _ = b.apply_click(node, log.ground_truth)
    return total


def rssl_likelihood(
    state: RsslState,
    log: TrialLog,
    belief: BeliefState | None = None,
    n_draws: int = 4096,
    rng_seed: int = 0,
) -> float:
    """Mixture likelihood of one trial's click sequence.

    P(clicks) = sum_s P(select s) * prod_t [(1-eps) P_s(c_t|b_t) + eps/|ops|]
    with selection probabilities from a Monte Carlo Thompson frequency.
    """
    if belief is None:
        belief = E.BeliefState(RewardConfig())
    sel = thompson_selection_probs(state, n_draws=n_draws, rng_seed=rng_seed)
    total = 0.0
    for s, strat in enumerate(state.strategies):
        if sel[s] == 0.0:
            continue
        ll = _strategy_click_loglik(strat, log, belief, state.lapse_rate)
        total += sel[s] * np.exp(ll)
    return float(total)


# ---------------------------------------------------------------------------
# Model specs and batch simulation


@dataclass
class ModelSpec:
    kind: str
    hyper: dict
    strategy_names: Optional[list[str]] = None

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "hyperparameters": dict(self.hyper), "mask_version": MASK_VERSION}
        if self.kind == "rssl":
            d["strategy_set"] = list(self.strategy_names or DEFAULT_STRATEGY_NAMES)
        else:
            d["credit_mode"] = self.hyper.get("credit_mode", "immediate")
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "ModelSpec":
        kind = d["kind"]
        if kind not in ALL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        hyper = dict(d.get("hyperparameters", {}))
        if "credit_mode" in d:
            hyper.setdefault("credit_mode", d["credit_mode"])
        names = list(d["strategy_set"]) if d.get("strategy_set") else None
        return cls(kind=kind, hyper=hyper, strategy_names=names)

    @classmethod
    def load(cls, path) -> "ModelSpec":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def load_preset(name: str) -> ModelSpec:
    """Bundled reference hyperparameter presets (see data/simulation_presets.json)."""
    text = resources.files("planlab.data").joinpath("simulation_presets.json").read_text()
    presets = json.loads(text)
    if name not in presets:
        raise ValueError(f"unknown preset {name!r}; have {sorted(presets)}")
    return ModelSpec.from_json_dict(presets[name])


@dataclass
class SimulationResult:
    scores: np.ndarray  # (n_runs, n_trials)
    adaptive: np.ndarray  # (n_runs, n_trials) bool
    logs: Optional[list[list[TrialLog]]] = None  # per run, when requested

    def aggregate(self) -> list[dict]:
        """Per-trial mean score with 95% CI and adaptive-strategy proportion."""
        n_runs, n_trials = self.scores.shape
        rows = []
        for t in range(n_trials):
            col = self.scores[:, t]
            mean = float(col.mean())
            half = 1.96 * float(col.std(ddof=1)) / np.sqrt(n_runs) if n_runs > 1 else 0.0
            rows.append(
                {
                    "trial": t + 1,
                    "mean_score": mean,
                    "ci_lo": mean - half,
                    "ci_hi": mean + half,
                    "adaptive_prop": float(self.adaptive[:, t].mean()),
                }
            )
        return rows


def _simulate_softmax_run(
    spec: ModelSpec,
    reward_config: RewardConfig,
    structure: EnvStructure,
    n_trials: int,
    rng: np.random.Generator,
    participant_id: str,
    keep_logs: bool,
):
    params = make_model(spec.kind, spec.hyper)
    belief = E.BeliefState(reward_config, structure)
    scores = np.zeros(n_trials)
    adaptive = np.zeros(n_trials, dtype=bool)
    logs = [] if keep_logs else None
    for t in range(n_trials):
        truth = E.generate_trial(reward_config, rng)
        traj, log, post_belief = sample_episode(params, truth, belief, rng, participant_id)
        if not params.frozen:
            params = reinforce_update(params, traj)
        belief = post_belief.commit_trial(log)
        scores[t] = log.score
        adaptive[t] = E.classify_adaptive(log)
        if keep_logs:
            logs.append(log)
    return scores, adaptive, logs


def _simulate_rssl_run(
    spec: ModelSpec,
    reward_config: RewardConfig,
    structure: EnvStructure,
    n_trials: int,
    rng: np.random.Generator,
    participant_id: str,
    keep_logs: bool,
):
    h = spec.hyper
    state = make_rssl(
        prior_mean=float(h.get("prior_mean", 0.0)),
        prior_variance=float(h.get("prior_variance", 1000.0)),
        observation_noise_variance=float(h.get("observation_noise_variance", 1000.0)),
        lapse_rate=float(h.get("lapse_rate", DEFAULT_FROZEN_LAPSE)),
        strategy_names=spec.strategy_names,
    )
    belief = E.BeliefState(reward_config, structure)
    scores = np.zeros(n_trials)
    adaptive = np.zeros(n_trials, dtype=bool)
    logs = [] if keep_logs else None
    for t in range(n_trials):
        truth = E.generate_trial(reward_config, rng)
        sidx = rssl_select(state, rng)
        strat = state.strategies[sidx]
        b = belief
        fees = 0.0
        while True:
            ops = ordered_operations(b)
            if rng.random() < state.lapse_rate:
                op = ops[rng.integers(len(ops))]
            else:
                dist = strat.operation_distribution(b)
                names, probs = zip(*sorted(dist.items()))
                op = int(names[rng.choice(len(names), p=np.array(probs))])
            if op == TERMINATE:
                path, external = E.terminate_and_act(b, truth, rng)
                log = TrialLog(
                    participant_id=participant_id,
                    trial_index=b.trial_index,
                    ground_truth=truth,
                    clicks=b.click_history,
                    terminated=True,
                    chosen_path=path,
                    score=external - fees,
                )
                break
            b, meta = b.apply_click(op, truth)
            fees += -meta
        state = rssl_update(state, sidx, log.score)
        belief = b.commit_trial(log)
        scores[t] = log.score
        adaptive[t] = E.classify_adaptive(log)
        if keep_logs:
            logs.append(log)
    return scores, adaptive, logs


def run_simulation(
    spec: ModelSpec | Mapping,
    n_runs: int,
    n_trials: int,
    rng_seed: int,
    reward_config: RewardConfig | None = None,
    structure: EnvStructure | None = None,
    keep_logs: bool = False,
    participant_prefix: str = "sim",
) -> SimulationResult:
    """Simulate independent runs of one model; replicate streams are split
    from the seed so results are independent of scheduling."""
    if n_runs < 1 or n_trials < 1:
        raise ValueError("n_runs and n_trials must be >= 1")
    if not isinstance(spec, ModelSpec):
        spec = ModelSpec.from_json_dict(spec)
    reward_config = reward_config or RewardConfig()
    structure = structure or EnvStructure()
    runner = _simulate_rssl_run if spec.kind == "rssl" else _simulate_softmax_run
    streams = np.random.SeedSequence(rng_seed).spawn(n_runs)
    scores = np.zeros((n_runs, n_trials))
    adaptive = np.zeros((n_runs, n_trials), dtype=bool)
    all_logs = [] if keep_logs else None
    for r in range(n_runs):
        rng = np.random.default_rng(streams[r])
        pid = f"{participant_prefix}-{r:04d}"
        s, a, logs = runner(spec, reward_config, structure, n_trials, rng, pid, keep_logs)
        scores[r] = s
        adaptive[r] = a
        if keep_logs:
            all_logs.append(logs)
    return SimulationResult(scores=scores, adaptive=adaptive, logs=all_logs)
