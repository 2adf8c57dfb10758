"""Maximum-likelihood fitting of the learning models to click sequences.

Likelihoods replay a participant's trials under teacher forcing: the model
is shown the participant's own clicks, scores their probabilities, and (for
learning kinds) updates its weights from the participant's trajectory before
the next trial.  Because the belief sequence is fixed by the data, every
step's feature matrix can be precomputed once per participant (ReplayDesign);
candidate evaluation is then pure array arithmetic, which is what makes
60k-dimensional-budget searches tractable on a laptop.

Optimizers: plain random search (the reference), a coarse-to-fine box
shrink, and an independent-dimension tree-structured Parzen estimator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from . import env as E
from .env import TERMINATE, BeliefState, EnvStructure, RewardConfig, TrialLog
from .features import FEATURE_INDEX, N_FEATURES, CATALOG, feature_matrix, mask_for_variant
from .learners import (
    ALL_KINDS,
    DEFAULT_FROZEN_LAPSE,
    FROZEN_KINDS,
    KIND_VARIANT,
    REINFORCE_KINDS,
    SOFTMAX_KINDS,
    EpisodeStep,
    EpisodeTrajectory,
    build_strategies,
    make_model,
    ordered_operations,
    reinforce_update,
)

MAX_OPS = 13
RSSL_MC_DRAWS = 1024
RSSL_MC_SEED = 0

# compiled replay kernels (numba) are used when importable; the numpy paths
# below stay as the reference implementation and the two are tested equal
USE_KERNELS = _kernels.HAVE_NUMBA

# free-parameter counts for the BIC: weights plus the searched scalars
HABITUAL_COUNT = sum(1 for f in CATALOG if f.group == "habitual")
K_PARAMS = {
    "hybrid_reinforce": 63 + 3,
    "model_free_reinforce": 57 + 3,
    "mental_habit": 57 + 1,
    "non_learning": (57 - HABITUAL_COUNT) + 1,
    "rssl": 4,
}


def bic(loglik: float, k: int, n: int) -> float:
    """k ln n - 2 loglik."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    return k * math.log(n) - 2.0 * loglik


def n_observations(logs: Sequence[TrialLog]) -> int:
    """Every click plus one termination per trial is a predicted event."""
    return sum(len(lg.clicks) for lg in logs) + len(logs)


# ---------------------------------------------------------------------------
# Replay design: precomputed per-participant tensors


@dataclass
class ReplayDesign:
    features: np.ndarray  # (steps, 13, 63) zero-padded
    n_ops: np.ndarray  # (steps,)
    taken: np.ndarray  # (steps,) index into the op axis
    rewards: np.ndarray  # (steps,) click costs negated; terminal external return
    term_ev: np.ndarray  # (steps,) belief-expected return, terminal steps only
    trial_slices: list[tuple[int, int]]
    trial_scores: np.ndarray  # (trials,) logged scores (the RSSL observations)
    logs: list[TrialLog]
    reward_config: RewardConfig
    structure: EnvStructure

    @property
    def trial_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        starts = np.array([a for a, _ in self.trial_slices], dtype=np.int64)
        ends = np.array([b for _, b in self.trial_slices], dtype=np.int64)
        return starts, ends


def build_replay_design(
    logs: Sequence[TrialLog],
    reward_config: RewardConfig | None = None,
    structure: EnvStructure | None = None,
) -> ReplayDesign:
    """Replay the logs once through the environment, collecting per-step
    feature matrices, rewards, and trial boundaries.  Raises EnvError when a
    log is inconsistent (duplicate clicks, impossible values, bad paths)."""
    reward_config = reward_config or RewardConfig()
    structure = structure or EnvStructure()
    logs = sorted(logs, key=lambda lg: lg.trial_index)
    feats, n_ops, taken, rewards, term_ev = [], [], [], [], []
    trial_slices, trial_scores = [], []
    belief = BeliefState(reward_config, structure, trial_index=logs[0].trial_index)
    for lg in logs:
        E.validate_log(lg, structure)
        start = len(feats)
        for node in lg.clicks + (TERMINATE,):
            ops = ordered_operations(belief)
            F = np.zeros((MAX_OPS, N_FEATURES))
            F[: len(ops)] = feature_matrix(belief, ops)
            feats.append(F)
            n_ops.append(len(ops))
            taken.append(ops.index(node))
            if node == TERMINATE:
                rewards.append(lg.external_return())
                term_ev.append(float(belief.path_ev.max()))
            else:
                belief, meta = belief.apply_click(node, lg.ground_truth)
                rewards.append(meta)
                term_ev.append(0.0)
        trial_slices.append((start, len(feats)))
        trial_scores.append(lg.score)
        belief = belief.commit_trial(lg)
    return ReplayDesign(
        features=np.array(feats),
        n_ops=np.array(n_ops, dtype=np.int64),
        taken=np.array(taken, dtype=np.int64),
        rewards=np.array(rewards),
        term_ev=np.array(term_ev),
        trial_slices=trial_slices,
        trial_scores=np.array(trial_scores),
        logs=list(logs),
        reward_config=reward_config,
        structure=structure,
    )


def _masked_log_probs(q: np.ndarray, n_ops: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise overflow-safe log softmax over the first n_ops entries."""
    z = q / tau
    pad = np.arange(q.shape[1])[None, :] >= n_ops[:, None]
    z = np.where(pad, -np.inf, z)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    return (z - zmax) - np.log(ez.sum(axis=1, keepdims=True))


def _loglik_frozen(design: ReplayDesign, w: np.ndarray, tau: float, eps: float) -> float:
    q = design.features @ w
    lp = _masked_log_probs(q, design.n_ops, tau)
    rows = np.arange(len(design.taken))
    lp_taken = lp[rows, design.taken]
    if eps <= 0:
        return float(lp_taken.sum())
    p = (1 - eps) * np.exp(lp_taken) + eps / design.n_ops
    return float(np.log(p).sum())


def _loglik_reinforce(
    design: ReplayDesign,
    w0: np.ndarray,
    mask: np.ndarray,
    alpha: float,
    gamma: float,
    tau: float,
    credit_mode: str,
    terminal_reward: str,
) -> float:
    w = np.where(mask, w0, 0.0)
    total = 0.0
    rows_all = np.arange(MAX_OPS)
    for (a, b), score in zip(design.trial_slices, design.trial_scores):
        F = design.features[a:b]
        n_ops = design.n_ops[a:b]
        taken = design.taken[a:b]
        q = F @ w
        lp = _masked_log_probs(q, n_ops, tau)
        steps = np.arange(b - a)
        total += float(lp[steps, taken].sum())
        if alpha != 0.0:
            probs = np.exp(lp)
            probs[rows_all[None, :] >= n_ops[:, None]] = 0.0
            fbar = np.einsum("so,sof->sf", probs, F)
            g = (F[steps, taken] - fbar) / tau
            r = design.rewards[a:b].copy()
            if terminal_reward == "expected":
                r[-1] = design.term_ev[b - 1]
            if credit_mode == "return_to_go":
                credit = np.zeros_like(r)
                acc = 0.0
                for t in range(len(r) - 1, -1, -1):
                    acc = r[t] + gamma * acc
                    credit[t] = acc
            else:
                credit = r
            coefs = (gamma ** steps) * credit
            w = w + alpha * np.where(mask, coefs @ g, 0.0)
    return total


# ---- RSSL fast path --------------------------------------------------------


@dataclass
class RsslDesign:
    # per trial x strategy x step: strategy probability of the taken op
    strat_p: np.ndarray  # (T, S, max_steps)
    inv_nops: np.ndarray  # (T, max_steps) reciprocal op counts, 0 past the end
    step_mask: np.ndarray  # (T, max_steps) bool
    trial_scores: np.ndarray
    strategy_names: tuple[str, ...]


def build_rssl_design(
    design: ReplayDesign, strategy_names: Optional[Sequence[str]] = None
) -> RsslDesign:
    strategies = build_strategies(strategy_names)
    T = len(design.logs)
    S = len(strategies)
    max_steps = max(b - a for a, b in design.trial_slices)
    strat_p = np.zeros((T, S, max_steps))
    inv_nops = np.zeros((T, max_steps))
    step_mask = np.zeros((T, max_steps), dtype=bool)
    belief = BeliefState(
        design.reward_config, design.structure, trial_index=design.logs[0].trial_index
    )
    for t, lg in enumerate(design.logs):
        b = belief
        for j, node in enumerate(lg.clicks + (TERMINATE,)):
            n_avail = len(E.available_operations(b))
            inv_nops[t, j] = 1.0 / n_avail
            step_mask[t, j] = True
            for s, strat in enumerate(strategies):
                strat_p[t, s, j] = strat.operation_distribution(b).get(node, 0.0)
            if node != TERMINATE:
                b, _ = b.apply_click(node, lg.ground_truth)
        belief = b.commit_trial(lg)
    return RsslDesign(
        strat_p=strat_p,
        inv_nops=inv_nops,
        step_mask=step_mask,
        trial_scores=design.trial_scores,
        strategy_names=tuple(s.name for s in strategies),
    )


def _loglik_rssl(
    rd: RsslDesign,
    prior_mean: float,
    prior_variance: float,
    noise_variance: float,
    lapse: float,
    n_draws: int = RSSL_MC_DRAWS,
    mc_seed: int = RSSL_MC_SEED,
) -> float:
    T, S, _ = rd.strat_p.shape
    step = (1 - lapse) * rd.strat_p + lapse * rd.inv_nops[:, None, :]
    step = np.where(rd.step_mask[:, None, :], step, 1.0)
    trial_lik = step.prod(axis=2)  # (T, S)
    z = np.random.default_rng(mc_seed).standard_normal((n_draws, S))
    means = np.full(S, prior_mean)
    variances = np.full(S, prior_variance)
    total = 0.0
    for t in range(T):
        samples = means + np.sqrt(variances) * z
        sel = np.bincount(np.argmax(samples, axis=1), minlength=S) / n_draws
        lik = float(sel @ trial_lik[t])
        if lik <= 0:
            return -np.inf
        total += np.log(lik)
        resp = sel * trial_lik[t] / lik
        # responsibility-weighted conjugate update with the trial's score
        prec = 1.0 / variances + resp / noise_variance
        means = (means / variances + resp * rd.trial_scores[t] / noise_variance) / prec
        variances = 1.0 / prec
    return total


# ---------------------------------------------------------------------------
# Public likelihood (reference implementation, object-by-object replay)


def sequence_loglikelihood(
    kind: str,
    hyper: Mapping,
    logs: Sequence[TrialLog],
    reward_config: RewardConfig | None = None,
    structure: EnvStructure | None = None,
) -> float:
    """Log-likelihood of ordered trial logs under one model configuration.

    This is the transparent reference path; fit_participant uses the
    vectorized equivalent, and the two are held together by tests.
    """
    reward_config = reward_config or RewardConfig()
    structure = structure or EnvStructure()
    logs = sorted(logs, key=lambda lg: lg.trial_index)
    if not logs:
        raise ValueError("no trials to score")
    if kind == "rssl":
        design = build_replay_design(logs, reward_config, structure)
        rd = build_rssl_design(design, hyper.get("strategy_names"))
        return _loglik_rssl(
            rd,
            prior_mean=float(hyper.get("prior_mean", 0.0)),
            prior_variance=float(hyper.get("prior_variance", 1000.0)),
            noise_variance=float(hyper.get("observation_noise_variance", 1000.0)),
            lapse=float(hyper.get("lapse_rate", DEFAULT_FROZEN_LAPSE)),
        )
    if kind not in SOFTMAX_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    params = make_model(kind, hyper)
    belief = BeliefState(reward_config, structure, trial_index=logs[0].trial_index)
    total = 0.0
    for lg in logs:
        E.validate_log(lg, structure)
        steps = []
        for node in lg.clicks + (TERMINATE,):
            ops = ordered_operations(belief)
            F = feature_matrix(belief, ops)
            q = (F * params.mask) @ params.weights
            zm = q / params.tau
            zm = zm - zm.max()
            p = np.exp(zm)
            p = p / p.sum()
            if params.epsilon > 0:
                p = (1 - params.epsilon) * p + params.epsilon / len(ops)
            idx = ops.index(node)
            lp = float(np.log(p[idx]))
            total += lp
            if node == TERMINATE:
                meta = (
                    float(belief.path_ev.max())
                    if params.terminal_reward == "expected"
                    else lg.external_return()
                )
            else:
                meta = -structure.click_cost(node)
            steps.append(EpisodeStep(belief, ops, F, node, meta, lp))
            if node != TERMINATE:
                belief, _ = belief.apply_click(node, lg.ground_truth)
        if not params.frozen:
            traj = EpisodeTrajectory(steps, lg.external_return())
            params = reinforce_update(params, traj)
        belief = belief.commit_trial(lg)
    return total


# ---------------------------------------------------------------------------
# Search spaces


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str  # "linear", "log10", "sinh"
    lo: float
    hi: float

    def to_value(self, x: float) -> float:
        if self.kind == "linear":
            return self.lo + x * (self.hi - self.lo)
        if self.kind == "log10":
            return 10 ** (self.lo + x * (self.hi - self.lo))
        if self.kind == "sinh":
            # symmetric, concentrates mass near zero; spans [-hi, hi]
            return self.hi * math.sinh(6.0 * (x - 0.5)) / math.sinh(3.0)
        raise ValueError(self.kind)


def search_space(kind: str, weight_bound: float = 40.0) -> list[Dimension]:
    if kind == "rssl":
        return [
            Dimension("prior_mean", "linear", -60.0, 60.0),
            Dimension("prior_variance", "log10", 0.0, 4.0),
            Dimension("observation_noise_variance", "log10", 0.0, 4.0),
            Dimension("lapse_rate", "linear", 1e-3, 0.5),
        ]
    if kind not in SOFTMAX_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    dims = []
    if kind in REINFORCE_KINDS:
        dims.append(Dimension("learning_rate", "linear", -14.0, -2.0))
        dims.append(Dimension("gamma", "linear", -4.0, 4.0))
    dims.append(Dimension("inverse_temperature", "linear", -3.0, 2.5))
    mask = mask_for_variant(
        {"hybrid_reinforce": "hybrid", "model_free_reinforce": "model_free",
         "mental_habit": "model_free", "non_learning": "non_learning"}[kind]
    )
    for f in CATALOG:
        if mask[f.index]:
            dims.append(Dimension(f"w:{f.name}", "sinh", -weight_bound, weight_bound))
    return dims


def candidate_to_hyper(kind: str, dims: Sequence[Dimension], x: np.ndarray) -> dict:
    vals = {d.name: d.to_value(float(xi)) for d, xi in zip(dims, x)}
    if kind == "rssl":
        return vals
    weights = {k[2:]: v for k, v in vals.items() if k.startswith("w:")}
    hyper = {k: v for k, v in vals.items() if not k.startswith("w:")}
    hyper["weights"] = weights
    hyper["transform"] = "exp_sigmoid"
    return hyper


# ---------------------------------------------------------------------------
# Optimizers (maximize f over the unit cube, deterministic given rng)


def _opt_random(f, d, budget, rng):
    best_x, best_v, trace = None, -np.inf, []
    for i in range(budget):
        x = np.full(d, 0.5) if i == 0 else rng.random(d)
        v = f(x)
        if v > best_v:
            best_x, best_v = x, v
            trace.append((i, x.copy(), v))
    return best_x, best_v, trace


def _opt_coarse_to_fine(f, d, budget, rng, stages: int = 5):
    best_x, best_v, trace = np.full(d, 0.5), -np.inf, []
    done = 0
    for stage in range(stages):
        half = 0.5**stage
        n = budget // stages if stage < stages - 1 else budget - done
        center = best_x if best_v > -np.inf else np.full(d, 0.5)
        for _ in range(n):
            if done == 0:
                x = np.full(d, 0.5)
            else:
                lo = np.clip(center - half, 0, 1)
                hi = np.clip(center + half, 0, 1)
                x = lo + rng.random(d) * (hi - lo)
            v = f(x)
            if v > best_v:
                best_x, best_v = x, v
                trace.append((done, x.copy(), v))
            done += 1
    return best_x, best_v, trace


def _truncnorm_logpdf(x, mu, sigma, lo=0.0, hi=1.0):
    z = (x - mu) / sigma
    log_core = -0.5 * z * z - np.log(sigma * math.sqrt(2 * math.pi))
    from scipy.special import ndtr as _ndtr

    mass = _ndtr((hi - mu) / sigma) - _ndtr((lo - mu) / sigma)
    return log_core - np.log(np.maximum(mass, 1e-300))


def _opt_tpe(f, d, budget, rng, n_startup: int = 50, n_ei: int = 24):
    xs, vs, trace = [], [], []
    best_x, best_v = None, -np.inf

    def record(i, x, v):
        nonlocal best_x, best_v
        xs.append(x)
        vs.append(v)
        if v > best_v:
            best_x, best_v = x, v
            trace.append((i, x.copy(), v))

    for i in range(min(n_startup, budget)):
        x = np.full(d, 0.5) if i == 0 else rng.random(d)
        record(i, x, f(x))
    for i in range(len(xs), budget):
        order = np.argsort(vs)[::-1]
        n_good = min(max(2, math.ceil(0.15 * len(xs))), 40)
        good = np.array([xs[j] for j in order[:n_good]])
        bad = np.array([xs[j] for j in order[n_good:]])
        if len(bad) == 0:
            x = rng.random(d)
            record(i, x, f(x))
            continue
        sigma_g = np.maximum(good.std(axis=0), 0.02)
        sigma_b = np.maximum(bad.std(axis=0), 0.05)
        # sample candidates from the good-points mixture, score by log g - log b
        comp = rng.integers(0, n_good, size=(n_ei, d))
        cand = np.clip(good[comp, np.arange(d)] + sigma_g * rng.standard_normal((n_ei, d)), 0, 1)
        score = np.zeros(n_ei)
        for dim in range(d):
            lg = _logmeanexp(_truncnorm_logpdf(cand[:, dim][:, None], good[None, :, dim], sigma_g[dim]))
            lb = _logmeanexp(_truncnorm_logpdf(cand[:, dim][:, None], bad[None, :, dim], sigma_b[dim]))
            score += lg - lb
        x = cand[int(np.argmax(score))]
        record(i, x, f(x))
    return best_x, best_v, trace


def _logmeanexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).mean(axis=1, keepdims=True)))[:, 0]


OPTIMIZERS = {
    "random_search": _opt_random,
    "coarse_to_fine": _opt_coarse_to_fine,
    "parzen_estimator": _opt_tpe,
}


# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    kind: str
    participant_id: str
    hyper: dict
    log_likelihood: float
    n_observations: int
    k_params: int
    bic: float
    trace: list  # best-so-far improvements: [iteration, candidate, loglik]
    seed: int
    budget: int
    optimizer: str

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "participant_id": self.participant_id,
            "hyper": self.hyper,
            "log_likelihood": self.log_likelihood,
            "n_observations": self.n_observations,
            "k_params": self.k_params,
            "bic": self.bic,
            "trace": [[i, c, v] for i, c, v in self.trace],
            "seed": self.seed,
            "budget": self.budget,
            "optimizer": self.optimizer,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "FitResult":
        return cls(
            kind=d["kind"],
            participant_id=d["participant_id"],
            hyper=dict(d["hyper"]),
            log_likelihood=float(d["log_likelihood"]),
            n_observations=int(d["n_observations"]),
            k_params=int(d["k_params"]),
            bic=float(d["bic"]),
            trace=[(int(i), c, float(v)) for i, c, v in d["trace"]],
            seed=int(d["seed"]),
            budget=int(d["budget"]),
            optimizer=d["optimizer"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FitResult":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def make_evaluator(
    kind: str,
    design: ReplayDesign,
    dims: Sequence[Dimension],
    rssl_design: RsslDesign | None = None,
    credit_mode: str = "immediate",
    terminal_reward: str = "realized",
) -> Callable[[np.ndarray], float]:
    """Bind a fast candidate->loglik function for one participant."""
    if kind == "rssl":
        rd = rssl_design if rssl_design is not None else build_rssl_design(design)
        if USE_KERNELS:
            S = rd.strat_p.shape[1]
            z = np.random.default_rng(RSSL_MC_SEED).standard_normal((RSSL_MC_DRAWS, S))

            def f_rssl_nb(x: np.ndarray) -> float:
                h = candidate_to_hyper(kind, dims, x)
                return float(
                    _kernels.rssl_loglik(
                        rd.strat_p,
                        rd.inv_nops,
                        rd.step_mask,
                        rd.trial_scores,
                        z,
                        h["prior_mean"],
                        h["prior_variance"],
                        h["observation_noise_variance"],
                        h["lapse_rate"],
                    )
                )

            return f_rssl_nb

        def f_rssl(x: np.ndarray) -> float:
            h = candidate_to_hyper(kind, dims, x)
            return _loglik_rssl(
                rd,
                prior_mean=h["prior_mean"],
                prior_variance=h["prior_variance"],
                noise_variance=h["observation_noise_variance"],
                lapse=h["lapse_rate"],
            )

        return f_rssl

    mask = mask_for_variant(KIND_VARIANT[kind])
    weight_idx = np.array(
        [FEATURE_INDEX[d.name[2:]] for d in dims if d.name.startswith("w:")], dtype=int
    )
    scalar_names = [d.name for d in dims if not d.name.startswith("w:")]
    n_scalar = len(scalar_names)
    frozen = kind in FROZEN_KINDS
    eps = DEFAULT_FROZEN_LAPSE if frozen else 0.0
    dim_list = list(dims)

    starts, ends = design.trial_bounds

    def f_softmax(x: np.ndarray) -> float:
        w = np.zeros(N_FEATURES)
        for j, di in enumerate(dim_list[n_scalar:]):
            w[weight_idx[j]] = di.to_value(float(x[n_scalar + j]))
        scal = {d.name: d.to_value(float(xi)) for d, xi in zip(dim_list[:n_scalar], x[:n_scalar])}
        tau = math.exp(scal["inverse_temperature"])
        if frozen:
            return _loglik_frozen(design, w * mask, tau, eps)
        alpha = math.exp(scal["learning_rate"])
        gamma = 1.0 / (1.0 + math.exp(-scal["gamma"]))
        if USE_KERNELS:
            return float(
                _kernels.reinforce_loglik(
                    design.features,
                    design.n_ops,
                    design.taken,
                    design.rewards,
                    design.term_ev,
                    starts,
                    ends,
                    w,
                    mask,
                    alpha,
                    gamma,
                    tau,
                    credit_mode == "return_to_go",
                    terminal_reward == "expected",
                )
            )
        return _loglik_reinforce(design, w, mask, alpha, gamma, tau, credit_mode, terminal_reward)

    return f_softmax


def fit_participant(
    kind: str,
    logs: Sequence[TrialLog],
    budget: int,
    optimizer: str = "parzen_estimator",
    rng_seed: int = 0,
    reward_config: RewardConfig | None = None,
    structure: EnvStructure | None = None,
    design: ReplayDesign | None = None,
    weight_bound: float = 40.0,
    credit_mode: str = "immediate",
    terminal_reward: str = "realized",
) -> FitResult:
    """Search the hyperparameter box for the best click-sequence likelihood."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not logs:
        raise ValueError("no trials to fit")
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if kind not in ALL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if design is None:
        design = build_replay_design(logs, reward_config, structure)
    dims = search_space(kind, weight_bound)
    f = make_evaluator(kind, design, dims, credit_mode=credit_mode, terminal_reward=terminal_reward)
    rng = np.random.default_rng(rng_seed)
    best_x, best_v, trace = OPTIMIZERS[optimizer](f, len(dims), budget, rng)

    def full_hyper(x):
        h = candidate_to_hyper(kind, dims, x)
        if kind in REINFORCE_KINDS:
            h["credit_mode"] = credit_mode
            h["terminal_reward"] = terminal_reward
        return h

    n_obs = n_observations(design.logs)
    k = K_PARAMS[kind]
    pid = design.logs[0].participant_id
    return FitResult(
        kind=kind,
        participant_id=pid,
        hyper=full_hyper(best_x),
        log_likelihood=float(best_v),
        n_observations=n_obs,
        k_params=k,
        bic=bic(float(best_v), k, n_obs),
        trace=[(i, full_hyper(x), float(v)) for i, x, v in trace],
        seed=rng_seed,
        budget=budget,
        optimizer=optimizer,
    )
