"""Exact dynamic programming over the deliberation problem's belief space.

States are observation patterns (which nodes have been revealed, and to what
values); actions are clicks plus termination; terminating yields the best
expected path return under the current posterior.  Value distributions are
given as a mixture of scenarios, each with independent per-node supports,
which expresses both plain independent nodes and the coupled six-configuration
structure of the main environment.

The tree is generalized slightly beyond the main environment: every branch is
a chain of `inner` nodes ending in a fan of `outers` (the main maze is three
branches of inner=2, outers=2), which is enough for the hand-checkable
single-node examples in the tests.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .env import TERMINATE, RewardConfig, rr_replay

DEFAULT_STATE_CAP = 50_000_000


@dataclass(frozen=True)
class BranchSpec:
    inner: int
    outers: int

    def __post_init__(self):
        if self.inner < 0 or self.outers < 1:
            raise ValueError("branch needs inner >= 0 and outers >= 1")


@dataclass(frozen=True)
class Scenario:
    probability: float
    # node id -> tuple of (value, prob); probabilities sum to 1 per node
    node_values: Mapping[int, tuple[tuple[float, float], ...]]


@dataclass
class MetaMdpSpec:
    branches: tuple[BranchSpec, ...]
    click_cost_by_depth: tuple[float, ...]
    scenarios: tuple[Scenario, ...]
    state_cap: int = DEFAULT_STATE_CAP

    def __post_init__(self):
        self.branches = tuple(self.branches)
        self.scenarios = tuple(self.scenarios)
        total = sum(s.probability for s in self.scenarios)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"scenario probabilities sum to {total}, not 1")
        self._build_topology()

    def _build_topology(self):
        nodes, depth, branch_of = [], {}, {}
        paths = []
        nid = 1
        for b, br in enumerate(self.branches):
            chain = []
            for d in range(br.inner):
                nodes.append(nid)
                depth[nid] = d + 1
                branch_of[nid] = b
                chain.append(nid)
                nid += 1
            for _ in range(br.outers):
                nodes.append(nid)
                depth[nid] = br.inner + 1
                branch_of[nid] = b
                paths.append(tuple(chain) + (nid,))
                nid += 1
        self.nodes = tuple(nodes)
        self.depth = depth
        self.branch_of = branch_of
        self.paths = tuple(paths)
        for n in self.nodes:
            if self.depth[n] > len(self.click_cost_by_depth):
                raise ValueError("click_cost_by_depth shorter than tree depth")
        # union support per node, sorted for a stable encoding
        self.values_of = {}
        for n in self.nodes:
            vals = set()
            for s in self.scenarios:
                for v, p in s.node_values[n]:
                    if p > 0:
                        vals.add(float(v))
            self.values_of[n] = tuple(sorted(vals))
        self.enumerable_bound = 1
        for n in self.nodes:
            self.enumerable_bound *= len(self.values_of[n]) + 1

    def click_cost(self, node: int) -> float:
        return self.click_cost_by_depth[self.depth[node] - 1]

    def to_json_dict(self) -> dict:
        return {
            "branches": [{"inner": b.inner, "outers": b.outers} for b in self.branches],
            "click_cost_by_depth": list(self.click_cost_by_depth),
            "state_cap": self.state_cap,
            "scenarios": [
                {
                    "probability": s.probability,
                    "nodes": {str(n): [[v, p] for v, p in s.node_values[n]] for n in self.nodes},
                }
                for s in self.scenarios
            ],
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "MetaMdpSpec":
        return cls(
            branches=tuple(BranchSpec(int(b["inner"]), int(b["outers"])) for b in d["branches"]),
            click_cost_by_depth=tuple(d["click_cost_by_depth"]),
            scenarios=tuple(
                Scenario(
                    probability=float(s["probability"]),
                    node_values={
                        int(n): tuple((float(v), float(p)) for v, p in pairs)
                        for n, pairs in s["nodes"].items()
                    },
                )
                for s in d["scenarios"]
            ),
            state_cap=int(d.get("state_cap", DEFAULT_STATE_CAP)),
        )


def reduced_certification_spec(
    positive_immediate: float = 3.0,
    negative_immediate: float = -3.0,
    middle_values: Sequence[float] = (-5.0, 5.0),
    nontarget_outer: float = 0.0,
    target_values: tuple[float, float] = (50.0, -50.0),
    click_costs: tuple[float, float, float] = (1, 3, 30),
) -> MetaMdpSpec:
    """The 12-node maze with supports reduced to desk-scale DP size.

    Sign structure is preserved (one positive immediate per trial, both
    +/-50 outers on that branch, sign-symmetric binary middles); middle and
    non-target supports are shrunk so the belief space stays enumerable.
    """
    branches = tuple(BranchSpec(2, 2) for _ in range(3))
    mid_p = 1.0 / len(middle_values)
    scenarios = []
    for target in range(3):
        for flip in range(2):
            node_values = {}
            nid = 1
            for b in range(3):
                imm = positive_immediate if b == target else negative_immediate
                node_values[nid] = ((imm, 1.0),)
                node_values[nid + 1] = tuple((v, mid_p) for v in middle_values)
                if b == target:
                    plus, minus = target_values
                    node_values[nid + 2] = ((plus if flip == 0 else minus, 1.0),)
                    node_values[nid + 3] = ((minus if flip == 0 else plus, 1.0),)
                else:
                    node_values[nid + 2] = ((nontarget_outer, 1.0),)
                    node_values[nid + 3] = ((nontarget_outer, 1.0),)
                nid += 4
            scenarios.append(Scenario(probability=1.0 / 6, node_values=node_values))
    return MetaMdpSpec(branches=branches, click_cost_by_depth=click_costs, scenarios=scenarios)


def spec_from_reward_config(rc: RewardConfig, click_costs=(1, 3, 30)) -> MetaMdpSpec:
    """Full-fidelity spec of the main environment (usually over the cap)."""
    branches = tuple(BranchSpec(2, 2) for _ in range(3))
    scenarios = []
    for target in range(3):
        for flip in range(2):
            node_values = {}
            nid = 1
            for b in range(3):
                imm_sup = rc.immediate_support_positive if b == target else rc.immediate_support_negative
                node_values[nid] = tuple((float(v), 1.0 / len(imm_sup)) for v in imm_sup)
                node_values[nid + 1] = tuple(
                    (float(v), 1.0 / len(rc.middle_support)) for v in rc.middle_support
                )
                if b == target:
                    plus, minus = rc.target_outer_values
                    node_values[nid + 2] = ((float(plus if flip == 0 else minus), 1.0),)
                    node_values[nid + 3] = ((float(minus if flip == 0 else plus), 1.0),)
                else:
                    sup = rc.nontarget_outer_support
                    node_values[nid + 2] = tuple((float(v), 1.0 / len(sup)) for v in sup)
                    node_values[nid + 3] = tuple((float(v), 1.0 / len(sup)) for v in sup)
                nid += 4
            scenarios.append(Scenario(probability=1.0 / 6, node_values=node_values))
    return MetaMdpSpec(branches=branches, click_cost_by_depth=click_costs, scenarios=scenarios)


# ---------------------------------------------------------------------------


class BeliefView:
    """Read-only view of an observation pattern, duck-typed like the main
    environment's belief for the scripted strategies."""

    __slots__ = ("observed", "click_history", "_spec")

    def __init__(self, spec: MetaMdpSpec, observed: dict, click_history: tuple):
        self._spec = spec
        self.observed = observed
        self.click_history = click_history

    def is_observed(self, node: int) -> bool:
        return node in self.observed

    def unobserved_nodes(self) -> tuple:
        return tuple(n for n in self._spec.nodes if n not in self.observed)

    def last_click(self):
        return self.click_history[-1] if self.click_history else None


class _Solver:
    def __init__(self, spec: MetaMdpSpec):
        self.spec = spec
        if spec.enumerable_bound > spec.state_cap:
            raise ValueError(
                f"belief space bound {spec.enumerable_bound} exceeds cap {spec.state_cap}"
            )
        self.S = len(spec.scenarios)
        self.prior = np.array([s.probability for s in spec.scenarios])
        self.nodes = spec.nodes
        self.node_pos = {n: i for i, n in enumerate(self.nodes)}
        # per scenario, per node: dict value -> prob, and mean
        self.pv = [
            {n: dict(s.node_values[n]) for n in self.nodes} for s in spec.scenarios
        ]
        self.mean = np.array(
            [[sum(v * p for v, p in s.node_values[n]) for n in self.nodes] for s in spec.scenarios]
        )
        self.memo: dict = {}
        self.policy: dict = {}

    def posterior(self, obs: dict) -> np.ndarray:
        w = self.prior.copy()
        for n, v in obs.items():
            for s in range(self.S):
                w[s] *= self.pv[s][n].get(v, 0.0)
        total = w.sum()
        if total <= 0:
            raise ValueError("observation pattern impossible under the spec")
        return w / total

    def term_value(self, obs: dict, post: np.ndarray) -> float:
        best = -np.inf
        for path in self.spec.paths:
            ev = 0.0
            for n in path:
                if n in obs:
                    ev += obs[n]
                else:
                    ev += float(post @ self.mean[:, self.node_pos[n]])
            best = max(best, ev)
        return best

    def value_dist(self, node: int, post: np.ndarray) -> list[tuple[float, float]]:
        out = {}
        for s in range(self.S):
            if post[s] == 0:
                continue
            for v, p in self.pv[s][node].items():
                out[v] = out.get(v, 0.0) + post[s] * p
        return [(v, p) for v, p in sorted(out.items()) if p > 0]

    def _key(self, obs: dict) -> tuple:
        return tuple(obs.get(n) for n in self.nodes)

    def solve(self, obs: dict) -> float:
        key = self._key(obs)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        post = self.posterior(obs)
        best_v = self.term_value(obs, post)
        best_op = TERMINATE
        for n in self.nodes:
            if n in obs:
                continue
            q = -self.spec.click_cost(n)
            for v, p in self.value_dist(n, post):
                obs[n] = v
                q += p * self.solve(obs)
                del obs[n]
            if q > best_v + 1e-12:
                best_v = q
                best_op = n
        self.memo[key] = best_v
        self.policy[key] = best_op
        return best_v


@dataclass
class MetaMdpSolution:
    spec: MetaMdpSpec
    value: float
    state_count: int
    runtime_s: float
    _policy: dict = field(repr=False)
    _solver: _Solver = field(repr=False)

    def policy_op(self, observed: Mapping[int, float]) -> int:
        key = tuple(observed.get(n) for n in self.spec.nodes)
        if key not in self._policy:
            raise KeyError("belief state was not enumerated")
        return self._policy[key]

    def policy_digest(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self._policy, key=str):
            h.update(repr((key, self._policy[key])).encode())
        return h.hexdigest()

    def rollouts(self) -> list[tuple[tuple[int, ...], dict]]:
        """All (click sequence, observed values) pairs reachable under the
        optimal policy, over every positive-probability value realization."""
        out = []

        def rec(obs: dict, clicks: tuple):
            op = self.policy_op(obs)
            if op == TERMINATE:
                out.append((clicks, dict(obs)))
                return
            post = self._solver.posterior(obs)
            for v, p in self._solver.value_dist(op, post):
                obs[op] = v
                rec(obs, clicks + (op,))
                del obs[op]

        rec({}, ())
        return out

    def report(self) -> dict:
        d = {
            "value": self.value,
            "state_count": self.state_count,
            "runtime_s": round(self.runtime_s, 3),
            "policy_digest": self.policy_digest(),
        }
        if tuple(self.spec.branches) == tuple(BranchSpec(2, 2) for _ in range(3)):
            rolls = self.rollouts()
            verdicts = []
            for clicks, obs in rolls:
                st = rr_replay(clicks, obs)
                verdicts.append(st.valid and st.outer_clicked)
            d["rr_conformant_sequences"] = int(sum(verdicts))
            d["total_sequences"] = len(rolls)
            d["all_sequences_adaptive"] = bool(all(verdicts))
        return d


def solve(spec: MetaMdpSpec) -> MetaMdpSolution:
    """Backward induction over all reachable observation patterns."""
    t0 = time.time()
    solver = _Solver(spec)
    value = solver.solve({})
    return MetaMdpSolution(
        spec=spec,
        value=value,
        state_count=len(solver.memo),
        runtime_s=time.time() - t0,
        _policy=solver.policy,
        _solver=solver,
    )


def policy_value(spec: MetaMdpSpec, policy: Callable[[BeliefView], Mapping[int, float]]) -> float:
    """Exact expected score of an arbitrary (possibly stochastic) policy.

    The policy maps a BeliefView to a distribution over operations; the
    expectation is taken over both value realizations and policy choices by
    forward enumeration, so no sampling error is involved.
    """
    solver = _Solver(spec)

    def rec(obs: dict, clicks: tuple) -> float:
        dist = policy(BeliefView(spec, obs, clicks))
        total = 0.0
        post = None
        for op, p_op in dist.items():
            if p_op == 0:
                continue
            if op == TERMINATE:
                if post is None:
                    post = solver.posterior(obs)
                total += p_op * solver.term_value(obs, post)
                continue
            if op in obs:
                raise ValueError(f"policy clicked an observed node {op}")
            if post is None:
                post = solver.posterior(obs)
            q = -spec.click_cost(op)
            for v, pv in solver.value_dist(op, post):
                obs[op] = v
                q += pv * rec(obs, clicks + (op,))
                del obs[op]
            total += p_op * q
        return total

    return rec({}, ())


def rr_policy(view: BeliefView) -> dict[int, float]:
    """The resource-rational strategy as a deterministic policy on the
    standard three-branch maze (lexicographic among equivalent choices)."""
    obs = view.observed
    immediates = (1, 5, 9)
    pos_branch = None
    negatives = []
    for b, imm in enumerate(immediates):
        if imm in obs:
            if obs[imm] > 0:
                pos_branch = b
            else:
                negatives.append(b)
    if pos_branch is None and len(negatives) == 2:
        pos_branch = ({0, 1, 2} - set(negatives)).pop()
    if pos_branch is None:
        for imm in immediates:
            if imm not in obs:
                return {imm: 1.0}
        raise ValueError("no positive branch identifiable")
    outers = (3 + 4 * pos_branch, 4 + 4 * pos_branch)
    if any(o in obs for o in outers):
        return {TERMINATE: 1.0}
    return {outers[0]: 1.0}
