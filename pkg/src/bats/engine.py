"""Interactive troubleshooting sessions and the step planner.

A session is an ordered evidence list over a compiled network. The posterior
over causes is always derived from the evidence on demand (never cached as
authority), which makes retraction and dependency-driven replacement exact:
undo simply restores the previous evidence snapshot.

Planning is greedy expected-cost-of-repair with a one-step question
lookahead: actions are sequenced by success-probability-per-cost under the
evolving posterior, and a question is recommended only when asking it first
provably lowers the expected cost of the remaining plan.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping

import numpy as np

from bats.compiler import CompiledNetwork, CompiledStep
from bats.errors import (
    ContradictoryEvidence,
    NoActionsAvailable,
    NothingToUndo,
    SessionTerminal,
    StepUnaskable,
    UnknownOutcome,
    UnknownStep,
)
from bats.model import CauseDistribution

USER_ENTERED = "user-entered"
DEPENDENCY_FIXED = "dependency-fixed"

ACTIVE = "active"
RESOLVED = "resolved"
UNRESOLVED = "unresolved"

LOOKAHEAD_MARGIN = 1e-12


@dataclass(frozen=True)
class Evidence:
    step_id: str
    outcome: str
    origin: str = USER_ENTERED


@dataclass(frozen=True)
class HistoryEntry:
    step_id: str
    outcome: str
    at: datetime
    previous_evidence: tuple[Evidence, ...] = field(repr=False)


@dataclass(frozen=True)
class Recommendation:
    """The planner's choice, with the numbers that justify it."""

    step_id: str
    kind: str
    ecr: float
    success_probability: float | None = None
    answer_distribution: Mapping[str, float] | None = None
    rationale: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Terminal:
    status: str  # "resolved" | "unresolved"
    resolved_by: str | None = None


class Session:
    """One troubleshooting interaction; mutated by at most one caller at a time."""

    def __init__(self, network: CompiledNetwork):
        self.network = network
        self.evidence: list[Evidence] = []
        self.history: list[HistoryEntry] = []

    @property
    def status(self) -> str:
        rt = _runtime(self.network)
        for ev in self.evidence:
            step = rt.steps.get(ev.step_id)
            if step is not None and step.kind == "repair-action" and ev.outcome == "yes":
                return RESOLVED
        performed = {ev.step_id for ev in self.evidence}
        if all(a in performed for a in rt.action_ids):
            return UNRESOLVED
        return ACTIVE

    @property
    def resolved_by(self) -> str | None:
        rt = _runtime(self.network)
        for ev in self.evidence:
            step = rt.steps.get(ev.step_id)
            if step is not None and step.kind == "repair-action" and ev.outcome == "yes":
                return ev.step_id
        return None

    def evidence_for(self, step_id: str) -> Evidence | None:
        for ev in self.evidence:
            if ev.step_id == step_id:
                return ev
        return None


# ---------------------------------------------------------------------------
# Network runtime (vectorized likelihood tables, caches)
# ---------------------------------------------------------------------------

class _Runtime:
    """Numpy view of a compiled network, cached per network instance."""

    def __init__(self, network: CompiledNetwork):
        self.leaves = tuple(network.prior.entries)
        self.prior = np.array([network.prior.entries[f] for f in self.leaves])
        self.steps: dict[str, CompiledStep] = {s.id: s for s in network.steps}
        self.rows: dict[tuple[str, str], np.ndarray] = {}
        for step in network.steps:
            for outcome in step.outcomes:
                row = step.likelihood[outcome]
                self.rows[(step.id, outcome)] = np.array([row[f] for f in self.leaves])
        # Lexicographic order makes numpy's first-max argmax implement the
        # documented tie-break.
        self.action_ids = tuple(sorted(s.id for s in network.steps if s.is_action))
        self.question_ids = tuple(sorted(s.id for s in network.steps if not s.is_action))
        if self.action_ids:
            self.yes = np.stack([self.rows[(a, "yes")] for a in self.action_ids])
            self.action_costs = np.array([self.steps[a].cost for a in self.action_ids])
        else:
            self.yes = np.zeros((0, len(self.leaves)))
            self.action_costs = np.zeros(0)
        self.deps_by_action: dict[str, list] = {}
        for rule in network.dependencies:
            self.deps_by_action.setdefault(rule.action_id, []).append(rule)
        self.plan_cache: dict[tuple, Recommendation | Terminal] = {}


_runtimes: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _runtime(network: CompiledNetwork) -> _Runtime:
    rt = _runtimes.get(network)
    if rt is None:
        rt = _Runtime(network)
        _runtimes[network] = rt
    return rt


def _weight_vector(rt: _Runtime, evidence: Iterable[Evidence]) -> np.ndarray:
    w = rt.prior.copy()
    for ev in evidence:
        w *= rt.rows[(ev.step_id, ev.outcome)]
    return w


# ---------------------------------------------------------------------------
# Posterior and evidence bookkeeping
# ---------------------------------------------------------------------------

def posterior(session: Session) -> CauseDistribution:
    """P(cause | evidence): prior times recorded likelihoods, normalized.

    Observations are independent given the cause, so the product over the
    evidence list is the exact joint conditioning.
    """
    return posterior_from_evidence(session.network, session.evidence)


def posterior_from_evidence(network: CompiledNetwork,
                            evidence: Iterable[Evidence]) -> CauseDistribution:
    rt = _runtime(network)
    w = _weight_vector(rt, evidence)
    total = w.sum()
    if total <= 0.0:
        raise ContradictoryEvidence(
            "every cause has zero likelihood under the recorded evidence; "
            "the model does not explain these observations")
    w /= total
    return CauseDistribution(dict(zip(rt.leaves, w.tolist())))


def record_outcome(session: Session, step_id: str, outcome: str) -> Session:
    """Append one observed outcome, applying any dependency rules of the step.

    Performing an action that carries dependency rules retracts any existing
    evidence on each rule's question and replaces it with dependency-fixed
    evidence at the rule's answer; those questions stay unaskable afterwards.
    Recording a repair action's yes outcome resolves the session.
    """
    if session.status != ACTIVE:
        raise SessionTerminal(f"session is {session.status}; no further steps can be recorded")
    rt = _runtime(session.network)
    step = rt.steps.get(step_id)
    if step is None:
        raise UnknownStep(f"no step {step_id!r} in this network")
    if outcome not in step.outcomes:
        raise UnknownOutcome(f"{outcome!r} is not an outcome of step {step_id!r}")
    existing = session.evidence_for(step_id)
    if existing is not None and existing.origin == DEPENDENCY_FIXED:
        raise StepUnaskable(
            f"step {step_id!r} was fixed at {existing.outcome!r} by a dependency rule")

    snapshot = tuple(session.evidence)
    if existing is not None:
        session.evidence = [ev for ev in session.evidence if ev.step_id != step_id]
    session.evidence.append(Evidence(step_id, outcome, USER_ENTERED))

    if step.is_action:
        for rule in rt.deps_by_action.get(step_id, ()):
            session.evidence = [ev for ev in session.evidence
                                if ev.step_id != rule.question_id]
            session.evidence.append(
                Evidence(rule.question_id, rule.fixed_answer, DEPENDENCY_FIXED))

    session.history.append(HistoryEntry(
        step_id=step_id,
        outcome=outcome,
        at=datetime.now(timezone.utc),
        previous_evidence=snapshot,
    ))
    return session


def undo_last(session: Session) -> Session:
    """Remove the last recorded outcome and everything it triggered, exactly."""
    if not session.history:
        raise NothingToUndo("no recorded outcome to undo")
    entry = session.history.pop()
    session.evidence = list(entry.previous_evidence)
    return session


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

def _greedy_from_weights(rt: _Runtime, w: np.ndarray,
                         available: list[int]) -> tuple[list[int], float]:
    """Sequence the available actions by p/C under the evolving posterior.

    Returns (chosen indices into ``rt.action_ids``, expected cost of repair).
    The probability of reaching step j is the probability that every earlier
    action failed, tracked as a running product.
    """
    order: list[int] = []
    ecr = 0.0
    reach = 1.0
    w = w.copy()
    avail = list(available)
    while avail:
        total = w.sum()
        if total > 0.0:
            probs = (rt.yes[avail] @ w) / total
        else:
            probs = np.zeros(len(avail))
        costs = rt.action_costs[avail]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(costs > 0.0, probs / costs, np.inf)
        k = int(np.argmax(ratios))
        j = avail.pop(k)
        order.append(j)
        ecr += rt.action_costs[j] * reach
        p = float(probs[k])
        reach *= 1.0 - p
        w = w * (1.0 - rt.yes[j])
    return order, float(ecr)


def _greedy_ecr_batched(rt: _Runtime, W: np.ndarray, available: list[int]) -> np.ndarray:
    """ECR of the greedy action plan for many hypothetical posteriors at once.

    ``W`` holds one unnormalized weight column per hypothesis. Each column
    runs the same loop as :func:`_greedy_from_weights`; batching the matrix
    products keeps the one-step question lookahead fast on large models.
    """
    n_cols = W.shape[1]
    yes = rt.yes[available]
    costs = rt.action_costs[available]
    active = np.ones((len(available), n_cols), dtype=bool)
    reach = np.ones(n_cols)
    ecr = np.zeros(n_cols)
    cols = np.arange(n_cols)
    for _ in range(len(available)):
        totals = W.sum(axis=0)
        raw = yes @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            probs = np.where(totals > 0.0, raw / totals, 0.0)
            ratios = np.where(costs[:, None] > 0.0, probs / costs[:, None], np.inf)
        ratios[~active] = -np.inf
        j = np.argmax(ratios, axis=0)
        pj = probs[j, cols]
        ecr += costs[j] * reach
        reach *= 1.0 - pj
        W = W * (1.0 - yes[j]).T
        active[j, cols] = False
    return ecr


def greedy_action_sequence(network: CompiledNetwork,
                           evidence: Iterable[Evidence] = ()
                           ) -> tuple[tuple[str, ...], float]:
    """Order the unperformed actions by success-per-cost; return plan and ECR.

    At each step the action maximizing p/C is chosen, where p is its success
    probability under the posterior given the evidence plus the hypothesized
    failures of the actions already sequenced. Ties break on lexicographic
    step id. The ECR sums each action's cost times the probability the plan
    reaches it.
    """
    rt = _runtime(network)
    evidence = list(evidence)
    performed = {ev.step_id for ev in evidence}
    available = [i for i, a in enumerate(rt.action_ids) if a not in performed]
    if not available:
        raise NoActionsAvailable("no unperformed actions remain")
    w = _weight_vector(rt, evidence)
    if w.sum() <= 0.0:
        raise ContradictoryEvidence(
            "every cause has zero likelihood under the recorded evidence")
    order, ecr = _greedy_from_weights(rt, w, available)
    return tuple(rt.action_ids[j] for j in order), ecr


def next_step(session: Session) -> Recommendation | Terminal:
    """Recommend the next action or question, or report the terminal state.

    Baseline: the greedy action plan's ECR. Each unanswered, unfixed question
    is evaluated myopically: its cost plus the answer-probability-weighted ECR
    of the greedy plan after each answer. The best question is recommended
    only when it beats the baseline by more than a 1e-12 margin; otherwise the
    first greedy action is. With no actions left the session is unresolved.
    """
    status = session.status
    if status == RESOLVED:
        return Terminal(RESOLVED, resolved_by=session.resolved_by)
    rt = _runtime(session.network)
    evidence = list(session.evidence)
    performed = {ev.step_id for ev in evidence}
    available = [i for i, a in enumerate(rt.action_ids) if a not in performed]
    if not available:
        return Terminal(UNRESOLVED)

    w = _weight_vector(rt, evidence)
    total = w.sum()
    if total <= 0.0:
        raise ContradictoryEvidence(
            "every cause has zero likelihood under the recorded evidence")

    baseline_order, baseline_ecr = _greedy_from_weights(rt, w, available)

    open_questions = [q for q in rt.question_ids if q not in performed]
    best_q: str | None = None
    best_q_ecr = np.inf
    best_q_dist: dict[str, float] = {}
    if open_questions:
        columns: list[np.ndarray] = []
        answer_probs: dict[tuple[str, str], float] = {}
        column_index: dict[tuple[str, str], int] = {}
        for qid in open_questions:
            step = rt.steps[qid]
            for answer in step.outcomes:
                col = w * rt.rows[(qid, answer)]
                p_answer = float(col.sum() / total)
                answer_probs[(qid, answer)] = p_answer
                if p_answer > 0.0:
                    column_index[(qid, answer)] = len(columns)
                    columns.append(col)
        ecr_by_column = (_greedy_ecr_batched(rt, np.stack(columns, axis=1), available)
                         if columns else np.zeros(0))
        for qid in sorted(open_questions):
            step = rt.steps[qid]
            expectation = step.cost
            dist: dict[str, float] = {}
            for answer in step.outcomes:
                p_answer = answer_probs[(qid, answer)]
                dist[answer] = p_answer
                if p_answer > 0.0:
                    expectation += p_answer * float(ecr_by_column[column_index[(qid, answer)]])
            if expectation < best_q_ecr:
                best_q, best_q_ecr, best_q_dist = qid, expectation, dist

    if best_q is not None and best_q_ecr < baseline_ecr - LOOKAHEAD_MARGIN:
        q_step = rt.steps[best_q]
        return Recommendation(
            step_id=best_q,
            kind=q_step.kind,
            ecr=float(best_q_ecr),
            answer_distribution=best_q_dist,
            rationale={"cost": q_step.cost, "baseline_ecr": baseline_ecr},
        )

    first = baseline_order[0]
    action_id = rt.action_ids[first]
    p = float((rt.yes[first] @ w) / total)
    cost = float(rt.action_costs[first])
    efficiency = p / cost if cost > 0.0 else float("inf")
    return Recommendation(
        step_id=action_id,
        kind=rt.steps[action_id].kind,
        ecr=baseline_ecr,
        success_probability=p,
        rationale={"p": p, "cost": cost, "efficiency": efficiency},
    )


def _evidence_key(evidence: Iterable[Evidence]) -> tuple:
    return tuple(sorted((ev.step_id, ev.outcome) for ev in evidence))


def _cached_next_step(session: Session) -> Recommendation | Terminal:
    rt = _runtime(session.network)
    key = _evidence_key(session.evidence)
    hit = rt.plan_cache.get(key)
    if hit is None:
        hit = next_step(session)
        rt.plan_cache[key] = hit
    return hit


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

PLANNER_POLICY = "planner"
RANDOM_POLICY = "random"


@dataclass(frozen=True)
class SimReport:
    policy: str
    trials: int
    seed: int
    resolution_rate: float
    mean_cost: float
    mean_steps: float


def simulate(network: CompiledNetwork, policy: str, trials: int, seed: int) -> SimReport:
    """Monte-Carlo sessions against sampled true causes; deterministic by seed.

    Each trial samples a true cause from the prior, then plays a session,
    sampling every chosen step's outcome from its likelihood row given that
    cause, until the session resolves or runs out of actions. The planner
    policy follows :func:`next_step`; the random policy draws uniformly among
    the unperformed actions and askable questions. Per-trial generators are
    derived from the seed, so results are reproducible run to run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if policy not in (PLANNER_POLICY, RANDOM_POLICY):
        raise ValueError(f"unknown policy {policy!r}")
    rt = _runtime(network)
    n_leaves = len(rt.leaves)

    resolved_count = 0
    total_cost = 0.0
    total_steps = 0
    children = np.random.SeedSequence(seed).spawn(trials)
    for child in children:
        rng = np.random.default_rng(child)
        true_index = int(rng.choice(n_leaves, p=rt.prior))
        session = Session(network)
        while session.status == ACTIVE:
            if policy == PLANNER_POLICY:
                decision = _cached_next_step(session)
                if isinstance(decision, Terminal):
                    break
                step_id = decision.step_id
            else:
                performed = {ev.step_id for ev in session.evidence}
                actions = [a for a in rt.action_ids if a not in performed]
                if not actions:
                    break
                questions = [q for q in rt.question_ids if q not in performed]
                pool = actions + questions
                step_id = pool[int(rng.integers(len(pool)))]
            step = rt.steps[step_id]
            outcome_probs = np.array(
                [rt.rows[(step_id, o)][true_index] for o in step.outcomes])
            outcome = step.outcomes[int(rng.choice(len(step.outcomes), p=outcome_probs))]
            record_outcome(session, step_id, outcome)
            total_cost += step.cost
            total_steps += 1
        if session.status == RESOLVED:
            resolved_count += 1

    return SimReport(
        policy=policy,
        trials=trials,
        seed=seed,
        resolution_rate=resolved_count / trials,
        mean_cost=total_cost / trials,
        mean_steps=total_steps / trials,
    )
