"""Shared builders, random generators and independent oracles for the suite."""

from __future__ import annotations

import itertools
from typing import Iterable, Mapping

import numpy as np
import pytest

from bats.compiler import CompiledNetwork
from bats.engine import Evidence
from bats.model import (
    Action,
    CauseDistribution,
    CauseNode,
    CostFactors,
    CostWeights,
    DependencyRule,
    ErrorConditionModel,
    GeneralQuestion,
    ShortcutQuestion,
    SymptomQuestion,
)

UNIT_WEIGHTS = CostWeights(1.0, 1.0, 1.0, 1.0, "unit")


# ---------------------------------------------------------------------------
# Hand-built fixtures
# ---------------------------------------------------------------------------

def three_cause_tree() -> CauseNode:
    """root -> {c1: 0.7 -> {s1: 0.4, s2: 0.6}, c2: 0.3}; leaves 0.28/0.42/0.30."""
    return CauseNode("root", "Light print", 1.0, (
        CauseNode("c1", "Toner cartridge", 0.7, (
            CauseNode("s1", "Defective cartridge", 0.4),
            CauseNode("s2", "Empty cartridge", 0.6),
        )),
        CauseNode("c2", "Paper", 0.3),
    ))


def three_cause_model() -> ErrorConditionModel:
    """Fully consistent 3-leaf / 2-action / 1-question model; no findings."""
    return ErrorConditionModel(
        id="light-print",
        name="Light print",
        cause_tree=three_cause_tree(),
        actions=(
            Action("a-swap-cartridge", "Swap the toner cartridge", "repair",
                   solves={"s1": 1.0, "s2": 1.0}, p_correct=0.9,
                   costs=CostFactors(time=5.0)),
            Action("a-change-paper", "Try different paper", "repair",
                   solves={"c2": 0.8}, costs=CostFactors(time=2.0)),
        ),
        questions=(
            SymptomQuestion(
                id="q-streaks",
                name="Are there vertical streaks?",
                answers=("yes", "no"),
                costs=CostFactors(time=1.0),
                cause_rows={"s1": {"yes": 0.8, "no": 0.2}},
                none_row={"yes": 0.1, "no": 0.9},
            ),
        ),
    )


@pytest.fixture
def hand_model() -> ErrorConditionModel:
    return three_cause_model()


def benchmark_model() -> ErrorConditionModel:
    """Fixed 5-cause / 5-action / 2-question model for simulation benchmarks.

    The general question's table is constructed from causal conditionals so
    it is consistent by construction.
    """
    tree = CauseNode("root", "No output", 1.0, (
        CauseNode("power", "Power supply", 0.30),
        CauseNode("cable", "Cable", 0.25),
        CauseNode("driver", "Printer driver", 0.20),
        CauseNode("spooler", "Spooler", 0.15),
        CauseNode("firmware", "Firmware", 0.10),
    ))
    prior = {"power": 0.30, "cable": 0.25, "driver": 0.20,
             "spooler": 0.15, "firmware": 0.10}

    # Anti-causal table for "did anything change recently?" derived from
    # per-cause answer conditionals, so total probability holds exactly.
    causal_yes = {"power": 0.10, "cable": 0.10, "driver": 0.70,
                  "spooler": 0.20, "firmware": 0.80}
    p_yes = sum(causal_yes[f] * prior[f] for f in prior)
    associated = ("driver", "firmware")
    cause_rows = {}
    for f in associated:
        t_yes = causal_yes[f] * prior[f] / p_yes
        t_no = (1.0 - causal_yes[f]) * prior[f] / (1.0 - p_yes)
        cause_rows[f] = {"yes": t_yes, "no": t_no}

    return ErrorConditionModel(
        id="bench",
        name="No output benchmark",
        cause_tree=tree,
        actions=(
            Action("a-check-power", "Check the power cord", "repair",
                   solves={"power": 0.95}, costs=CostFactors(time=2.0)),
            Action("a-reseat-cable", "Reseat the cable", "repair",
                   solves={"cable": 0.90}, costs=CostFactors(time=3.0)),
            Action("a-reinstall-driver", "Reinstall the driver", "repair",
                   solves={"driver": 0.85}, costs=CostFactors(time=15.0)),
            Action("a-clear-spooler", "Clear the spool queue", "repair",
                   solves={"spooler": 0.90, "driver": 0.20},
                   costs=CostFactors(time=5.0)),
            Action("a-update-firmware", "Update the firmware", "repair",
                   solves={"firmware": 0.80}, costs=CostFactors(time=30.0, risk=1)),
        ),
        questions=(
            SymptomQuestion(
                id="q-panel-dark",
                name="Is the front panel dark?",
                answers=("yes", "no"),
                costs=CostFactors(time=1.0),
                cause_rows={
                    "power": {"yes": 0.95, "no": 0.05},
                    "cable": {"yes": 0.30, "no": 0.70},
                },
                none_row={"yes": 0.02, "no": 0.98},
            ),
            GeneralQuestion(
                id="q-recent-change",
                name="Did anything change on the computer recently?",
                answers=("yes", "no"),
                costs=CostFactors(time=1.0),
                cause_rows=cause_rows,
                answer_priors={"yes": p_yes, "no": 1.0 - p_yes},
            ),
        ),
        dependencies=(
            DependencyRule("a-reinstall-driver", "q-recent-change", "yes"),
        ),
    )


# ---------------------------------------------------------------------------
# Random generation (seeded; shapes follow the acceptance-criteria bounds)
# ---------------------------------------------------------------------------

def random_sibling_probs(rng: np.random.Generator, n: int) -> list[float]:
    raw = rng.uniform(0.05, 1.0, size=n)
    raw /= raw.sum()
    return [float(x) for x in raw]


def random_tree(rng: np.random.Generator, max_depth: int = 5,
                max_branching: int = 6) -> CauseNode:
    counter = itertools.count()

    def build(depth: int, cond_prob: float | None) -> CauseNode:
        node_id = f"n{next(counter)}"
        if depth >= max_depth or rng.random() < 0.35:
            return CauseNode(node_id, node_id, cond_prob)
        width = int(rng.integers(1, max_branching + 1))
        probs = random_sibling_probs(rng, width)
        children = tuple(build(depth + 1, probs[i]) for i in range(width))
        return CauseNode(node_id, node_id, cond_prob, children)

    root = build(0, 1.0)
    if root.is_leaf:  # keep at least one real level
        probs = random_sibling_probs(rng, 2)
        root = CauseNode(root.id, root.name, 1.0, (
            CauseNode("leaf-a", "leaf-a", probs[0]),
            CauseNode("leaf-b", "leaf-b", probs[1]),
        ))
    return root


def random_consistent_general(rng: np.random.Generator,
                              prior: Mapping[str, float],
                              associated: Iterable[str],
                              answers: Iterable[str],
                              question_id: str = "q") -> GeneralQuestion:
    """Build a consistent anti-causal table by inverting a sampled joint."""
    answers = tuple(answers)
    associated = tuple(associated)
    causal = {f: rng.dirichlet(np.ones(len(answers))) for f in prior}
    p_answer = {
        s: sum(causal[f][j] * prior[f] for f in prior)
        for j, s in enumerate(answers)
    }
    # Guard against vanishing answer mass; renormalize a floor in if needed.
    if min(p_answer.values()) < 1e-6:
        causal = {f: (causal[f] + 0.05) / (1.0 + 0.05 * len(answers)) for f in prior}
        p_answer = {
            s: sum(causal[f][j] * prior[f] for f in prior)
            for j, s in enumerate(answers)
        }
    cause_rows = {
        f: {s: causal[f][j] * prior[f] / p_answer[s] for j, s in enumerate(answers)}
        for f in associated
    }
    return GeneralQuestion(
        id=question_id,
        name=question_id,
        answers=answers,
        cause_rows=cause_rows,
        answer_priors=dict(p_answer),
    )


def random_symptom(rng: np.random.Generator, prior: Mapping[str, float],
                   associated: Iterable[str], answers: Iterable[str],
                   question_id: str = "q") -> SymptomQuestion:
    answers = tuple(answers)

    def row() -> dict[str, float]:
        values = rng.dirichlet(np.ones(len(answers)))
        return {s: float(values[j]) for j, s in enumerate(answers)}

    return SymptomQuestion(
        id=question_id,
        name=question_id,
        answers=answers,
        cause_rows={f: row() for f in associated},
        none_row=row(),
    )


def random_model(rng: np.random.Generator, max_leaves: int = 5,
                 max_actions: int = 3, max_questions: int = 3,
                 with_dependencies: bool = False) -> ErrorConditionModel:
    n_leaves = int(rng.integers(2, max_leaves + 1))
    probs = random_sibling_probs(rng, n_leaves)
    leaves = tuple(
        CauseNode(f"f{i}", f"f{i}", probs[i]) for i in range(n_leaves))
    tree = CauseNode("root", "root", 1.0, leaves)
    leaf_ids = [leaf.id for leaf in leaves]
    prior = dict(zip(leaf_ids, probs))

    actions = []
    n_actions = int(rng.integers(1, max_actions + 1))
    for i in range(n_actions):
        count = int(rng.integers(1, n_leaves + 1))
        chosen = list(rng.choice(leaf_ids, size=count, replace=False))
        actions.append(Action(
            f"a{i}", f"a{i}",
            kind="repair" if rng.random() < 0.8 else "test",
            solves={c: float(rng.uniform(0.2, 1.0)) for c in chosen},
            p_correct=float(rng.uniform(0.7, 1.0)),
            p_requisites=float(rng.uniform(0.7, 1.0)),
            costs=CostFactors(time=float(rng.uniform(1.0, 20.0)),
                              risk=int(rng.integers(0, 5)),
                              money=float(rng.uniform(0.0, 10.0)),
                              insult=int(rng.integers(0, 5))),
        ))

    questions = []
    n_questions = int(rng.integers(0, max_questions + 1))
    for i in range(n_questions):
        qid = f"q{i}"
        count = int(rng.integers(1, n_leaves + 1))
        associated = list(rng.choice(leaf_ids, size=count, replace=False))
        kind = rng.random()
        if kind < 0.45:
            questions.append(random_symptom(rng, prior, associated, ("yes", "no"), qid))
        elif kind < 0.9:
            questions.append(random_consistent_general(
                rng, prior, associated, ("yes", "no"), qid))
        else:
            target = associated[0]
            questions.append(ShortcutQuestion(
                id=qid, name=qid, answers=("yes", "no"),
                identifies={"yes": target}, eliminates={"no": (target,)}))

    dependencies = ()
    if with_dependencies and questions and rng.random() < 0.5:
        dependencies = (DependencyRule(
            actions[0].id, questions[0].id,
            questions[0].answers[int(rng.integers(len(questions[0].answers)))]),)

    return ErrorConditionModel(
        id=f"m-{rng.integers(1_000_000)}",
        name="random model",
        cause_tree=tree,
        actions=tuple(actions),
        questions=tuple(questions),
        dependencies=dependencies,
    )


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def joint_posterior_oracle(network: CompiledNetwork,
                           evidence: Iterable[Evidence]) -> dict[str, float] | None:
    """Posterior by brute force: enumerate the full joint over the cause and
    every step's outcome, then condition on the recorded outcomes by
    summation. Returns None when the evidence has zero probability.
    """
    leaves = list(network.prior.entries)
    steps = list(network.steps)
    want = {ev.step_id: ev.outcome for ev in evidence}
    mass = {f: 0.0 for f in leaves}
    for f in leaves:
        base = network.prior.entries[f]
        for assignment in itertools.product(*[s.outcomes for s in steps]):
            keep = True
            p = base
            for step, outcome in zip(steps, assignment):
                if step.id in want and want[step.id] != outcome:
                    keep = False
                    break
                p *= step.likelihood[outcome][f]
            if keep:
                mass[f] += p
    total = sum(mass.values())
    if total <= 0.0:
        return None
    return {f: mass[f] / total for f in leaves}


def disjoint_instance_ecr(priors: list[float], solves: list[float],
                          costs: list[float], order: Iterable[int]) -> float:
    """Closed-form plan cost when action i solves only cause i.

    Success events are disjoint under the single-fault assumption, so the
    probability of reaching step j is 1 minus the accumulated success mass.
    """
    ecr = 0.0
    cum = 0.0
    for j in order:
        ecr += costs[j] * (1.0 - cum)
        cum += priors[j] * solves[j]
    return ecr


def exhaustive_min_ecr(priors: list[float], solves: list[float],
                       costs: list[float]) -> float:
    n = len(priors)
    return min(
        disjoint_instance_ecr(priors, solves, costs, perm)
        for perm in itertools.permutations(range(n))
    )


def make_distribution(entries: Mapping[str, float]) -> CauseDistribution:
    return CauseDistribution(dict(entries))
