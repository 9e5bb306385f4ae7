"""Compile a validated model into the runnable single-fault network.

The compiled form is the cause-indicator prior plus one conditional row per
step outcome: actions get a yes-row from their composed solve probabilities
(zero for causes they cannot solve) and the complementary no-row; symptom
questions copy their elicited rows, with the none-of-the-associated-causes
row applied to every non-associated leaf; shortcut questions are desugared
and, like general questions, reversed into causal rows. Costs are resolved
under the given weight profile.

Compilation is deterministic: causes and answers are always iterated in
declaration order, so identical inputs yield identical networks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from bats.elicitation import (
    INPUT_RESIDUAL_TOL,
    action_solve_probability,
    collapse_cause_tree,
    combine_costs,
    complete_binary_rows,
    reverse_general_question,
)
from bats.errors import BatsError, CompileBlocked
from bats.model import (
    CauseDistribution,
    CostWeights,
    DependencyRule,
    ErrorConditionModel,
    GeneralQuestion,
    ShortcutQuestion,
    SymptomQuestion,
    desugar_shortcut_question,
    validate_model,
)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CompiledStep:
    """One child of the cause indicator: likelihood rows plus a scalar cost.

    ``likelihood[outcome][leaf]`` is P(outcome | leaf cause present); for each
    leaf the outcome probabilities sum to 1.
    """

    id: str
    kind: str  # "repair-action" | "test-action" | "question"
    outcomes: tuple[str, ...]
    likelihood: Mapping[str, Mapping[str, float]]
    cost: float

    @property
    def is_action(self) -> bool:
        return self.kind.endswith("-action")


@dataclass(frozen=True, eq=False)
class CompiledNetwork:
    model_id: str
    profile: str
    prior: CauseDistribution
    steps: tuple[CompiledStep, ...]
    dependencies: tuple[DependencyRule, ...] = ()

    def step_by_id(self, step_id: str) -> CompiledStep | None:
        for step in self.steps:
            if step.id == step_id:
                return step
        return None


def _question_likelihood(answers: tuple[str, ...], leaves: tuple[str, ...],
                         rows_by_leaf: Mapping[str, Mapping[str, float]]
                         ) -> dict[str, dict[str, float]]:
    """Transpose leaf-keyed rows into outcome-keyed rows, normalized per leaf.

    Normalization keeps the per-leaf outcome sum at exactly 1 even when the
    elicited input only met the looser human tolerance; it is a no-op for
    machine-consistent tables.
    """
    likelihood: dict[str, dict[str, float]] = {answer: {} for answer in answers}
    for leaf in leaves:
        row = rows_by_leaf[leaf]
        total = 0.0
        for answer in answers:
            total += row[answer]
        if total <= 0.0:
            raise CompileBlocked(
                f"leaf {leaf!r} has all-zero answer probabilities; no outcome is possible")
        for answer in answers:
            likelihood[answer][leaf] = row[answer] / total
    return likelihood


def compile_model(model: ErrorConditionModel, weights: CostWeights,
                  *, input_tolerance: float = INPUT_RESIDUAL_TOL) -> CompiledNetwork:
    """Turn a validated model into a :class:`CompiledNetwork`.

    Raises :class:`CompileBlocked` when validation reports errors or a
    question is associated with no cause; elicitation failures (inconsistent
    tables, contradictory shortcuts) propagate with the step id attached.
    """
    report = validate_model(model)
    if not report.ok:
        raise CompileBlocked(
            "model has validation errors: "
            + "; ".join(str(f) for f in report.errors), report=report)
    for question in model.questions:
        if not question.associated_causes:
            raise CompileBlocked(
                f"question {question.id!r} is associated with no cause and cannot be compiled")

    prior = collapse_cause_tree(model.cause_tree)
    leaves = tuple(prior.entries)

    steps: list[CompiledStep] = []
    for action in model.actions:
        yes_row: dict[str, float] = {}
        no_row: dict[str, float] = {}
        for leaf in leaves:
            if leaf in action.solves:
                p = action_solve_probability(
                    action.solves[leaf], action.p_correct, action.p_requisites)
            else:
                p = 0.0
            yes_row[leaf] = p
            no_row[leaf] = 1.0 - p
        steps.append(CompiledStep(
            id=action.id,
            kind=f"{action.kind}-action",
            outcomes=("yes", "no"),
            likelihood={"yes": yes_row, "no": no_row},
            cost=combine_costs(action.costs, weights),
        ))

    for question in model.questions:
        try:
            if isinstance(question, ShortcutQuestion):
                general: GeneralQuestion | None = desugar_shortcut_question(question, prior)
            elif isinstance(question, GeneralQuestion):
                general = complete_binary_rows(question, prior)
            else:
                general = None

            if general is not None:
                reversed_q = reverse_general_question(
                    general, prior, residual_tol=input_tolerance)
                rows_by_leaf = reversed_q.rows
            else:
                assert isinstance(question, SymptomQuestion)
                rows_by_leaf = {
                    leaf: question.cause_rows.get(leaf, question.none_row)
                    for leaf in leaves
                }
        except BatsError as exc:
            if isinstance(exc, CompileBlocked):
                raise
            raise type(exc)(f"step {question.id!r}: {exc}", step_id=question.id) from exc

        steps.append(CompiledStep(
            id=question.id,
            kind="question",
            outcomes=question.answers,
            likelihood=_question_likelihood(question.answers, leaves, rows_by_leaf),
            cost=combine_costs(question.costs, weights),
        ))

    return CompiledNetwork(
        model_id=model.id,
        profile=weights.profile_name,
        prior=prior,
        steps=tuple(steps),
        dependencies=model.dependencies,
    )
