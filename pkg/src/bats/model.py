"""Domain types for error-condition troubleshooter models.

An error condition (e.g. "Light print") is modeled as a tree of causes, a set
of troubleshooting steps (repair/test actions and questions) attached to the
leaf causes, and dependency rules recording which questions an action fixes.
All values are immutable; edits build new model values, so models can be
shared read-only across workers.

Structural validation is total: :func:`validate_model` never raises, it
returns a report of errors and warnings with stable codes and location paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping

import numpy as np

from bats.errors import InfeasibleShortcut

SIBLING_SUM_TOL = 1e-9
DISTRIBUTION_SUM_TOL = 1e-12

REPAIR = "repair"
TEST = "test"


# ---------------------------------------------------------------------------
# Causes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CauseNode:
    """One node of the fault decomposition tree.

    ``cond_prob`` is the probability of this cause given that its parent cause
    is present; siblings must sum to 1. The root stands for the error
    condition itself and carries 1.0 (the device is assumed faulty). ``None``
    marks a probability still to be assigned (library propagation introduces
    these); validation flags it as an error.
    """

    id: str
    name: str
    cond_prob: float | None = None
    children: tuple[CauseNode, ...] = ()
    explanation: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def iter_nodes(self) -> Iterator[CauseNode]:
        """Pre-order traversal, children in declaration order."""
        yield self
        for child in self.children:
            yield from child.iter_nodes()

    def leaves(self) -> Iterator[CauseNode]:
        for node in self.iter_nodes():
            if node.is_leaf:
                yield node

    def find(self, node_id: str) -> CauseNode | None:
        for node in self.iter_nodes():
            if node.id == node_id:
                return node
        return None

    def with_child(self, parent_id: str, child: CauseNode) -> CauseNode:
        """Return a tree with ``child`` appended under ``parent_id``."""
        if self.id == parent_id:
            return replace(self, children=self.children + (child,))
        new_children = tuple(c.with_child(parent_id, child) for c in self.children)
        return replace(self, children=new_children)


@dataclass(frozen=True)
class CauseDistribution:
    """Flat single-fault probability distribution over leaf causes.

    The single-fault assumption makes this one categorical variable whose
    states are the leaf causes; there is no "no problem" state because the
    troubleshooter only runs when the device is known faulty.
    """

    entries: Mapping[str, float]

    def __post_init__(self) -> None:
        total = 0.0
        for cause, p in self.entries.items():
            if not (-1e-15 <= p <= 1.0 + 1e-12):
                raise ValueError(f"probability of {cause!r} out of range: {p}")
            total += p
        if abs(total - 1.0) > DISTRIBUTION_SUM_TOL:
            raise ValueError(f"cause distribution sums to {total!r}, not 1")

    def __getitem__(self, cause_id: str) -> float:
        return self.entries[cause_id]

    def __contains__(self, cause_id: str) -> bool:
        return cause_id in self.entries

    def items(self):
        return self.entries.items()


# ---------------------------------------------------------------------------
# Costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostFactors:
    """Per-step cost inputs: minutes, risk level, dollars, insult level.

    Risk and insult are coarse 0-4 levels; time and money are open-ended.
    """

    time: float = 0.0
    risk: int = 0
    money: float = 0.0
    insult: int = 0


@dataclass(frozen=True)
class CostWeights:
    """Named linear-combination profile turning cost factors into one scalar."""

    alpha: float
    beta: float
    gamma: float
    delta: float
    profile_name: str = "default"

    def __post_init__(self) -> None:
        weights = (self.alpha, self.beta, self.gamma, self.delta)
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ValueError("cost weights must be finite and non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one cost weight must be positive")


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Action:
    """A troubleshooting step the user performs.

    ``kind`` is "repair" (a yes outcome ends the session) or "test" (yields
    information only). ``solves`` maps each leaf cause the action can solve to
    the probability it does so assuming the cause is present, the action is
    performed correctly and its requisites are in order; ``p_correct`` and
    ``p_requisites`` discount that base probability.
    """

    id: str
    name: str
    kind: str = REPAIR
    solves: Mapping[str, float] = field(default_factory=dict)
    p_correct: float = 1.0
    p_requisites: float = 1.0
    costs: CostFactors = field(default_factory=CostFactors)
    explanation: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, kw_only=True)
class Question(object):
    """Base class for information-gathering steps."""

    id: str
    name: str
    answers: tuple[str, ...]
    costs: CostFactors = field(default_factory=CostFactors)
    explanation: str = ""
    extra: Mapping[str, Any] = field(default_factory=dict)

    kind = "question"

    @property
    def associated_causes(self) -> tuple[str, ...]:
        raise NotImplementedError


@dataclass(frozen=True, kw_only=True)
class SymptomQuestion(Question):
    """Question about an effect of the problem, elicited causally.

    ``cause_rows[F][s]`` is P(answer s | cause F present); ``none_row[s]`` is
    the answer distribution when none of the associated causes are present.
    """

    cause_rows: Mapping[str, Mapping[str, float]]
    none_row: Mapping[str, float]

    kind = "symptom"

    @property
    def associated_causes(self) -> tuple[str, ...]:
        return tuple(self.cause_rows)


@dataclass(frozen=True, kw_only=True)
class GeneralQuestion(Question):
    """Question about something that could have caused the problem.

    Elicited anti-causally: ``cause_rows[F][s]`` is P(cause F | answer s) and
    ``answer_priors[s]`` is P(answer s). The compiler reverses these into
    causal rows. The elicited table must respect the law of total probability
    for every associated cause:  P(F) = sum_s P(F | s) * P(s).

    Convenience: for a binary question a cause row may carry only one answer's
    value; the complement is derived from the identity above at compile time.
    """

    cause_rows: Mapping[str, Mapping[str, float]]
    answer_priors: Mapping[str, float]

    kind = "general"

    @property
    def associated_causes(self) -> tuple[str, ...]:
        return tuple(self.cause_rows)


@dataclass(frozen=True, kw_only=True)
class ShortcutQuestion(Question):
    """Question declared by its effect: answers eliminate or identify causes.

    Desugared into a :class:`GeneralQuestion` before compilation; see
    :func:`desugar_shortcut_question`.
    """

    eliminates: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    identifies: Mapping[str, str] = field(default_factory=dict)

    kind = "shortcut"

    @property
    def associated_causes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for answer in self.answers:
            target = self.identifies.get(answer)
            if target is not None:
                seen.setdefault(target)
            for cause in self.eliminates.get(answer, ()):
                seen.setdefault(cause)
        return tuple(seen)


@dataclass(frozen=True)
class DependencyRule:
    """Performing ``action_id`` fixes ``question_id`` at ``fixed_answer``."""

    action_id: str
    question_id: str
    fixed_answer: str
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, kw_only=True)
class ModuleRef:
    """Provenance of a library-module instantiation inside a model.

    ``overrides`` holds the locally assigned conditional probabilities
    (template cause id -> value); ``baseline`` snapshots the mirrored fields
    at the version last synced, enabling three-way conflict detection when the
    library module changes.
    """

    module_id: str
    instance: str
    version: int
    attach_at: str
    overrides: Mapping[str, float] = field(default_factory=dict)
    baseline: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ErrorConditionModel:
    """A complete, self-contained troubleshooter model for one error condition."""

    id: str
    name: str
    cause_tree: CauseNode
    actions: tuple[Action, ...] = ()
    questions: tuple[Question, ...] = ()
    dependencies: tuple[DependencyRule, ...] = ()
    module_refs: tuple[ModuleRef, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def action_by_id(self, action_id: str) -> Action | None:
        for action in self.actions:
            if action.id == action_id:
                return action
        return None

    def question_by_id(self, question_id: str) -> Question | None:
        for question in self.questions:
            if question.id == question_id:
                return question
        return None

    def leaf_ids(self) -> tuple[str, ...]:
        return tuple(node.id for node in self.cause_tree.leaves())


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.upper()} {self.code} at {self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "error")

    @property
    def warnings(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors


class _Collector:
    def __init__(self) -> None:
        self.findings: list[Finding] = []

    def error(self, code: str, path: str, message: str) -> None:
        self.findings.append(Finding("error", code, path, message))

    def warning(self, code: str, path: str, message: str) -> None:
        self.findings.append(Finding("warning", code, path, message))


def _is_prob(value: Any) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0


def _check_costs(out: _Collector, path: str, costs: CostFactors) -> None:
    if not (isinstance(costs.time, (int, float)) and math.isfinite(costs.time) and costs.time >= 0):
        out.error("cost-range", f"{path}/time", f"time must be finite and >= 0, got {costs.time!r}")
    if not (isinstance(costs.money, (int, float)) and math.isfinite(costs.money) and costs.money >= 0):
        out.error("cost-range", f"{path}/money", f"money must be finite and >= 0, got {costs.money!r}")
    for name, level in (("risk", costs.risk), ("insult", costs.insult)):
        if not (isinstance(level, int) and 0 <= level <= 4):
            out.error("cost-range", f"{path}/{name}", f"{name} must be an integer level 0-4, got {level!r}")


def _check_tree(out: _Collector, model: ErrorConditionModel) -> None:
    root = model.cause_tree
    if root.cond_prob != 1.0:
        out.error("root-prob", f"cause_tree/{root.id}",
                  f"root represents the error condition and must have cond_prob 1, got {root.cond_prob!r}")
    seen: set[str] = set()
    for node in root.iter_nodes():
        path = f"cause_tree/{node.id}"
        if not node.id:
            out.error("empty-id", path, "cause id must be non-empty")
        if node.id in seen:
            out.error("duplicate-id", path, f"cause id {node.id!r} appears more than once")
        seen.add(node.id)
        if node is not root:
            if node.cond_prob is None:
                out.error("missing-prob", path, "conditional probability not assigned")
            elif not (isinstance(node.cond_prob, (int, float)) and math.isfinite(node.cond_prob)
                      and 0.0 < node.cond_prob <= 1.0):
                out.error("prob-range", path,
                          f"cond_prob must be in (0, 1], got {node.cond_prob!r}"
                          + (" (a cause that can never occur should be deleted)"
                             if node.cond_prob == 0 else ""))
        if node.children:
            probs = [c.cond_prob for c in node.children]
            if all(p is not None for p in probs):
                total = sum(probs)
                if abs(total - 1.0) > SIBLING_SUM_TOL:
                    out.error("sibling-sum", f"{path}/children",
                              f"children probabilities sum to {total!r}, expected 1")


def _check_action(out: _Collector, action: Action, leaf_ids: set[str]) -> None:
    path = f"actions/{action.id}"
    if not action.id:
        out.error("empty-id", path, "action id must be non-empty")
    if action.kind not in (REPAIR, TEST):
        out.error("action-kind", path, f"kind must be 'repair' or 'test', got {action.kind!r}")
    if not action.solves:
        out.warning("orphan-action", path, f"action {action.name!r} does not solve any cause")
    for cause_id, base in action.solves.items():
        cell = f"{path}/solves/{cause_id}"
        if cause_id not in leaf_ids:
            out.error("unknown-cause", cell, f"{cause_id!r} is not a leaf cause of this model")
        if not _is_prob(base):
            out.error("prob-range", cell, f"solve probability must be in [0, 1], got {base!r}")
    for name, p in (("p_correct", action.p_correct), ("p_requisites", action.p_requisites)):
        if not _is_prob(p):
            out.error("prob-range", f"{path}/{name}", f"{name} must be in [0, 1], got {p!r}")
    _check_costs(out, f"{path}/costs", action.costs)


def _check_distribution(out: _Collector, path: str, row: Mapping[str, float],
                        answers: tuple[str, ...]) -> None:
    for answer, p in row.items():
        if answer not in answers:
            out.error("unknown-answer", f"{path}/{answer}", f"{answer!r} is not a declared answer")
        if not _is_prob(p):
            out.error("prob-range", f"{path}/{answer}", f"probability must be in [0, 1], got {p!r}")
    missing = [a for a in answers if a not in row]
    if missing:
        out.error("row-incomplete", path, f"missing probabilities for answers {missing}")
        return
    total = sum(row[a] for a in answers)
    if abs(total - 1.0) > SIBLING_SUM_TOL:
        out.error("row-sum", path, f"distribution sums to {total!r}, expected 1")


def _check_question(out: _Collector, question: Question, leaf_ids: set[str]) -> None:
    path = f"questions/{question.id}"
    if not question.id:
        out.error("empty-id", path, "question id must be non-empty")
    if len(question.answers) < 2:
        out.error("answer-count", f"{path}/answers",
                  f"a question needs at least 2 answers, got {len(question.answers)}")
    if len(set(question.answers)) != len(question.answers):
        out.error("duplicate-answer", f"{path}/answers", "answer labels must be unique")
    _check_costs(out, f"{path}/costs", question.costs)

    for cause_id in question.associated_causes:
        if cause_id not in leaf_ids:
            out.error("unknown-cause", f"{path}/causes/{cause_id}",
                      f"{cause_id!r} is not a leaf cause of this model")
    if not question.associated_causes:
        out.warning("orphan-question", path,
                    f"question {question.name!r} is associated with no cause")

    if isinstance(question, SymptomQuestion):
        for cause_id, row in question.cause_rows.items():
            _check_distribution(out, f"{path}/cause_rows/{cause_id}", row, question.answers)
        _check_distribution(out, f"{path}/none_row", question.none_row, question.answers)
    elif isinstance(question, GeneralQuestion):
        _check_distribution(out, f"{path}/answer_priors", question.answer_priors, question.answers)
        for cause_id, row in question.cause_rows.items():
            row_path = f"{path}/cause_rows/{cause_id}"
            for answer, p in row.items():
                if answer not in question.answers:
                    out.error("unknown-answer", f"{row_path}/{answer}",
                              f"{answer!r} is not a declared answer")
                if not _is_prob(p):
                    out.error("prob-range", f"{row_path}/{answer}",
                              f"probability must be in [0, 1], got {p!r}")
            missing = [a for a in question.answers if a not in row]
            # A binary question may elicit one direction only; the complement
            # is derived at compile time.
            if missing and not (len(question.answers) == 2 and len(missing) == 1):
                out.error("row-incomplete", row_path,
                          f"missing probabilities for answers {missing}")
    elif isinstance(question, ShortcutQuestion):
        for answer, causes in question.eliminates.items():
            if answer not in question.answers:
                out.error("unknown-answer", f"{path}/eliminates/{answer}",
                          f"{answer!r} is not a declared answer")
            for cause_id in causes:
                if cause_id not in leaf_ids:
                    out.error("unknown-cause", f"{path}/eliminates/{answer}/{cause_id}",
                              f"{cause_id!r} is not a leaf cause of this model")
        for answer, cause_id in question.identifies.items():
            if answer not in question.answers:
                out.error("unknown-answer", f"{path}/identifies/{answer}",
                          f"{answer!r} is not a declared answer")
            if cause_id not in leaf_ids:
                out.error("unknown-cause", f"{path}/identifies/{answer}",
                          f"{cause_id!r} is not a leaf cause of this model")
            if cause_id in question.eliminates.get(answer, ()):
                out.error("shortcut-conflict", f"{path}/identifies/{answer}",
                          f"answer {answer!r} both identifies and eliminates {cause_id!r}")


def validate_model(model: ErrorConditionModel) -> ValidationReport:
    """Check every structural invariant; report errors and warnings.

    Validation is total and pure: it never raises, and the same model value
    always yields the same report.
    """
    out = _Collector()
    if not model.id:
        out.error("empty-id", "id", "model id must be non-empty")

    _check_tree(out, model)
    leaf_ids = {node.id for node in model.cause_tree.leaves()}

    step_ids: set[str] = set()
    for action in model.actions:
        if action.id in step_ids:
            out.error("duplicate-id", f"actions/{action.id}",
                      f"step id {action.id!r} appears more than once")
        step_ids.add(action.id)
        _check_action(out, action, leaf_ids)
    for question in model.questions:
        if question.id in step_ids:
            out.error("duplicate-id", f"questions/{question.id}",
                      f"step id {question.id!r} appears more than once")
        step_ids.add(question.id)
        _check_question(out, question, leaf_ids)

    action_ids = {a.id for a in model.actions}
    question_index = {q.id: q for q in model.questions}
    for i, rule in enumerate(model.dependencies):
        path = f"dependencies/{i}"
        if rule.action_id not in action_ids:
            out.error("unknown-ref", f"{path}/action_id",
                      f"{rule.action_id!r} is not an action of this model")
        question = question_index.get(rule.question_id)
        if question is None:
            out.error("unknown-ref", f"{path}/question_id",
                      f"{rule.question_id!r} is not a question of this model")
        elif rule.fixed_answer not in question.answers:
            out.error("unknown-answer", f"{path}/fixed_answer",
                      f"{rule.fixed_answer!r} is not an answer of {rule.question_id!r}")

    for i, ref in enumerate(model.module_refs):
        if model.cause_tree.find(ref.attach_at) is None:
            out.error("unknown-ref", f"module_refs/{i}/attach_at",
                      f"{ref.attach_at!r} is not a cause of this model")

    solved: set[str] = set()
    for action in model.actions:
        solved.update(action.solves)
    for leaf_id in sorted(leaf_ids - solved):
        out.warning("orphan-cause", f"cause_tree/{leaf_id}",
                    f"leaf cause {leaf_id!r} is not solved by any action")

    return ValidationReport(tuple(out.findings))


# ---------------------------------------------------------------------------
# Shortcut desugaring
# ---------------------------------------------------------------------------

def _closest_to_uniform(A: np.ndarray, b: np.ndarray, n: int) -> np.ndarray | None:
    """Solve min ||p - uniform||^2 s.t. A p = b, p >= 0 (tiny active-set loop).

    Returns None when no nonnegative solution satisfies the equations within
    1e-9.
    """
    u = np.full(n, 1.0 / n)
    pinned: set[int] = set()
    for _ in range(n + 1):
        free = [j for j in range(n) if j not in pinned]
        if not free:
            return None
        Af = A[:, free]
        particular, *_ = np.linalg.lstsq(Af, b, rcond=None)
        if np.max(np.abs(Af @ particular - b)) > 1e-9:
            return None
        # Project onto the affine solution set, moving toward uniform.
        _, s, vt = np.linalg.svd(Af, full_matrices=True)
        rank = int(np.sum(s > max(Af.shape) * (s[0] if s.size else 0) * np.finfo(float).eps))
        null_basis = vt[rank:].T
        uf = u[free]
        pf = particular + null_basis @ (null_basis.T @ (uf - particular))
        if np.min(pf, initial=0.0) >= -1e-10:
            p = np.zeros(n)
            p[free] = np.clip(pf, 0.0, None)
            return p
        pinned.add(free[int(np.argmin(pf))])
    return None


def desugar_shortcut_question(question: ShortcutQuestion,
                              prior: CauseDistribution) -> GeneralQuestion:
    """Expand a shortcut question into an equivalent general question.

    An answer that eliminates cause F forces P(F | answer) = 0; an answer that
    identifies F forces P(F | answer) = 1 and every other associated cause to
    0. Unconstrained cells are filled by neutrality (P(F | answer) = P(F)), so
    causes the shortcut does not mention keep their posterior untouched. The
    answer priors are then solved so the law of total probability holds for
    every associated cause; leftover freedom is resolved toward the uniform
    prior.

    Raises :class:`InfeasibleShortcut` when the eliminate/identify pattern
    admits no answer-prior distribution.
    """
    causes = question.associated_causes
    answers = question.answers
    for cause_id in causes:
        if cause_id not in prior:
            raise ValueError(f"prior does not cover associated cause {cause_id!r}")

    # Cell pattern: 1 (identified), 0 (eliminated / other cause identified),
    # or None (neutral fill).
    pattern: dict[str, dict[str, float | None]] = {c: {} for c in causes}
    for answer in answers:
        identified = question.identifies.get(answer)
        eliminated = set(question.eliminates.get(answer, ()))
        for cause_id in causes:
            if identified is not None:
                value: float | None = 1.0 if cause_id == identified else 0.0
            elif cause_id in eliminated:
                value = 0.0
            else:
                value = None
            pattern[cause_id][answer] = value

    # One linear equation per cause:  sum_{s identified} p_s
    #   + P(F) * sum_{s neutral} p_s = P(F),  plus sum_s p_s = 1.
    n = len(answers)
    rows = []
    rhs = []
    for cause_id in causes:
        coeff = np.zeros(n)
        for j, answer in enumerate(answers):
            cell = pattern[cause_id][answer]
            if cell is None:
                coeff[j] = prior[cause_id]
            elif cell == 1.0:
                coeff[j] = 1.0
        rows.append(coeff)
        rhs.append(prior[cause_id])
    rows.append(np.ones(n))
    rhs.append(1.0)

    solution = _closest_to_uniform(np.array(rows), np.array(rhs), n)
    if solution is None:
        raise InfeasibleShortcut(
            f"shortcut question {question.id!r}: no answer-prior distribution satisfies "
            "the eliminate/identify pattern against this cause prior")

    answer_priors = {answer: float(solution[j]) for j, answer in enumerate(answers)}
    cause_rows = {
        cause_id: {
            answer: (prior[cause_id] if pattern[cause_id][answer] is None
                     else pattern[cause_id][answer])
            for answer in answers
        }
        for cause_id in causes
    }
    return GeneralQuestion(
        id=question.id,
        name=question.name,
        answers=answers,
        costs=question.costs,
        explanation=question.explanation,
        extra=question.extra,
        cause_rows=cause_rows,
        answer_priors=answer_priors,
    )
