"""Knowledge-acquisition math.

Everything a model author's numbers flow through before compilation lives
here: collapsing the cause tree into the flat single-fault distribution,
composing an action's solve probability from its three elicited pieces,
combining cost factors, checking and repairing anti-causal question tables
(total-probability residuals, Bayes reversal, wish fitting, coupled-slider
adjustment).

All functions are pure over immutable inputs.

Two residual tolerances apply throughout: human-entered tables are accepted
at ``INPUT_RESIDUAL_TOL`` (decimals typed into an editor), machine-produced
tables must meet ``MACHINE_RESIDUAL_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from bats.errors import (
    InconsistentElicitation,
    InfeasibleAdjustment,
    InvalidTree,
    OutOfRange,
    UnknownNode,
    ZeroPrior,
)
from bats.model import (
    SIBLING_SUM_TOL,
    CauseDistribution,
    CauseNode,
    CostFactors,
    CostWeights,
    GeneralQuestion,
)

INPUT_RESIDUAL_TOL = 1e-6
MACHINE_RESIDUAL_TOL = 1e-9

WISH_LEVEL_MIN = -3
WISH_LEVEL_MAX = 3


# ---------------------------------------------------------------------------
# Cause tree -> cause indicator distribution
# ---------------------------------------------------------------------------

def collapse_cause_tree(tree: CauseNode) -> CauseDistribution:
    """Flatten the cause tree into the single-fault leaf distribution.

    Each leaf's probability is the product of the conditional probabilities
    along its root-to-leaf path; because siblings sum to 1 at every level, the
    leaf probabilities sum to 1. Refuses trees that violate the sibling-sum or
    range invariants rather than collapsing silently-wrong input.
    """
    if tree.cond_prob != 1.0:
        raise InvalidTree(
            f"root {tree.id!r} must have cond_prob 1 (device assumed faulty), "
            f"got {tree.cond_prob!r}")
    for node in tree.iter_nodes():
        if node is not tree:
            if node.cond_prob is None:
                raise InvalidTree(f"cause {node.id!r} has no conditional probability")
            if not 0.0 < node.cond_prob <= 1.0:
                raise InvalidTree(
                    f"cause {node.id!r} has cond_prob {node.cond_prob!r}, outside (0, 1]")
        if node.children:
            total = sum(child.cond_prob for child in node.children)
            if abs(total - 1.0) > SIBLING_SUM_TOL:
                raise InvalidTree(
                    f"children of {node.id!r} sum to {total!r}, expected 1")

    entries: dict[str, float] = {}

    def walk(node: CauseNode, acc: float) -> None:
        if node.is_leaf:
            entries[node.id] = acc
            return
        for child in node.children:
            walk(child, acc * child.cond_prob)

    walk(tree, 1.0)
    return CauseDistribution(entries)


def aggregate_cause_probability(dist: CauseDistribution, tree: CauseNode,
                                node_id: str) -> float:
    """Probability mass of a (possibly internal) cause: sum of its leaf descendants.

    The recursion adds children left to right, so the aggregate of a parent is
    bit-identical to the sum of its children's aggregates.
    """
    node = tree.find(node_id)
    if node is None:
        raise UnknownNode(f"no cause {node_id!r} in tree {tree.id!r}")

    def value(n: CauseNode) -> float:
        if n.is_leaf:
            try:
                return dist.entries[n.id]
            except KeyError:
                raise UnknownNode(f"distribution has no entry for leaf {n.id!r}") from None
        total = 0.0
        for child in n.children:
            total += value(child)
        return total

    return value(node)


# ---------------------------------------------------------------------------
# Actions and costs
# ---------------------------------------------------------------------------

def action_solve_probability(base: float, p_correct: float, p_requisites: float) -> float:
    """Compose an action's overall solve probability for one cause.

    ``base`` assumes the cause is present, the user performs the action
    correctly and all requisites are in working order; the other two factors
    discount it. The three events are independent, so the result is the plain
    product.
    """
    for name, p in (("base", base), ("p_correct", p_correct), ("p_requisites", p_requisites)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {p!r}")
    return base * p_correct * p_requisites


def combine_costs(factors: CostFactors, weights: CostWeights) -> float:
    """Linear combination of the four cost factors under a weight profile."""
    return (weights.alpha * factors.time
            + weights.beta * factors.risk
            + weights.gamma * factors.money
            + weights.delta * factors.insult)


# ---------------------------------------------------------------------------
# Anti-causal (general) question tables
# ---------------------------------------------------------------------------

def total_probability_residuals(question: GeneralQuestion,
                                prior: CauseDistribution) -> dict[str, float]:
    """Per-cause residual of the law of total probability.

    residual(F) = P(F) - sum_s P(F | answer s) * P(answer s). A consistently
    elicited table has all residuals at zero; the two tolerance regimes above
    say how much slack is acceptable.
    """
    residuals: dict[str, float] = {}
    for cause_id, row in question.cause_rows.items():
        if cause_id not in prior:
            raise ValueError(f"prior does not cover associated cause {cause_id!r}")
        acc = 0.0
        for answer in question.answers:
            try:
                acc += row[answer] * question.answer_priors[answer]
            except KeyError:
                raise ValueError(
                    f"question {question.id!r} row for {cause_id!r} has no value for "
                    f"answer {answer!r}; complete the table first") from None
        residuals[cause_id] = prior[cause_id] - acc
    return residuals


def complete_binary_rows(question: GeneralQuestion,
                         prior: CauseDistribution) -> GeneralQuestion:
    """Fill the missing answer of one-sided binary rows from total probability.

    Authors of binary questions often elicit only one direction; the other
    cell is implied:  P(F | other) = (P(F) - P(F | s) P(s)) / P(other).
    Rows already complete are returned untouched. Raises
    :class:`OutOfRange` when the implied cell falls outside [0, 1] (the
    elicited value contradicts the cause prior).
    """
    if len(question.answers) != 2:
        return question
    changed = False
    new_rows: dict[str, Mapping[str, float]] = {}
    for cause_id, row in question.cause_rows.items():
        missing = [a for a in question.answers if a not in row]
        if not missing:
            new_rows[cause_id] = row
            continue
        if len(missing) == 2:
            raise ValueError(
                f"question {question.id!r} row for {cause_id!r} has no elicited value")
        (absent,) = missing
        (present,) = (a for a in question.answers if a in row)
        p_absent = question.answer_priors[absent]
        numerator = prior[cause_id] - row[present] * question.answer_priors[present]
        if p_absent <= 0.0:
            if abs(numerator) > MACHINE_RESIDUAL_TOL:
                raise OutOfRange(
                    f"question {question.id!r}: answer {absent!r} has zero prior but "
                    f"cause {cause_id!r} needs residual mass {numerator!r}")
            value = prior[cause_id]
        else:
            value = numerator / p_absent
            if value < -1e-9 or value > 1.0 + 1e-9:
                raise OutOfRange(
                    f"question {question.id!r}: implied P({cause_id!r} | {absent!r}) = "
                    f"{value!r} is outside [0, 1]; the elicited value contradicts the prior")
            value = min(max(value, 0.0), 1.0)
        new_rows[cause_id] = {**row, absent: value}
        changed = True
    if not changed:
        return question
    return replace(question, cause_rows=new_rows)


@dataclass(frozen=True)
class ReversedQuestion:
    """Causal form of a general question.

    ``rows[F][s]`` is P(answer s | cause F) for every leaf cause of the prior;
    leaves not associated with the question share the none-of-the-associated
    row, which is also exposed as ``none_row`` (None when the associated
    causes exhaust the prior's support).
    """

    answers: tuple[str, ...]
    rows: Mapping[str, Mapping[str, float]]
    none_row: Mapping[str, float] | None


def reverse_general_question(question: GeneralQuestion, prior: CauseDistribution,
                             *, residual_tol: float = INPUT_RESIDUAL_TOL) -> ReversedQuestion:
    """Reverse an anti-causally elicited table into causal rows via Bayes.

    For each associated cause F and answer s:

        P(s | F) = P(F | s) P(s) / P(F)

    and for the single catch-all state covering every non-associated cause:

        P(s | none) = (1 - sum_F P(F | s)) P(s) / (1 - sum_F P(F))

    The single-fault assumption makes this exact even when the question
    touches several causes, one cause at a time. Requires the table to be
    consistent within ``residual_tol``; computed conditionals outside [0, 1]
    mean the elicited values contradict the prior.
    """
    residuals = total_probability_residuals(question, prior)
    for cause_id, residual in residuals.items():
        if abs(residual) > residual_tol:
            raise InconsistentElicitation(
                f"question {question.id!r}: total-probability residual for "
                f"{cause_id!r} is {residual!r}, beyond tolerance {residual_tol!r}")

    associated = tuple(question.cause_rows)
    assoc_mass = 0.0
    for cause_id in associated:
        if prior[cause_id] <= 0.0:
            raise ZeroPrior(
                f"question {question.id!r}: associated cause {cause_id!r} has zero prior")
        assoc_mass += prior[cause_id]

    def checked(value: float, what: str) -> float:
        if value < -1e-12 or value > 1.0 + 1e-12:
            raise OutOfRange(
                f"question {question.id!r}: computed {what} = {value!r} is outside [0, 1]; "
                "the elicited values contradict the prior")
        return min(max(value, 0.0), 1.0)

    rows: dict[str, dict[str, float]] = {}
    for cause_id in associated:
        p_cause = prior[cause_id]
        rows[cause_id] = {
            answer: checked(
                question.cause_rows[cause_id][answer] * question.answer_priors[answer] / p_cause,
                f"P({answer!r} | {cause_id!r})")
            for answer in question.answers
        }

    non_associated = [leaf for leaf in prior.entries if leaf not in question.cause_rows]
    none_row: dict[str, float] | None = None
    if non_associated:
        none_mass = 1.0 - assoc_mass
        if none_mass <= 0.0:
            raise ZeroPrior(
                f"question {question.id!r}: non-associated causes carry no prior mass "
                "but are present in the distribution")
        none_row = {}
        for answer in question.answers:
            column = 0.0
            for cause_id in associated:
                column += question.cause_rows[cause_id][answer]
            none_row[answer] = checked(
                (1.0 - column) * question.answer_priors[answer] / none_mass,
                f"P({answer!r} | no associated cause)")

    all_rows: dict[str, Mapping[str, float]] = {}
    for leaf in prior.entries:
        all_rows[leaf] = rows[leaf] if leaf in rows else none_row  # type: ignore[assignment]
    return ReversedQuestion(answers=question.answers, rows=all_rows, none_row=none_row)


# ---------------------------------------------------------------------------
# Wish fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Wish:
    """One qualitative adjustment: push P(cause | answer) up or down.

    ``level`` ranges -3..+3; 0 means unchanged. Each step of the ladder is a
    factor of 3 on the cause's prior.
    """

    cause_id: str
    answer: str
    level: int


@dataclass(frozen=True)
class WishTable:
    wishes: tuple[Wish, ...]

    def __post_init__(self) -> None:
        seen = set()
        for wish in self.wishes:
            if not WISH_LEVEL_MIN <= wish.level <= WISH_LEVEL_MAX:
                raise ValueError(
                    f"wish level must be in [{WISH_LEVEL_MIN}, {WISH_LEVEL_MAX}], "
                    f"got {wish.level}")
            key = (wish.cause_id, wish.answer)
            if key in seen:
                raise ValueError(f"duplicate wish for {key}")
            seen.add(key)


SATISFIED = "satisfied"
PARTIALLY_SATISFIED = "partially-satisfied"
DROPPED = "dropped"


@dataclass(frozen=True)
class WishOutcome:
    cause_id: str
    answer: str
    requested_level: int
    final_level: int
    status: str  # satisfied | partially-satisfied | dropped
    note: str = ""


@dataclass(frozen=True)
class FitReport:
    """What happened to each wish, plus consistency diagnostics.

    ``residuals`` are the per-cause total-probability residuals of the fitted
    table (recomputed after any column rescaling). ``column_sums`` are the
    pre-rescaling sums of P(cause | answer) over the associated causes;
    answers listed in ``rescaled_answers`` had their column scaled down to 1,
    which sacrifices consistency for the causes involved; their wishes are
    reported dropped.
    """

    wish_outcomes: tuple[WishOutcome, ...]
    residuals: Mapping[str, float]
    column_sums: Mapping[str, float]
    rescaled_answers: tuple[str, ...] = ()


def fit_probabilities(question: GeneralQuestion, wishes: WishTable,
                      prior: CauseDistribution) -> tuple[GeneralQuestion, FitReport]:
    """Reconcile the author's up/down wishes with total probability.

    Causes are processed one at a time, in declared order. For each cause:

    1. every nonzero wish level k becomes a candidate cell 3**k * P(F),
       clamped to [0, 1];
    2. the remaining (level-0) answers share one solved factor L >= 0 with
       cell value L * P(F), chosen so the cause's total-probability identity
       holds exactly;
    3. if that fails (L < 0, a cell above 1, a clamp fired, or no level-0
       answer is left to absorb the slack), the largest-magnitude wish is
       degraded one level (ties broken by answer declaration order) and the
       cause is retried. All-zero wishes terminate at the neutral row.

    It is better to satisfy two wishes partly than one fully and one not at
    all, which is exactly what largest-first degradation does.

    Afterwards any answer column whose cause probabilities sum above 1 is
    scaled back to 1; this breaks consistency for the causes in that column,
    so their wishes are reported dropped and the report flags the answer.
    Nothing is repaired silently: every compromise appears in the report.
    """
    answers = question.answers
    priors = question.answer_priors
    for answer in answers:
        if priors.get(answer, 0.0) <= 0.0:
            raise ValueError(f"answer prior for {answer!r} must be positive")

    requested: dict[tuple[str, str], int] = {}
    for wish in wishes.wishes:
        if wish.cause_id not in question.cause_rows:
            raise ValueError(f"wish references unknown cause {wish.cause_id!r}")
        if wish.answer not in answers:
            raise ValueError(f"wish references unknown answer {wish.answer!r}")
        requested[(wish.cause_id, wish.answer)] = wish.level
    final_levels = dict(requested)

    new_rows: dict[str, dict[str, float]] = {}
    for cause_id in question.cause_rows:
        p_cause = prior[cause_id]
        if p_cause <= 0.0:
            raise ValueError(f"cause {cause_id!r} has zero prior; cannot fit against it")
        levels = {a: requested.get((cause_id, a), 0) for a in answers}

        while True:
            candidates: dict[str, float] = {}
            clamp_fired = False
            for answer in answers:
                level = levels[answer]
                if level == 0:
                    continue
                cell = (3.0 ** level) * p_cause
                if cell > 1.0:
                    cell = 1.0
                    clamp_fired = True
                candidates[answer] = cell
            neutral = [a for a in answers if levels[a] == 0]
            wished_mass = 0.0
            for answer in answers:
                if answer in candidates:
                    wished_mass += candidates[answer] * priors[answer]

            row: dict[str, float] | None = None
            if neutral:
                neutral_prior_mass = 0.0
                for answer in neutral:
                    neutral_prior_mass += priors[answer]
                lam = (p_cause - wished_mass) / (p_cause * neutral_prior_mass)
                neutral_cell = lam * p_cause
                if lam >= 0.0 and neutral_cell <= 1.0 and not clamp_fired:
                    row = {a: candidates.get(a, neutral_cell) for a in answers}
            else:
                residual = p_cause - wished_mass
                if abs(residual) <= MACHINE_RESIDUAL_TOL and not clamp_fired:
                    row = dict(candidates)

            if row is not None:
                new_rows[cause_id] = row
                break

            nonzero = [a for a in answers if levels[a] != 0]
            if not nonzero:  # defensive; the all-zero row is always feasible
                new_rows[cause_id] = {a: p_cause for a in answers}
                break
            target = nonzero[0]
            for answer in nonzero[1:]:
                if abs(levels[answer]) > abs(levels[target]):
                    target = answer
            step = 1 if levels[target] > 0 else -1
            levels[target] -= step
            final_levels[(cause_id, target)] = levels[target]

    # Column discipline: the associated causes' probabilities at one answer
    # may not exceed 1 in total.
    column_sums: dict[str, float] = {}
    rescaled: list[str] = []
    affected: set[str] = set()
    for answer in answers:
        total = 0.0
        for cause_id in question.cause_rows:
            total += new_rows[cause_id][answer]
        column_sums[answer] = total
        if total > 1.0 + 1e-12:
            rescaled.append(answer)
            for cause_id in question.cause_rows:
                if new_rows[cause_id][answer] > 0.0:
                    affected.add(cause_id)
                new_rows[cause_id][answer] /= total

    fitted = replace(question, cause_rows={c: dict(r) for c, r in new_rows.items()})
    residuals = total_probability_residuals(fitted, prior)

    outcomes = []
    for wish in wishes.wishes:
        final = final_levels[(wish.cause_id, wish.answer)]
        if wish.cause_id in affected:
            status, note = DROPPED, "column-rescaled"
        elif final == wish.level:
            status, note = SATISFIED, ""
        elif final == 0:
            status, note = DROPPED, ""
        else:
            status, note = PARTIALLY_SATISFIED, ""
        outcomes.append(WishOutcome(wish.cause_id, wish.answer, wish.level, final, status, note))

    report = FitReport(tuple(outcomes), residuals, column_sums, tuple(rescaled))
    return fitted, report


# ---------------------------------------------------------------------------
# Coupled sliders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellChange:
    cause_id: str
    answer: str
    old: float
    new: float


def slider_update(question: GeneralQuestion, prior: CauseDistribution,
                  cause_id: str, answer: str, value: float
                  ) -> tuple[GeneralQuestion, tuple[CellChange, ...]]:
    """Drag one P(cause | answer) slider; rebalance that cause's other cells.

    Answer priors and cause priors stay fixed, so the edit is first clamped to
    the largest feasible value P(F) / P(answer). The slack is then restored by
    rescaling the same cause's cells at the other answers (or spreading it
    evenly over their answer-prior mass when they are all zero). Rows of other
    causes are returned untouched, the same objects, bit for bit.
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"slider value must be in [0, 1], got {value!r}")
    if cause_id not in question.cause_rows:
        raise ValueError(f"unknown cause {cause_id!r}")
    if answer not in question.answers:
        raise ValueError(f"unknown answer {answer!r}")

    priors = question.answer_priors
    row = dict(question.cause_rows[cause_id])
    p_cause = prior[cause_id]
    p_answer = priors[answer]

    limit = p_cause / p_answer if p_answer > 0.0 else float("inf")
    new_value = min(value, limit)
    old_value = row[answer]
    if new_value == old_value:
        return question, ()

    changes = [CellChange(cause_id, answer, old_value, new_value)]
    slack = p_cause - new_value * p_answer
    if slack < 0.0:  # floating dust when clamped exactly to the limit
        slack = 0.0

    others = [a for a in question.answers if a != answer]
    current_mass = 0.0
    for a in others:
        current_mass += row[a] * priors[a]

    new_cells: dict[str, float] = {}
    if current_mass > 0.0:
        factor = slack / current_mass
        for a in others:
            new_cells[a] = row[a] * factor
    else:
        prior_mass = 0.0
        for a in others:
            prior_mass += priors[a]
        if prior_mass > 0.0:
            for a in others:
                new_cells[a] = slack / prior_mass
        else:
            new_cells = {a: row[a] for a in others}

    for a, cell in new_cells.items():
        if cell > 1.0 + 1e-12:
            raise InfeasibleAdjustment(
                f"setting P({cause_id!r} | {answer!r}) = {new_value!r} would push "
                f"P({cause_id!r} | {a!r}) to {cell!r}, above 1")
        cell = min(cell, 1.0)
        if cell != row[a]:
            changes.append(CellChange(cause_id, a, row[a], cell))
        row[a] = cell
    row[answer] = new_value

    new_rows = {
        c: (row if c == cause_id else question.cause_rows[c])
        for c in question.cause_rows
    }
    return replace(question, cause_rows=new_rows), tuple(changes)
