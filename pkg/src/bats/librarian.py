"""Reusable module library.

A library module is a cause subtree template plus the actions and questions
that go with it, everything except the conditional cause probabilities,
which depend on the specific error condition and are assigned when the module
is instantiated into a model.

Instantiated entities get ids namespaced "<moduleid>.<instance>.<templateid>",
and the model records a ModuleRef with the locally assigned probabilities and
a baseline snapshot of the mirrored fields. Library edits are propagated
copy-on-write: a field is overwritten only when the model still matches the
baseline; local divergence is reported as a conflict, never overwritten.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping

from bats.errors import (
    IdCollision,
    IncompleteProbabilities,
    LibrarianError,
    SiblingSumViolation,
    UnknownNode,
)
from bats.model import (
    SIBLING_SUM_TOL,
    Action,
    CauseNode,
    CostFactors,
    ErrorConditionModel,
    GeneralQuestion,
    ModuleRef,
    Question,
    ShortcutQuestion,
    SymptomQuestion,
)


@dataclass(frozen=True)
class LibraryModule:
    """Cause/step building block without model-specific priors."""

    id: str
    name: str
    cause_tree: CauseNode
    actions: tuple[Action, ...] = ()
    questions: tuple[Question, ...] = ()
    version: int = 1
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class Library:
    modules: dict[str, LibraryModule] = field(default_factory=dict)

    def add(self, module: LibraryModule) -> None:
        if module.id in self.modules:
            from bats.errors import DuplicateModuleId

            raise DuplicateModuleId(f"module {module.id!r} already in library")
        self.modules[module.id] = module


# ---------------------------------------------------------------------------
# Namespacing and payloads
# ---------------------------------------------------------------------------

def _prefix(module_id: str, instance: str) -> str:
    return f"{module_id}.{instance}."


def _denamespacer(prefix: str) -> Callable[[str], str]:
    def dn(identifier: str) -> str:
        return identifier[len(prefix):] if identifier.startswith(prefix) else identifier

    return dn


def _namespacer(prefix: str, template_ids: set[str]) -> Callable[[str], str]:
    def ns(identifier: str) -> str:
        return prefix + identifier if identifier in template_ids else identifier

    return ns


def _costs_value(costs: CostFactors) -> dict:
    return {"time": costs.time, "risk": costs.risk,
            "money": costs.money, "insult": costs.insult}


def _cause_payload(node: CauseNode) -> dict[str, Any]:
    return {"name": node.name, "explanation": node.explanation}


def _action_payload(action: Action, dn: Callable[[str], str]) -> dict[str, Any]:
    return {
        "name": action.name,
        "explanation": action.explanation,
        "kind": action.kind,
        "solves": {dn(c): p for c, p in action.solves.items()},
        "p_correct": action.p_correct,
        "p_requisites": action.p_requisites,
        "costs": _costs_value(action.costs),
    }


def _question_payload(question: Question, dn: Callable[[str], str]) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "name": question.name,
        "explanation": question.explanation,
        "answers": list(question.answers),
        "costs": _costs_value(question.costs),
    }
    if isinstance(question, SymptomQuestion):
        payload["cause_rows"] = {dn(c): dict(r) for c, r in question.cause_rows.items()}
        payload["none_row"] = dict(question.none_row)
    elif isinstance(question, GeneralQuestion):
        payload["cause_rows"] = {dn(c): dict(r) for c, r in question.cause_rows.items()}
        payload["answer_priors"] = dict(question.answer_priors)
    elif isinstance(question, ShortcutQuestion):
        payload["eliminates"] = {a: [dn(c) for c in cs]
                                 for a, cs in question.eliminates.items()}
        payload["identifies"] = {a: dn(c) for a, c in question.identifies.items()}
    return payload


def _apply_action_field(action: Action, name: str, value: Any,
                        ns: Callable[[str], str]) -> Action:
    if name == "solves":
        return replace(action, solves={ns(c): p for c, p in value.items()})
    if name == "costs":
        return replace(action, costs=CostFactors(**value))
    return replace(action, **{name: value})


def _apply_question_field(question: Question, name: str, value: Any,
                          ns: Callable[[str], str]) -> Question:
    if name == "answers":
        return replace(question, answers=tuple(value))
    if name == "costs":
        return replace(question, costs=CostFactors(**value))
    if name == "cause_rows":
        return replace(question, cause_rows={ns(c): dict(r) for c, r in value.items()})
    if name == "eliminates":
        return replace(question, eliminates={a: tuple(ns(c) for c in cs)
                                             for a, cs in value.items()})
    if name == "identifies":
        return replace(question, identifies={a: ns(c) for a, c in value.items()})
    if name in ("none_row", "answer_priors"):
        return replace(question, **{name: dict(value)})
    return replace(question, **{name: value})


def _clone_action(action: Action, new_id: str, ns: Callable[[str], str]) -> Action:
    return replace(action, id=new_id,
                   solves={ns(c): p for c, p in action.solves.items()})


def _clone_question(question: Question, new_id: str, ns: Callable[[str], str]) -> Question:
    if isinstance(question, SymptomQuestion):
        return replace(question, id=new_id,
                       cause_rows={ns(c): dict(r) for c, r in question.cause_rows.items()})
    if isinstance(question, GeneralQuestion):
        return replace(question, id=new_id,
                       cause_rows={ns(c): dict(r) for c, r in question.cause_rows.items()})
    assert isinstance(question, ShortcutQuestion)
    return replace(
        question, id=new_id,
        eliminates={a: tuple(ns(c) for c in cs) for a, cs in question.eliminates.items()},
        identifies={a: ns(c) for a, c in question.identifies.items()})


def _baseline_snapshot(module: LibraryModule) -> dict[str, dict[str, Any]]:
    identity = lambda s: s  # noqa: E731 - template payloads are already template-keyed
    snapshot: dict[str, dict[str, Any]] = {}
    for node in module.cause_tree.iter_nodes():
        snapshot[f"cause:{node.id}"] = _cause_payload(node)
    for action in module.actions:
        snapshot[f"action:{action.id}"] = _action_payload(action, identity)
    for question in module.questions:
        snapshot[f"question:{question.id}"] = _question_payload(question, identity)
    return snapshot


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------

def instantiate_module(module: LibraryModule, model: ErrorConditionModel,
                       attach_at: str, assignments: Mapping[str, float],
                       instance: str = "1") -> ErrorConditionModel:
    """Clone a module's causes and steps into a model under ``attach_at``.

    ``assignments`` maps template cause ids to the conditional probabilities
    this error condition gives them; together with any probabilities the
    template already carries they must complete the subtree and keep sibling
    sums intact, including at the attach point where the new subtree root
    joins the existing children.
    """
    if model.cause_tree.find(attach_at) is None:
        raise UnknownNode(f"attach point {attach_at!r} is not a cause of model {model.id!r}")
    prefix = _prefix(module.id, instance)
    template_ids = {n.id for n in module.cause_tree.iter_nodes()}
    ns = _namespacer(prefix, template_ids)

    taken = {n.id for n in model.cause_tree.iter_nodes()}
    taken.update(a.id for a in model.actions)
    taken.update(q.id for q in model.questions)
    wanted = [prefix + n.id for n in module.cause_tree.iter_nodes()]
    wanted += [prefix + a.id for a in module.actions]
    wanted += [prefix + q.id for q in module.questions]
    collisions = sorted(set(wanted) & taken)
    if collisions:
        raise IdCollision(
            f"instantiating {module.id!r} as instance {instance!r} would reuse ids "
            f"{collisions}; pick another instance name")

    missing: list[str] = []

    def clone(node: CauseNode) -> CauseNode:
        cond = assignments.get(node.id, node.cond_prob)
        if cond is None:
            missing.append(node.id)
        return CauseNode(
            id=prefix + node.id,
            name=node.name,
            cond_prob=cond,
            children=tuple(clone(c) for c in node.children),
            explanation=node.explanation,
        )

    subtree = clone(module.cause_tree)
    if missing:
        raise IncompleteProbabilities(
            f"conditional probabilities still unassigned for template causes {sorted(missing)}")

    for node in subtree.iter_nodes():
        if node.children:
            total = sum(c.cond_prob for c in node.children)
            if abs(total - 1.0) > SIBLING_SUM_TOL:
                raise SiblingSumViolation(
                    f"children of {node.id!r} sum to {total!r}, expected 1")

    new_tree = model.cause_tree.with_child(attach_at, subtree)
    attach_node = new_tree.find(attach_at)
    assert attach_node is not None
    total = sum((c.cond_prob or 0.0) for c in attach_node.children)
    if abs(total - 1.0) > SIBLING_SUM_TOL:
        raise SiblingSumViolation(
            f"children of attach point {attach_at!r} sum to {total!r} after "
            "instantiation, expected 1")

    new_actions = tuple(_clone_action(a, prefix + a.id, ns) for a in module.actions)
    new_questions = tuple(_clone_question(q, prefix + q.id, ns) for q in module.questions)
    ref = ModuleRef(
        module_id=module.id,
        instance=instance,
        version=module.version,
        attach_at=attach_at,
        overrides=dict(assignments),
        baseline=_baseline_snapshot(module),
    )
    return replace(
        model,
        cause_tree=new_tree,
        actions=model.actions + new_actions,
        questions=model.questions + new_questions,
        module_refs=model.module_refs + (ref,),
    )


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagatedChange:
    model_id: str
    instance: str
    path: str
    field: str
    kind: str  # "updated" | "added" | "removed-upstream"
    old: Any = None
    new: Any = None


@dataclass(frozen=True)
class PropagationConflict:
    """A model locally diverged from the baseline; its value is kept."""

    model_id: str
    instance: str
    path: str
    field: str
    base: Any
    local: Any
    upstream: Any


@dataclass(frozen=True)
class PropagationReport:
    changes: tuple[PropagatedChange, ...]
    conflicts: tuple[PropagationConflict, ...]


def _update_cause(tree: CauseNode, node_id: str, **fields: Any) -> CauseNode:
    if tree.id == node_id:
        return replace(tree, **fields)
    return replace(tree, children=tuple(
        _update_cause(c, node_id, **fields) for c in tree.children))


class _RefPropagation:
    """Three-way merge of one module instance inside one model."""

    def __init__(self, module: LibraryModule, model: ErrorConditionModel, ref: ModuleRef):
        self.module = module
        self.model = model
        self.ref = ref
        self.prefix = _prefix(ref.module_id, ref.instance)
        self.template_ids = {n.id for n in module.cause_tree.iter_nodes()}
        self.ns = _namespacer(self.prefix, self.template_ids)
        self.dn = _denamespacer(self.prefix)
        self.baseline = {k: dict(v) for k, v in ref.baseline.items()}
        self.changes: list[PropagatedChange] = []
        self.conflicts: list[PropagationConflict] = []

    def _merge_fields(self, path: str, key: str, upstream: Mapping[str, Any],
                      local: Mapping[str, Any]) -> dict[str, Any]:
        """Per-field three-way merge;  returns {field: new value} to apply."""
        base = self.baseline.get(key, {})
        apply: dict[str, Any] = {}
        new_base = dict(base)
        for name, new_value in upstream.items():
            base_value = base.get(name)
            local_value = local.get(name)
            if base_value == new_value:
                new_base[name] = new_value
                continue
            if local_value == base_value:
                apply[name] = new_value
                new_base[name] = new_value
                self.changes.append(PropagatedChange(
                    self.model.id, self.ref.instance, path, name, "updated",
                    old=local_value, new=new_value))
            elif local_value == new_value:
                new_base[name] = new_value
            else:
                self.conflicts.append(PropagationConflict(
                    self.model.id, self.ref.instance, path, name,
                    base=base_value, local=local_value, upstream=new_value))
        self.baseline[key] = new_base
        return apply

    def run(self) -> ErrorConditionModel:
        model = self.model
        tree = model.cause_tree

        parent_of: dict[str, str | None] = {self.module.cause_tree.id: None}
        for node in self.module.cause_tree.iter_nodes():
            for child in node.children:
                parent_of[child.id] = node.id

        for node in self.module.cause_tree.iter_nodes():
            local_id = self.prefix + node.id
            path = f"cause_tree/{local_id}"
            existing = tree.find(local_id)
            if existing is None:
                parent_tid = parent_of[node.id]
                parent_local = (self.ref.attach_at if parent_tid is None
                                else self.prefix + parent_tid)
                if tree.find(parent_local) is None:
                    # parent also missing; it will be added first in pre-order
                    parent_local = self.ref.attach_at
                added = CauseNode(id=local_id, name=node.name, cond_prob=None,
                                  explanation=node.explanation)
                tree = tree.with_child(parent_local, added)
                self.baseline[f"cause:{node.id}"] = _cause_payload(node)
                self.changes.append(PropagatedChange(
                    self.model.id, self.ref.instance, path, "(entity)", "added",
                    new=node.name))
                continue
            apply = self._merge_fields(path, f"cause:{node.id}",
                                       _cause_payload(node), _cause_payload(existing))
            if apply:
                tree = _update_cause(tree, local_id, **apply)

        actions = {a.id: a for a in model.actions}
        order = list(actions)
        for template in self.module.actions:
            local_id = self.prefix + template.id
            path = f"actions/{local_id}"
            upstream = _action_payload(template, lambda s: s)
            if local_id not in actions:
                actions[local_id] = _clone_action(template, local_id, self.ns)
                order.append(local_id)
                self.baseline[f"action:{template.id}"] = upstream
                self.changes.append(PropagatedChange(
                    self.model.id, self.ref.instance, path, "(entity)", "added",
                    new=template.name))
                continue
            local_payload = _action_payload(actions[local_id], self.dn)
            apply = self._merge_fields(path, f"action:{template.id}", upstream, local_payload)
            for name, value in apply.items():
                actions[local_id] = _apply_action_field(actions[local_id], name, value, self.ns)

        questions = {q.id: q for q in model.questions}
        q_order = list(questions)
        for template in self.module.questions:
            local_id = self.prefix + template.id
            path = f"questions/{local_id}"
            upstream = _question_payload(template, lambda s: s)
            if local_id not in questions:
                questions[local_id] = _clone_question(template, local_id, self.ns)
                q_order.append(local_id)
                self.baseline[f"question:{template.id}"] = upstream
                self.changes.append(PropagatedChange(
                    self.model.id, self.ref.instance, path, "(entity)", "added",
                    new=template.name))
                continue
            local_q = questions[local_id]
            if local_q.kind != template.kind:
                self.conflicts.append(PropagationConflict(
                    self.model.id, self.ref.instance, path, "kind",
                    base=None, local=local_q.kind, upstream=template.kind))
                continue
            local_payload = _question_payload(local_q, self.dn)
            apply = self._merge_fields(path, f"question:{template.id}", upstream, local_payload)
            for name, value in apply.items():
                questions[local_id] = _apply_question_field(
                    questions[local_id], name, value, self.ns)

        # Entities the new module version no longer carries: reported, kept.
        current = ({f"cause:{n.id}" for n in self.module.cause_tree.iter_nodes()}
                   | {f"action:{a.id}" for a in self.module.actions}
                   | {f"question:{q.id}" for q in self.module.questions})
        for key in sorted(set(self.baseline) - current):
            kind, _, template_id = key.partition(":")
            self.changes.append(PropagatedChange(
                self.model.id, self.ref.instance,
                f"{kind}s/{self.prefix}{template_id}", "(entity)", "removed-upstream"))
            del self.baseline[key]

        new_ref = replace(self.ref, version=self.module.version, baseline=self.baseline)
        refs = tuple(new_ref if r is self.ref else r for r in model.module_refs)
        return replace(
            model,
            cause_tree=tree,
            actions=tuple(actions[i] for i in order),
            questions=tuple(questions[i] for i in q_order),
            module_refs=refs,
        )


def propagate_module_change(library: Library, module_id: str,
                            corpus: Iterable[ErrorConditionModel]
                            ) -> tuple[list[ErrorConditionModel], PropagationReport]:
    """Mirror a library module's current version into every consuming model.

    Structural and text fields of matching refs are updated; locally assigned
    probabilities are never touched. Returns the updated corpus (models are
    immutable values) and a report listing every change and every conflict.
    Propagation is idempotent: a second pass at the same version changes
    nothing.
    """
    module = library.modules.get(module_id)
    if module is None:
        raise LibrarianError(f"no module {module_id!r} in library")
    changes: list[PropagatedChange] = []
    conflicts: list[PropagationConflict] = []
    updated: list[ErrorConditionModel] = []
    for model in corpus:
        current = model
        for ref in model.module_refs:
            if ref.module_id != module_id:
                continue
            live_ref = next(r for r in current.module_refs
                            if r.module_id == ref.module_id and r.instance == ref.instance)
            run = _RefPropagation(module, current, live_ref)
            current = run.run()
            changes.extend(run.changes)
            conflicts.extend(run.conflicts)
        updated.append(current)
    return updated, PropagationReport(tuple(changes), tuple(conflicts))


# ---------------------------------------------------------------------------
# Search / replace
# ---------------------------------------------------------------------------

SCOPE_NAMES = "names"
SCOPE_EXPLANATIONS = "explanations"
SCOPE_BOTH = "both"


@dataclass(frozen=True)
class ReplaceHit:
    model_id: str
    path: str
    before: str
    after: str


def search_replace(corpus: Iterable[ErrorConditionModel], pattern: str,
                   replacement: str, scope: str = SCOPE_BOTH,
                   dry_run: bool = False
                   ) -> tuple[list[ErrorConditionModel], list[ReplaceHit]]:
    """Literal substring replacement across the corpus's display text.

    Only name and/or explanation fields are touched, never ids, answer
    labels or numbers. Dry-run computes the identical hit report without
    changing anything.
    """
    if not pattern:
        raise ValueError("pattern must be non-empty")
    if scope not in (SCOPE_NAMES, SCOPE_EXPLANATIONS, SCOPE_BOTH):
        raise ValueError(f"unknown scope {scope!r}")
    do_names = scope in (SCOPE_NAMES, SCOPE_BOTH)
    do_explanations = scope in (SCOPE_EXPLANATIONS, SCOPE_BOTH)

    hits: list[ReplaceHit] = []
    results: list[ErrorConditionModel] = []

    for model in corpus:
        edits: dict[str, str] = {}

        def visit(path: str, text: str, is_name: bool) -> str:
            if pattern not in text:
                return text
            if (is_name and not do_names) or (not is_name and not do_explanations):
                return text
            after = text.replace(pattern, replacement)
            hits.append(ReplaceHit(model.id, path, text, after))
            edits[path] = after
            return after

        new_name = visit("name", model.name, True)

        def rebuild_cause(node: CauseNode, base: str) -> CauseNode:
            path = f"{base}/{node.id}"
            name = visit(f"{path}/name", node.name, True)
            explanation = visit(f"{path}/explanation", node.explanation, False)
            children = tuple(rebuild_cause(c, path) for c in node.children)
            if name == node.name and explanation == node.explanation and children == node.children:
                return node
            return replace(node, name=name, explanation=explanation, children=children)

        new_tree = rebuild_cause(model.cause_tree, "cause_tree")

        new_actions = []
        for action in model.actions:
            name = visit(f"actions/{action.id}/name", action.name, True)
            explanation = visit(f"actions/{action.id}/explanation", action.explanation, False)
            if name != action.name or explanation != action.explanation:
                action = replace(action, name=name, explanation=explanation)
            new_actions.append(action)

        new_questions = []
        for question in model.questions:
            name = visit(f"questions/{question.id}/name", question.name, True)
            explanation = visit(f"questions/{question.id}/explanation",
                                question.explanation, False)
            if name != question.name or explanation != question.explanation:
                question = replace(question, name=name, explanation=explanation)
            new_questions.append(question)

        if edits and not dry_run:
            results.append(replace(
                model, name=new_name, cause_tree=new_tree,
                actions=tuple(new_actions), questions=tuple(new_questions)))
        else:
            results.append(model)

    return results, hits
