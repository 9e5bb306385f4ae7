"""Canonical on-disk JSON formats with lossless round-tripping.

One document schema per artifact kind: models ("bats-model/1", files named
``<model id>.bats.json``), library modules ("bats-module/1",
``<module id>.batsmod.json``), compiled networks ("bats-network/1") and
sessions ("bats-session/1"). Documents are UTF-8, LF line endings, 2-space
indentation, keys in fixed schema order; probabilities use Python's
shortest exact decimal rendering, so serialization is byte-deterministic and
numbers survive round trips bit for bit.

Strict mode (the default) rejects unknown fields; lenient mode preserves them
verbatim in each entity's ``extra`` mapping and re-emits them on save.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from bats.compiler import CompiledNetwork
from bats.engine import Evidence, HistoryEntry, Session
from bats.errors import (
    DuplicateModuleId,
    InvariantViolation,
    ParseError,
    SchemaVersionMismatch,
)
from bats.model import (
    Action,
    CauseNode,
    CostFactors,
    DependencyRule,
    ErrorConditionModel,
    GeneralQuestion,
    ModuleRef,
    Question,
    ShortcutQuestion,
    SymptomQuestion,
    validate_model,
)

MODEL_SCHEMA = "bats-model/1"
MODULE_SCHEMA = "bats-module/1"
NETWORK_SCHEMA = "bats-network/1"
SESSION_SCHEMA = "bats-session/1"

MODEL_SUFFIX = ".bats.json"
MODULE_SUFFIX = ".batsmod.json"


def _dump(document: dict) -> bytes:
    return (json.dumps(document, indent=2, ensure_ascii=False, allow_nan=False)
            + "\n").encode("utf-8")


def _parse_json(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, position=(exc.lineno, exc.colno)) from exc


# ---------------------------------------------------------------------------
# Field readers
# ---------------------------------------------------------------------------

class _Reader:
    """Tracks consumed keys so strict mode can reject the leftovers."""

    def __init__(self, obj: Any, path: str, strict: bool):
        if not isinstance(obj, dict):
            raise ParseError(f"expected an object, got {type(obj).__name__}", path=path)
        self.obj = obj
        self.path = path
        self.strict = strict
        self.seen: set[str] = set()

    def require(self, key: str) -> Any:
        if key not in self.obj:
            raise ParseError(f"missing required field {key!r}", path=self.path)
        self.seen.add(key)
        return self.obj[key]

    def optional(self, key: str, default: Any = None) -> Any:
        self.seen.add(key)
        return self.obj.get(key, default)

    def extra(self) -> dict[str, Any]:
        unknown = {k: v for k, v in self.obj.items() if k not in self.seen}
        if unknown and self.strict:
            raise ParseError(
                f"unknown fields {sorted(unknown)} (use lenient mode to preserve them)",
                path=self.path)
        return unknown


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ParseError(f"expected a string, got {type(value).__name__}", path=path)
    return value


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {type(value).__name__}", path=path)
    return float(value)


def _number_or_none(value: Any, path: str) -> float | None:
    if value is None:
        return None
    return _number(value, path)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {type(value).__name__}", path=path)
    return value


def _string_list(value: Any, path: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise ParseError(f"expected a list, got {type(value).__name__}", path=path)
    return tuple(_string(v, f"{path}[{i}]") for i, v in enumerate(value))


def _prob_map(value: Any, path: str) -> dict[str, float]:
    if not isinstance(value, dict):
        raise ParseError(f"expected an object, got {type(value).__name__}", path=path)
    return {k: _number(v, f"{path}/{k}") for k, v in value.items()}


def _nested_prob_map(value: Any, path: str) -> dict[str, dict[str, float]]:
    if not isinstance(value, dict):
        raise ParseError(f"expected an object, got {type(value).__name__}", path=path)
    return {k: _prob_map(v, f"{path}/{k}") for k, v in value.items()}


# ---------------------------------------------------------------------------
# Entity encoders / decoders
# ---------------------------------------------------------------------------

def _merge_extra(doc: dict, extra: Mapping[str, Any]) -> dict:
    for key in sorted(extra):
        if key in doc:
            raise ValueError(f"extra field {key!r} collides with a schema field")
        doc[key] = extra[key]
    return doc


def _costs_doc(costs: CostFactors) -> dict:
    return {"time": costs.time, "risk": costs.risk,
            "money": costs.money, "insult": costs.insult}


def _costs_from(obj: Any, path: str, strict: bool) -> CostFactors:
    reader = _Reader(obj, path, strict)
    costs = CostFactors(
        time=_number(reader.optional("time", 0.0), f"{path}/time"),
        risk=_integer(reader.optional("risk", 0), f"{path}/risk"),
        money=_number(reader.optional("money", 0.0), f"{path}/money"),
        insult=_integer(reader.optional("insult", 0), f"{path}/insult"),
    )
    reader.extra()  # costs objects carry no extension fields
    return costs


def _cause_doc(node: CauseNode) -> dict:
    doc: dict[str, Any] = {
        "id": node.id,
        "name": node.name,
        "explanation": node.explanation,
        "cond_prob": node.cond_prob,
        "children": [_cause_doc(c) for c in node.children],
    }
    return _merge_extra(doc, node.extra)


def _cause_from(obj: Any, path: str, strict: bool) -> CauseNode:
    reader = _Reader(obj, path, strict)
    node_id = _string(reader.require("id"), f"{path}/id")
    children_obj = reader.optional("children", [])
    if not isinstance(children_obj, list):
        raise ParseError("expected a list", path=f"{path}/children")
    children = tuple(
        _cause_from(child, f"{path}/children[{i}]", strict)
        for i, child in enumerate(children_obj))
    return CauseNode(
        id=node_id,
        name=_string(reader.optional("name", node_id), f"{path}/name"),
        cond_prob=_number_or_none(reader.optional("cond_prob"), f"{path}/cond_prob"),
        children=children,
        explanation=_string(reader.optional("explanation", ""), f"{path}/explanation"),
        extra=reader.extra(),
    )


def _action_doc(action: Action) -> dict:
    doc: dict[str, Any] = {
        "id": action.id,
        "name": action.name,
        "explanation": action.explanation,
        "kind": action.kind,
        "solves": dict(action.solves),
        "p_correct": action.p_correct,
        "p_requisites": action.p_requisites,
        "costs": _costs_doc(action.costs),
    }
    return _merge_extra(doc, action.extra)


def _action_from(obj: Any, path: str, strict: bool) -> Action:
    reader = _Reader(obj, path, strict)
    action_id = _string(reader.require("id"), f"{path}/id")
    return Action(
        id=action_id,
        name=_string(reader.optional("name", action_id), f"{path}/name"),
        kind=_string(reader.optional("kind", "repair"), f"{path}/kind"),
        solves=_prob_map(reader.optional("solves", {}), f"{path}/solves"),
        p_correct=_number(reader.optional("p_correct", 1.0), f"{path}/p_correct"),
        p_requisites=_number(reader.optional("p_requisites", 1.0), f"{path}/p_requisites"),
        costs=_costs_from(reader.optional("costs", {}), f"{path}/costs", strict),
        explanation=_string(reader.optional("explanation", ""), f"{path}/explanation"),
        extra=reader.extra(),
    )


def _question_doc(question: Question) -> dict:
    doc: dict[str, Any] = {
        "id": question.id,
        "name": question.name,
        "explanation": question.explanation,
        "kind": question.kind,
        "answers": list(question.answers),
        "costs": _costs_doc(question.costs),
    }
    if isinstance(question, SymptomQuestion):
        doc["cause_rows"] = {c: dict(r) for c, r in question.cause_rows.items()}
        doc["none_row"] = dict(question.none_row)
    elif isinstance(question, GeneralQuestion):
        doc["cause_rows"] = {c: dict(r) for c, r in question.cause_rows.items()}
        doc["answer_priors"] = dict(question.answer_priors)
    elif isinstance(question, ShortcutQuestion):
        doc["eliminates"] = {a: list(cs) for a, cs in question.eliminates.items()}
        doc["identifies"] = dict(question.identifies)
    else:
        raise ValueError(f"unknown question type {type(question).__name__}")
    return _merge_extra(doc, question.extra)


def _question_from(obj: Any, path: str, strict: bool) -> Question:
    reader = _Reader(obj, path, strict)
    question_id = _string(reader.require("id"), f"{path}/id")
    kind = _string(reader.require("kind"), f"{path}/kind")
    common = dict(
        id=question_id,
        name=_string(reader.optional("name", question_id), f"{path}/name"),
        answers=_string_list(reader.optional("answers", []), f"{path}/answers"),
        costs=_costs_from(reader.optional("costs", {}), f"{path}/costs", strict),
        explanation=_string(reader.optional("explanation", ""), f"{path}/explanation"),
    )
    if kind == "symptom":
        question: Question = SymptomQuestion(
            **common,
            cause_rows=_nested_prob_map(reader.optional("cause_rows", {}),
                                        f"{path}/cause_rows"),
            none_row=_prob_map(reader.optional("none_row", {}), f"{path}/none_row"),
            extra=reader.extra(),
        )
    elif kind == "general":
        question = GeneralQuestion(
            **common,
            cause_rows=_nested_prob_map(reader.optional("cause_rows", {}),
                                        f"{path}/cause_rows"),
            answer_priors=_prob_map(reader.optional("answer_priors", {}),
                                    f"{path}/answer_priors"),
            extra=reader.extra(),
        )
    elif kind == "shortcut":
        eliminates_obj = reader.optional("eliminates", {})
        if not isinstance(eliminates_obj, dict):
            raise ParseError("expected an object", path=f"{path}/eliminates")
        eliminates = {
            a: _string_list(v, f"{path}/eliminates/{a}")
            for a, v in eliminates_obj.items()
        }
        identifies_obj = reader.optional("identifies", {})
        if not isinstance(identifies_obj, dict):
            raise ParseError("expected an object", path=f"{path}/identifies")
        identifies = {
            a: _string(v, f"{path}/identifies/{a}") for a, v in identifies_obj.items()
        }
        question = ShortcutQuestion(
            **common, eliminates=eliminates, identifies=identifies, extra=reader.extra())
    else:
        raise ParseError(f"unknown question kind {kind!r}", path=f"{path}/kind")
    return question


def _dependency_doc(rule: DependencyRule) -> dict:
    doc: dict[str, Any] = {
        "action_id": rule.action_id,
        "question_id": rule.question_id,
        "fixed_answer": rule.fixed_answer,
    }
    return _merge_extra(doc, rule.extra)


def _dependency_from(obj: Any, path: str, strict: bool) -> DependencyRule:
    reader = _Reader(obj, path, strict)
    return DependencyRule(
        action_id=_string(reader.require("action_id"), f"{path}/action_id"),
        question_id=_string(reader.require("question_id"), f"{path}/question_id"),
        fixed_answer=_string(reader.require("fixed_answer"), f"{path}/fixed_answer"),
        extra=reader.extra(),
    )


def _module_ref_doc(ref: ModuleRef) -> dict:
    doc: dict[str, Any] = {
        "module_id": ref.module_id,
        "instance": ref.instance,
        "version": ref.version,
        "attach_at": ref.attach_at,
        "overrides": dict(ref.overrides),
        "baseline": {k: dict(v) for k, v in ref.baseline.items()},
    }
    return _merge_extra(doc, ref.extra)


def _module_ref_from(obj: Any, path: str, strict: bool) -> ModuleRef:
    reader = _Reader(obj, path, strict)
    baseline_obj = reader.optional("baseline", {})
    if not isinstance(baseline_obj, dict):
        raise ParseError("expected an object", path=f"{path}/baseline")
    return ModuleRef(
        module_id=_string(reader.require("module_id"), f"{path}/module_id"),
        instance=_string(reader.require("instance"), f"{path}/instance"),
        version=_integer(reader.require("version"), f"{path}/version"),
        attach_at=_string(reader.require("attach_at"), f"{path}/attach_at"),
        overrides=_prob_map(reader.optional("overrides", {}), f"{path}/overrides"),
        baseline={k: dict(v) for k, v in baseline_obj.items()},
        extra=reader.extra(),
    )


# ---------------------------------------------------------------------------
# Model documents
# ---------------------------------------------------------------------------

def model_to_document(model: ErrorConditionModel) -> dict:
    doc: dict[str, Any] = {
        "schema_version": MODEL_SCHEMA,
        "id": model.id,
        "name": model.name,
        "cause_tree": _cause_doc(model.cause_tree),
        "actions": [_action_doc(a) for a in model.actions],
        "questions": [_question_doc(q) for q in model.questions],
        "dependencies": [_dependency_doc(d) for d in model.dependencies],
        "module_refs": [_module_ref_doc(r) for r in model.module_refs],
    }
    return _merge_extra(doc, model.extra)


def save_model(model: ErrorConditionModel) -> bytes:
    """Serialize a model; deterministic bytes for identical model values."""
    return _dump(model_to_document(model))


def parse_model(data: bytes | str, *, strict: bool = True) -> ErrorConditionModel:
    """Decode a model document without enforcing model invariants.

    Raises :class:`ParseError` for malformed structure and
    :class:`SchemaVersionMismatch` for wrong/missing schema_version. The
    result may still fail :func:`validate_model`; use :func:`load_model` to
    reject invalid models outright.
    """
    obj = _parse_json(data)
    if not isinstance(obj, dict):
        raise ParseError("document root must be an object", path="")
    version = obj.get("schema_version")
    if version != MODEL_SCHEMA:
        raise SchemaVersionMismatch(
            f"expected schema_version {MODEL_SCHEMA!r}, got {version!r}")
    reader = _Reader(obj, "", strict)
    reader.require("schema_version")
    model_id = _string(reader.require("id"), "id")

    def items(key: str) -> list:
        value = reader.optional(key, [])
        if not isinstance(value, list):
            raise ParseError("expected a list", path=key)
        return value

    return ErrorConditionModel(
        id=model_id,
        name=_string(reader.optional("name", model_id), "name"),
        cause_tree=_cause_from(reader.require("cause_tree"), "cause_tree", strict),
        actions=tuple(_action_from(a, f"actions[{i}]", strict)
                      for i, a in enumerate(items("actions"))),
        questions=tuple(_question_from(q, f"questions[{i}]", strict)
                        for i, q in enumerate(items("questions"))),
        dependencies=tuple(_dependency_from(d, f"dependencies[{i}]", strict)
                           for i, d in enumerate(items("dependencies"))),
        module_refs=tuple(_module_ref_from(r, f"module_refs[{i}]", strict)
                          for i, r in enumerate(items("module_refs"))),
        extra=reader.extra(),
    )


def load_model(data: bytes | str, *, strict: bool = True) -> ErrorConditionModel:
    """Decode and validate a model document.

    Raises :class:`InvariantViolation` carrying the validation report when
    the document parses but the model breaks a structural invariant.
    """
    model = parse_model(data, strict=strict)
    report = validate_model(model)
    if not report.ok:
        first = report.errors[0]
        raise InvariantViolation(
            f"document violates model invariants ({len(report.errors)} errors); "
            f"first: {first}", report=report)
    return model


# ---------------------------------------------------------------------------
# Library module documents
# ---------------------------------------------------------------------------

def module_to_document(module) -> dict:
    doc: dict[str, Any] = {
        "schema_version": MODULE_SCHEMA,
        "id": module.id,
        "name": module.name,
        "version": module.version,
        "cause_tree": _cause_doc(module.cause_tree),
        "actions": [_action_doc(a) for a in module.actions],
        "questions": [_question_doc(q) for q in module.questions],
    }
    return _merge_extra(doc, module.extra)


def save_module(module) -> bytes:
    return _dump(module_to_document(module))


def load_module(data: bytes | str, *, strict: bool = True):
    from bats.librarian import LibraryModule

    obj = _parse_json(data)
    if not isinstance(obj, dict):
        raise ParseError("document root must be an object", path="")
    version = obj.get("schema_version")
    if version != MODULE_SCHEMA:
        raise SchemaVersionMismatch(
            f"expected schema_version {MODULE_SCHEMA!r}, got {version!r}")
    reader = _Reader(obj, "", strict)
    reader.require("schema_version")
    module_id = _string(reader.require("id"), "id")

    def items(key: str) -> list:
        value = reader.optional(key, [])
        if not isinstance(value, list):
            raise ParseError("expected a list", path=key)
        return value

    return LibraryModule(
        id=module_id,
        name=_string(reader.optional("name", module_id), "name"),
        version=_integer(reader.optional("version", 1), "version"),
        cause_tree=_cause_from(reader.require("cause_tree"), "cause_tree", strict),
        actions=tuple(_action_from(a, f"actions[{i}]", strict)
                      for i, a in enumerate(items("actions"))),
        questions=tuple(_question_from(q, f"questions[{i}]", strict)
                        for i, q in enumerate(items("questions"))),
        extra=reader.extra(),
    )


def load_library(directory: str | Path, *, strict: bool = True):
    """Load every ``*.batsmod.json`` under a directory into a library.

    Per-file parse errors are aggregated into one :class:`ParseError`;
    duplicate module ids raise :class:`DuplicateModuleId`. Modules are
    returned sorted by id.
    """
    from bats.librarian import Library

    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError(f"library directory {str(directory)!r} does not exist")
    modules = {}
    failures: list[ParseError] = []
    for path in sorted(directory.glob(f"*{MODULE_SUFFIX}")):
        try:
            module = load_module(path.read_bytes(), strict=strict)
        except (ParseError, SchemaVersionMismatch) as exc:
            failures.append(ParseError(f"{path.name}: {exc}", path=str(path)))
            continue
        if module.id in modules:
            raise DuplicateModuleId(
                f"module id {module.id!r} appears in more than one library file")
        modules[module.id] = module
    if failures:
        raise ParseError(
            f"{len(failures)} library file(s) failed to parse: "
            + "; ".join(str(f) for f in failures),
            causes=failures)
    return Library(modules={k: modules[k] for k in sorted(modules)})


# ---------------------------------------------------------------------------
# Compiled network documents
# ---------------------------------------------------------------------------

def network_to_document(network: CompiledNetwork) -> dict:
    return {
        "schema_version": NETWORK_SCHEMA,
        "model_id": network.model_id,
        "profile": network.profile,
        "prior": dict(network.prior.entries),
        "steps": [
            {
                "id": step.id,
                "kind": step.kind,
                "outcomes": list(step.outcomes),
                "cost": step.cost,
                "likelihood": {o: dict(row) for o, row in step.likelihood.items()},
            }
            for step in network.steps
        ],
        "dependencies": [_dependency_doc(d) for d in network.dependencies],
    }


def save_network(network: CompiledNetwork) -> bytes:
    return _dump(network_to_document(network))


# ---------------------------------------------------------------------------
# Session documents
# ---------------------------------------------------------------------------

def session_to_document(session: Session, *, model_id: str, profile: str) -> dict:
    return {
        "schema_version": SESSION_SCHEMA,
        "model_id": model_id,
        "profile": profile,
        "status": session.status,
        "evidence": [
            {"step_id": ev.step_id, "outcome": ev.outcome, "origin": ev.origin}
            for ev in session.evidence
        ],
        "history": [
            {
                "step_id": entry.step_id,
                "outcome": entry.outcome,
                "at": entry.at.isoformat(),
                "previous_evidence": [
                    {"step_id": ev.step_id, "outcome": ev.outcome, "origin": ev.origin}
                    for ev in entry.previous_evidence
                ],
            }
            for entry in session.history
        ],
    }


def session_from_document(doc: Mapping[str, Any], network: CompiledNetwork) -> Session:
    from datetime import datetime

    if doc.get("schema_version") != SESSION_SCHEMA:
        raise SchemaVersionMismatch(
            f"expected schema_version {SESSION_SCHEMA!r}, got {doc.get('schema_version')!r}")
    session = Session(network)

    def evidence_from(items) -> list[Evidence]:
        return [Evidence(e["step_id"], e["outcome"], e.get("origin", "user-entered"))
                for e in items]

    session.evidence = evidence_from(doc.get("evidence", []))
    session.history = [
        HistoryEntry(
            step_id=h["step_id"],
            outcome=h["outcome"],
            at=datetime.fromisoformat(h["at"]),
            previous_evidence=tuple(evidence_from(h.get("previous_evidence", []))),
        )
        for h in doc.get("history", [])
    ]
    return session


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def model_filename(model_id: str) -> str:
    return f"{model_id}{MODEL_SUFFIX}"


def module_filename(module_id: str) -> str:
    return f"{module_id}{MODULE_SUFFIX}"
