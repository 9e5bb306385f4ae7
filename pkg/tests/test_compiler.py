"""Model -> network compilation."""

from __future__ import annotations

import numpy as np
import pytest

from bats.compiler import compile_model
from bats.errors import CompileBlocked, InconsistentElicitation
from bats.model import (
    Action,
    CauseNode,
    CostWeights,
    ErrorConditionModel,
    GeneralQuestion,
    ShortcutQuestion,
    SymptomQuestion,
)
from bats.persistence import save_network
from conftest import UNIT_WEIGHTS, random_model, three_cause_model


def single_cause_model(**action_kwargs) -> ErrorConditionModel:
    tree = CauseNode("root", "r", 1.0, (CauseNode("f", "f", 1.0),))
    action = Action("a", "a", "repair", solves={"f": 1.0}, **action_kwargs)
    return ErrorConditionModel("m", "m", tree, actions=(action,))


class TestCompileActions:
    def test_composed_yes_row_and_complement(self):
        network = compile_model(single_cause_model(p_correct=0.9), UNIT_WEIGHTS)
        [step] = network.steps
        assert step.kind == "repair-action"
        assert step.likelihood["yes"]["f"] == pytest.approx(0.9, abs=1e-15)
        assert step.likelihood["no"]["f"] == pytest.approx(0.1, abs=1e-15)

    def test_unsolved_cause_gets_zero(self):
        model = three_cause_model()
        network = compile_model(model, UNIT_WEIGHTS)
        paper_action = network.step_by_id("a-change-paper")
        assert paper_action.likelihood["yes"]["s1"] == 0.0
        assert paper_action.likelihood["yes"]["s2"] == 0.0
        assert paper_action.likelihood["yes"]["c2"] == pytest.approx(0.8)

    def test_costs_resolved_under_profile(self):
        weights = CostWeights(2.0, 1.0, 1.0, 1.0, "double-time")
        network = compile_model(three_cause_model(), weights)
        assert network.step_by_id("a-swap-cartridge").cost == pytest.approx(10.0)
        assert network.profile == "double-time"


class TestCompileQuestions:
    def test_reversal_example_rows(self):
        tree = CauseNode("root", "r", 1.0, (
            CauseNode("f1", "f1", 0.2),
            CauseNode("f2", "f2", 0.3),
            CauseNode("f3", "f3", 0.5),
        ))
        question = GeneralQuestion(
            id="q", name="q", answers=("yes", "no"),
            cause_rows={"f1": {"yes": 0.5, "no": 1.0 / 14.0}},
            answer_priors={"yes": 0.3, "no": 0.7})
        action = Action("a", "a", "repair", solves={"f1": 1.0})
        model = ErrorConditionModel("m", "m", tree, actions=(action,),
                                    questions=(question,))
        network = compile_model(model, UNIT_WEIGHTS)
        q_step = network.step_by_id("q")
        assert q_step.likelihood["yes"]["f1"] == pytest.approx(0.75, abs=1e-12)
        assert q_step.likelihood["no"]["f1"] == pytest.approx(0.25, abs=1e-12)
        assert q_step.likelihood["yes"]["f2"] == pytest.approx(0.1875, abs=1e-12)
        assert q_step.likelihood["no"]["f2"] == pytest.approx(0.8125, abs=1e-12)
        assert q_step.likelihood["yes"]["f3"] == pytest.approx(0.1875, abs=1e-12)

    def test_symptom_none_row_fills_non_associated_leaves(self):
        network = compile_model(three_cause_model(), UNIT_WEIGHTS)
        q_step = network.step_by_id("q-streaks")
        assert q_step.likelihood["yes"]["s1"] == pytest.approx(0.8)
        assert q_step.likelihood["yes"]["s2"] == pytest.approx(0.1)
        assert q_step.likelihood["yes"]["c2"] == pytest.approx(0.1)

    def test_shortcut_desugars_then_reverses(self):
        tree = CauseNode("root", "r", 1.0, (
            CauseNode("f1", "f1", 0.2), CauseNode("f2", "f2", 0.8)))
        question = ShortcutQuestion(
            id="q", name="q", answers=("yes", "no"),
            identifies={"yes": "f1"}, eliminates={"no": ("f1",)})
        action = Action("a", "a", "repair", solves={"f1": 1.0, "f2": 1.0})
        model = ErrorConditionModel("m", "m", tree, actions=(action,),
                                    questions=(question,))
        network = compile_model(model, UNIT_WEIGHTS)
        q_step = network.step_by_id("q")
        # Identification: yes happens exactly when f1 is the fault.
        assert q_step.likelihood["yes"]["f1"] == pytest.approx(1.0, abs=1e-9)
        assert q_step.likelihood["yes"]["f2"] == pytest.approx(0.0, abs=1e-9)

    def test_rows_sum_to_one_for_every_leaf(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            model = random_model(rng)
            network = compile_model(model, UNIT_WEIGHTS)
            for step in network.steps:
                for leaf in network.prior.entries:
                    total = sum(step.likelihood[o][leaf] for o in step.outcomes)
                    assert abs(total - 1.0) < 1e-9


class TestCompileGuards:
    def test_validation_errors_block(self):
        tree = CauseNode("root", "r", 1.0, (
            CauseNode("a", "a", 0.6), CauseNode("b", "b", 0.5)))
        model = ErrorConditionModel("m", "m", tree)
        with pytest.raises(CompileBlocked) as exc_info:
            compile_model(model, UNIT_WEIGHTS)
        assert exc_info.value.report is not None

    def test_orphan_question_blocks_compile(self):
        model = three_cause_model()
        orphan = SymptomQuestion(
            id="q-orphan", name="orphan", answers=("yes", "no"),
            cause_rows={}, none_row={"yes": 0.5, "no": 0.5})
        model = ErrorConditionModel(
            model.id, model.name, model.cause_tree,
            actions=model.actions, questions=model.questions + (orphan,))
        with pytest.raises(CompileBlocked):
            compile_model(model, UNIT_WEIGHTS)

    def test_inconsistent_question_error_names_the_step(self):
        tree = CauseNode("root", "r", 1.0, (
            CauseNode("f1", "f1", 0.2), CauseNode("f2", "f2", 0.8)))
        question = GeneralQuestion(
            id="q-bad", name="q", answers=("yes", "no"),
            cause_rows={"f1": {"yes": 0.9, "no": 0.9}},
            answer_priors={"yes": 0.5, "no": 0.5})
        model = ErrorConditionModel(
            "m", "m", tree,
            actions=(Action("a", "a", "repair", solves={"f1": 1.0, "f2": 1.0}),),
            questions=(question,))
        with pytest.raises(InconsistentElicitation) as exc_info:
            compile_model(model, UNIT_WEIGHTS)
        assert exc_info.value.step_id == "q-bad"
        assert "q-bad" in str(exc_info.value)


class TestDeterminism:
    def test_identical_input_identical_bytes(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            model = random_model(rng)
            first = save_network(compile_model(model, UNIT_WEIGHTS))
            second = save_network(compile_model(model, UNIT_WEIGHTS))
            assert first == second
