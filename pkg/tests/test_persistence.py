"""Document round-trips, determinism, strict/lenient modes, the library loader."""

from __future__ import annotations

import json

import numpy as np
import pytest

from bats.compiler import compile_model
from bats.errors import (
    DuplicateModuleId,
    InvariantViolation,
    ParseError,
    SchemaVersionMismatch,
)
from bats.librarian import LibraryModule
from bats.model import CauseNode
from bats.persistence import (
    load_library,
    load_model,
    load_module,
    model_to_document,
    module_filename,
    parse_model,
    save_model,
    save_module,
    save_network,
)
from conftest import UNIT_WEIGHTS, benchmark_model, random_model, three_cause_model


class TestModelRoundTrip:
    def test_hand_model_round_trips(self):
        model = three_cause_model()
        assert load_model(save_model(model)) == model

    def test_benchmark_round_trips(self):
        model = benchmark_model()
        assert load_model(save_model(model)) == model

    def test_random_models_round_trip(self):
        rng = np.random.default_rng(71)
        for _ in range(25):
            model = random_model(rng, with_dependencies=True)
            assert load_model(save_model(model)) == model

    def test_save_is_byte_deterministic(self):
        model = benchmark_model()
        assert save_model(model) == save_model(model)
        # And stable across a round trip.
        assert save_model(load_model(save_model(model))) == save_model(model)

    def test_document_shape(self):
        doc = model_to_document(three_cause_model())
        assert list(doc)[:4] == ["schema_version", "id", "name", "cause_tree"]
        assert doc["schema_version"] == "bats-model/1"

    def test_output_is_utf8_lf_two_space(self):
        payload = save_model(three_cause_model())
        text = payload.decode("utf-8")
        assert "\r" not in text
        assert text.endswith("\n")
        assert '\n  "id"' in text


class TestLoadGuards:
    def test_missing_schema_version(self):
        doc = model_to_document(three_cause_model())
        del doc["schema_version"]
        with pytest.raises(SchemaVersionMismatch):
            load_model(json.dumps(doc))

    def test_wrong_schema_version(self):
        doc = model_to_document(three_cause_model())
        doc["schema_version"] = "bats-model/999"
        with pytest.raises(SchemaVersionMismatch):
            load_model(json.dumps(doc))

    def test_malformed_json_reports_position(self):
        with pytest.raises(ParseError) as exc_info:
            load_model(b'{"schema_version": "bats-model/1",')
        assert exc_info.value.position is not None

    def test_out_of_range_cond_prob_is_invariant_violation(self):
        doc = model_to_document(three_cause_model())
        doc["cause_tree"]["children"][1]["cond_prob"] = 1.2
        with pytest.raises(InvariantViolation) as exc_info:
            load_model(json.dumps(doc))
        report = exc_info.value.report
        assert any(f.code in ("prob-range", "sibling-sum") and "c2" in f.path
                   for f in report.errors)

    def test_parse_model_tolerates_invalid_but_wellformed(self):
        doc = model_to_document(three_cause_model())
        doc["cause_tree"]["children"][1]["cond_prob"] = 1.2
        model = parse_model(json.dumps(doc))
        assert model.cause_tree.children[1].cond_prob == 1.2

    def test_strict_mode_rejects_unknown_fields(self):
        doc = model_to_document(three_cause_model())
        doc["future_field"] = {"x": 1}
        with pytest.raises(ParseError):
            load_model(json.dumps(doc))

    def test_lenient_mode_preserves_unknown_fields(self):
        doc = model_to_document(three_cause_model())
        doc["future_field"] = {"x": 1}
        doc["actions"][0]["vendor_hint"] = "abc"
        model = load_model(json.dumps(doc), strict=False)
        assert model.extra == {"future_field": {"x": 1}}
        assert model.actions[0].extra == {"vendor_hint": "abc"}
        saved = json.loads(save_model(model).decode("utf-8"))
        assert saved["future_field"] == {"x": 1}
        assert saved["actions"][0]["vendor_hint"] == "abc"


class TestNetworkDocuments:
    def test_network_save_deterministic(self):
        model = benchmark_model()
        network = compile_model(model, UNIT_WEIGHTS)
        assert save_network(network) == save_network(network)
        doc = json.loads(save_network(network).decode("utf-8"))
        assert doc["schema_version"] == "bats-network/1"
        assert doc["model_id"] == "bench"
        assert len(doc["steps"]) == 7


def toner_module() -> LibraryModule:
    return LibraryModule(
        id="toner",
        name="Toner cartridge",
        cause_tree=CauseNode("cartridge", "Toner cartridge", None, (
            CauseNode("worn", "Worn cartridge", None),
            CauseNode("empty", "Empty cartridge", None),
        )),
        actions=(),
        version=1,
    )


class TestModuleAndLibrary:
    def test_module_round_trip(self):
        module = toner_module()
        assert load_module(save_module(module)) == module

    def test_empty_directory(self, tmp_path):
        library = load_library(tmp_path)
        assert library.modules == {}

    def test_duplicate_ids_rejected(self, tmp_path):
        module = toner_module()
        (tmp_path / "one.batsmod.json").write_bytes(save_module(module))
        (tmp_path / "two.batsmod.json").write_bytes(save_module(module))
        with pytest.raises(DuplicateModuleId):
            load_library(tmp_path)

    def test_modules_sorted_by_id(self, tmp_path):
        for module_id in ("zeta", "alpha", "mid"):
            module = LibraryModule(
                id=module_id, name=module_id,
                cause_tree=CauseNode(f"{module_id}-root", module_id, None))
            (tmp_path / module_filename(module_id)).write_bytes(save_module(module))
        library = load_library(tmp_path)
        assert list(library.modules) == ["alpha", "mid", "zeta"]

    def test_parse_failures_aggregated(self, tmp_path):
        (tmp_path / "bad1.batsmod.json").write_text("{broken", "utf-8")
        (tmp_path / "bad2.batsmod.json").write_text("[]", "utf-8")
        module = toner_module()
        (tmp_path / module_filename(module.id)).write_bytes(save_module(module))
        with pytest.raises(ParseError) as exc_info:
            load_library(tmp_path)
        assert len(exc_info.value.causes) == 2
