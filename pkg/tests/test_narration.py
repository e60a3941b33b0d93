"""Tests for reading order, markup round trip, and narration scripts."""

import numpy as np
import pytest

from slidescribe.document import build_document
from slidescribe.errors import SlidescribeError
from slidescribe.narration import (
    NarrationScript,
    Utterance,
    parse_markup,
    reading_order,
    script_for,
    synthesize,
    to_markup,
    transcript,
)
from slidescribe.regions import Region


def region(region_id, class_name, coarse, bbox):
    return Region(
        id=region_id,
        class_name=class_name,
        coarse=coarse,
        bbox=bbox,
        pixel_count=bbox[2] * bbox[3],
        confidence=1.0,
    )


class TestReadingOrder:
    def test_single_region(self):
        assert reading_order([region(4, "paragraph", "text", (5, 5, 10, 10))]) == [4]

    def test_title_then_two_columns(self):
        # hand-built fixture: title on top, two side-by-side columns below;
        # expected order written out by hand: title, left column, right column
        regions = [
            region(0, "paragraph", "text", (60, 30, 30, 50)),   # right column
            region(1, "title", "text", (10, 2, 80, 10)),
            region(2, "paragraph", "text", (10, 30, 30, 50)),   # left column
        ]
        assert reading_order(regions) == [1, 2, 0]

    def test_identical_bboxes_tie_break_by_id(self):
        regions = [
            region(7, "paragraph", "text", (10, 10, 20, 20)),
            region(3, "diagram", "figure", (10, 10, 20, 20)),
        ]
        assert reading_order(regions) == [3, 7]

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        base = [
            region(i, "paragraph", "text",
                   (int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                    int(rng.integers(5, 20)), int(rng.integers(5, 20))))
            for i in range(8)
        ]
        order = reading_order(base)
        shifted = [
            region(r.id, r.class_name, r.coarse,
                   (r.bbox[0] + 100, r.bbox[1] + 55, r.bbox[2], r.bbox[3]))
            for r in base
        ]
        assert reading_order(shifted) == order

    def test_bands_read_top_to_bottom(self):
        regions = [
            region(0, "paragraph", "text", (10, 70, 30, 10)),
            region(1, "paragraph", "text", (10, 30, 30, 10)),
            region(2, "paragraph", "text", (50, 31, 30, 10)),
        ]
        assert reading_order(regions) == [1, 2, 0]

    def test_container_read_before_contained(self):
        figure = region(5, "diagram", "figure", (20, 20, 60, 60))
        inner = region(2, "paragraph", "text", (30, 40, 20, 10))
        assert reading_order([inner, figure]) == [5, 2]

    def test_order_independent_of_input_sequence(self):
        regions = [
            region(0, "title", "text", (10, 2, 50, 8)),
            region(1, "paragraph", "text", (10, 20, 40, 30)),
            region(2, "diagram", "figure", (60, 22, 40, 28)),
        ]
        expected = reading_order(regions)
        assert reading_order(list(reversed(regions))) == expected


def make_doc(recognized, order=None):
    if order is None:
        order = reading_order([r for r, _ in recognized])
    return build_document("slide", 128, 96, recognized, order)


def full_doc():
    recognized = [
        (region(0, "title", "text", (10, 2, 80, 10)), {"text": "Big Ideas"}),
        (region(1, "paragraph", "text", (10, 20, 40, 30)), {"text": "First point"}),
        (region(2, "diagram", "figure", (60, 20, 40, 30)), {"figure_class": "diagram"}),
        (region(3, "equation", "equation", (10, 60, 50, 8)),
         {"equation_description": "y = m x + b"}),
        (region(4, "table", "table", (70, 60, 40, 30)),
         {"table": {"grid": [2, 2], "cells": 4,
                    "cell_texts": ["k", "v1", "n", "v2"]}}),
    ]
    return make_doc(recognized)


class TestMarkup:
    def test_empty_document_envelope(self):
        doc = make_doc([])
        assert to_markup(doc) == "<slide>\n</slide>\n"
        assert parse_markup(to_markup(doc)) == []

    def test_heading_block_contains_text(self):
        recognized = [
            (region(0, "heading", "text", (10, 2, 80, 10)),
             {"text": "Discovering Attention Patterns"}),
        ]
        markup = to_markup(make_doc(recognized))
        assert '<heading order="0">Discovering Attention Patterns</heading>' in markup

    def test_round_trip_triples(self):
        doc = full_doc()
        triples = parse_markup(to_markup(doc))
        by_id = {r["id"]: r for r in doc["regions"]}
        expected = []
        for order, rid in enumerate(doc["reading_order"]):
            r = by_id[rid]
            expected.append((r["class"], None, order))
        assert [(c, o) for c, _, o in triples] == [(c, o) for c, _, o in expected]

    def test_round_trip_100_random_documents(self):
        rng = np.random.default_rng(5)
        classes = [
            ("paragraph", "text"), ("title", "text"), ("diagram", "figure"),
            ("equation", "equation"),
        ]
        for _ in range(100):
            n = int(rng.integers(0, 6))
            recognized = []
            for i in range(n):
                name, coarse = classes[int(rng.integers(0, len(classes)))]
                if coarse == "text":
                    payload = {"text": f"body & <{int(rng.integers(0, 100))}>"}
                elif coarse == "figure":
                    payload = {"figure_class": "diagram"}
                else:
                    payload = {"equation_description": f"x_{i} < y & z"}
                bbox = (int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                        int(rng.integers(4, 30)), int(rng.integers(4, 30)))
                recognized.append((region(i, name, coarse, bbox), payload))
            doc = make_doc(recognized)
            triples = parse_markup(to_markup(doc))
            by_id = {r["id"]: r for r in doc["regions"]}
            assert len(triples) == n
            for order, rid in enumerate(doc["reading_order"]):
                r = by_id[rid]
                cls, content, got_order = triples[order]
                assert cls == r["class"]
                assert got_order == order
                expected_body = r["payload"].get(
                    "text",
                    r["payload"].get("figure_class",
                                     r["payload"].get("equation_description", "")),
                )
                assert content == expected_body

    def test_malformed_markup_rejected(self):
        with pytest.raises(SlidescribeError, match="malformed"):
            parse_markup("<slide><title>unclosed</slide>")
        with pytest.raises(SlidescribeError, match="envelope"):
            parse_markup("<page></page>")


class TestScriptFor:
    def test_interactive_single_region(self):
        doc = full_doc()
        script = script_for(doc, "interactive", region_id=1)
        assert script.mode == "interactive"
        assert len(script.utterances) == 1
        u = script.utterances[0]
        assert u.region_id == 1
        assert u.label_preamble == "Paragraph:"
        assert u.body == "First point"

    def test_non_interactive_covers_all_regions_in_order(self):
        doc = full_doc()
        script = script_for(doc, "non_interactive")
        assert [u.region_id for u in script.utterances] == doc["reading_order"]
        assert {u.region_id for u in script.utterances} == {
            r["id"] for r in doc["regions"]
        }

    def test_table_preamble_and_linearization(self):
        # hand-written expectation for the 2x2 fixture
        doc = full_doc()
        script = script_for(doc, "interactive", region_id=4)
        u = script.utterances[0]
        assert u.label_preamble == "Table with 2 rows and 2 columns:"
        assert u.body == "k, v1, n, v2"

    def test_figure_and_equation_preambles(self):
        doc = full_doc()
        fig = script_for(doc, "interactive", region_id=2).utterances[0]
        assert fig.label_preamble == "Figure, type diagram:"
        eq = script_for(doc, "interactive", region_id=3).utterances[0]
        assert eq.label_preamble == "Equation:"
        assert eq.body == "y = m x + b"

    def test_error_payload_spoken_as_failure(self):
        recognized = [(region(0, "table", "table", (0, 0, 10, 10)),
                       {"error": "boom"})]
        doc = make_doc(recognized)
        u = script_for(doc, "interactive", region_id=0).utterances[0]
        assert "error" in u.body

    def test_unknown_region_id(self):
        with pytest.raises(KeyError, match="99"):
            script_for(full_doc(), "interactive", region_id=99)

    def test_interactive_requires_region_id(self):
        with pytest.raises(SlidescribeError, match="region_id"):
            script_for(full_doc(), "interactive")

    def test_bad_mode_rejected(self):
        with pytest.raises(SlidescribeError, match="mode"):
            script_for(full_doc(), "shuffle")


class TestSynthesize:
    def script(self, n=3):
        return NarrationScript(
            utterances=tuple(
                Utterance(region_id=i, label_preamble=f"Part {i}:", body=f"body {i}")
                for i in range(n)
            ),
            mode="non_interactive",
        )

    def test_no_adapter_transcript_line_count(self):
        text = synthesize(self.script(3))
        assert text.splitlines() == [
            "Part 0: body 0", "Part 1: body 1", "Part 2: body 2",
        ]

    def test_empty_script_empty_transcript(self):
        assert synthesize(self.script(0)) == ""

    def test_adapter_called_once_per_utterance_in_order(self):
        calls = []

        class Recorder:
            container_format = "wav"

            def speak(self, text):
                calls.append(text)
                return text.encode()

        artifact = synthesize(self.script(3), Recorder())
        assert calls == ["Part 0: body 0", "Part 1: body 1", "Part 2: body 2"]
        assert artifact.container_format == "wav"
        assert artifact.data == b"Part 0: body 0Part 1: body 1Part 2: body 2"

    def test_adapter_failure_falls_back_to_transcript(self):
        class Broken:
            container_format = "wav"

            def speak(self, text):
                raise RuntimeError("no voice")

        with pytest.warns(UserWarning, match="falling back"):
            out = synthesize(self.script(2), Broken())
        assert out == transcript(self.script(2))

    def test_multiline_bodies_flattened_in_transcript(self):
        script = NarrationScript(
            utterances=(Utterance(0, "Paragraph:", "one\ntwo"),), mode="interactive"
        )
        assert transcript(script) == "Paragraph: one two\n"
