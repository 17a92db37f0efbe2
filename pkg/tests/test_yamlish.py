"""Parser and serializer for the block-style config document subset."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecdkit import yamlish
from ecdkit.errors import ParseError


class TestScalars:

    @pytest.mark.parametrize("text,expected", [
        ("a: 1", {"a": 1}),
        ("a: -7", {"a": -7}),
        ("a: 1.5", {"a": 1.5}),
        ("a: 1e-3", {"a": 1e-3}),
        ("a: true", {"a": True}),
        ("a: false", {"a": False}),
        ("a: null", {"a": None}),
        ("a: ~", {"a": None}),
        ("a:", {"a": None}),
        ("a: hello", {"a": "hello"}),
        ('a: "quoted: value"', {"a": "quoted: value"}),
        ("a: 'single'", {"a": "single"}),
        ("a: [1, 2, 3]", {"a": [1, 2, 3]}),
        ("a: []", {"a": []}),
        ("a: [x, y]", {"a": ["x", "y"]}),
    ])
    def test_scalar_forms(self, text, expected):
        assert yamlish.loads(text) == expected

    def test_comments_and_blank_lines(self):
        text = "# top comment\na: 1  # trailing\n\nb: 2\n"
        assert yamlish.loads(text) == {"a": 1, "b": 2}

    def test_hash_inside_quotes_is_content(self):
        assert yamlish.loads('a: "b # c"') == {"a": "b # c"}


class TestStructure:

    def test_nested_maps_and_sequences(self):
        text = (
            "input_features:\n"
            "  - name: title\n"
            "    type: text\n"
            "    encoder: rnn\n"
            "  - name: price\n"
            "    type: numerical\n"
            "combiner:\n"
            "  fc_sizes: [64, 32]\n"
        )
        assert yamlish.loads(text) == {
            "input_features": [
                {"name": "title", "type": "text", "encoder": "rnn"},
                {"name": "price", "type": "numerical"},
            ],
            "combiner": {"fc_sizes": [64, 32]},
        }

    def test_sequence_of_scalars(self):
        assert yamlish.loads("deps:\n  - a\n  - b\n") == {"deps": ["a", "b"]}

    def test_empty_document(self):
        assert yamlish.loads("") == {}
        assert yamlish.loads("# only a comment\n") == {}


class TestErrors:

    @pytest.mark.parametrize("text,line", [
        ("a: &anchor\n", 1),
        ("a: *alias\n", 1),
        ("a: !tag\n", 1),
        ("a: |\n  block\n", 1),
        ("a: {flow: map}\n", 1),
        ("ok: 1\n---\n", 2),
        ("a: 1\na: 2\n", 2),
        ("\tindent: 1\n", 1),
        ('a: "unterminated\n', 1),
        ("a: [1, 2\n", 1),
    ])
    def test_rejected_constructs_carry_line_numbers(self, text, line):
        with pytest.raises(ParseError) as err:
            yamlish.loads(text)
        assert err.value.line == line

    def test_stray_indentation(self):
        with pytest.raises(ParseError):
            yamlish.loads("a: 1\n    b: 2\n")

    def test_sequence_item_inside_mapping(self):
        with pytest.raises(ParseError):
            yamlish.loads("a: 1\n- b\n")


class TestRoundTrip:

    def test_dump_then_load(self):
        doc = {
            "input_features": [
                {"name": "t", "type": "text", "fc_sizes": [8, 4], "lowercase": True},
            ],
            "output_features": [{"name": "y", "type": "category"}],
            "training": {"learning_rate": 0.001, "epochs": 10, "note": "a b", "empty": []},
        }
        assert yamlish.loads(yamlish.dumps(doc)) == doc

    def test_strings_needing_quotes_survive(self):
        doc = {"training": {"a": "true", "b": "1.5", "c": "x: y", "d": "has # hash",
                            "e": "- dashed", "f": 'quote " inside', "g": "two\nlines\tand tab"}}
        assert yamlish.loads(yamlish.dumps(doc)) == doc

    scalars = st.one_of(
        st.none(),
        st.booleans(),
        st.integers(-10**6, 10**6),
        st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
        st.text(alphabet=st.characters(codec="ascii", min_codepoint=32, max_codepoint=126),
                max_size=12),
    )
    keys = st.text(alphabet=st.characters(codec="ascii", min_codepoint=32, max_codepoint=126),
                   min_size=1, max_size=8)

    @given(st.dictionaries(keys, st.one_of(
        scalars,
        st.lists(scalars, max_size=4),
        st.dictionaries(keys, scalars, min_size=1, max_size=4),
        st.lists(st.dictionaries(keys, scalars, min_size=1, max_size=4), min_size=1, max_size=3),
    ), max_size=6))
    @settings(max_examples=150)
    def test_round_trip_property(self, doc):
        assert yamlish.loads(yamlish.dumps(doc)) == doc
