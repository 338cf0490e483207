import pytest

from inpars_hub.core.exceptions import DegenerateGenerationError, TemplateError
from inpars_hub.core.models import Document, FewShotExample
from inpars_hub.core.prompting import (
    available_templates,
    load_few_shot,
    load_template,
    parse_generation,
    parse_template,
    render_prompt,
    truncate_text,
)
from inpars_hub.infra.settings import DEFAULTS


@pytest.fixture
def gbq():
    return load_template("gbq")


@pytest.fixture
def examples():
    return load_few_shot(DEFAULTS["few_shot_path"])


def test_gbq_is_bundled(gbq):
    assert "gbq" in available_templates()
    assert gbq.uses_bad_query
    assert gbq.stop == "Example"
    assert gbq.cue == "\nGood Question:"


def test_render_matches_golden(gbq, examples, fixtures_dir):
    target = Document("d1", "Rust", "rust is fast")
    golden = (fixtures_dir / "golden_gbq_prompt.txt").read_text(encoding="utf-8")
    assert render_prompt(gbq, examples, target) == golden


def test_prompt_ends_with_cue(gbq, examples):
    prompt = render_prompt(gbq, examples, Document("d1", "", "text"))
    assert prompt.endswith("Good Question:")


def test_long_document_is_truncated_on_word_boundary(gbq, examples):
    target = Document("d1", "", "word " * 400)
    prompt = render_prompt(gbq, examples, target, max_doc_chars=1024)
    target_line = prompt.splitlines()[-2]
    body = target_line.removeprefix("Document: ")
    assert len(body) <= 1024
    assert body.endswith("word")


def test_short_text_is_kept_verbatim(gbq, examples):
    assert truncate_text("a\n\n b\tc", 100) == "a\n\n b\tc"
    prompt = render_prompt(gbq, examples[:1], Document("x", "", "a  b"))
    assert prompt.endswith("Document: a  b\nGood Question:")


def test_truncate_text_cuts_on_word_boundary():
    assert truncate_text("alpha\nbeta gamma", 12) == "alpha\nbeta"
    assert truncate_text("alpha beta gamma", 12) == "alpha beta"
    assert truncate_text("abcdefgh", 4) == "abcd"


def test_template_needs_bad_query(gbq):
    with pytest.raises(TemplateError):
        render_prompt(gbq, [FewShotExample("doc", "good")], Document("d1", "", "t"))


def test_render_needs_examples(gbq):
    with pytest.raises(ValueError):
        render_prompt(gbq, [], Document("d1", "", "t"))


def test_vanilla_template_without_bad_query():
    template = parse_template(
        "Few examples follow.\n\n---\n"
        "Document: {document}\nQuery: {good_query}\n\n---\n"
        "Document: {document}\nQuery:\n---\n\n\n",
        "vanilla",
    )
    prompt = render_prompt(
        template, [FewShotExample("doc one", "q one")], Document("d", "", "x y")
    )
    assert prompt == (
        "Few examples follow.\nDocument: doc one\nQuery: q one\n"
        "Document: x y\nQuery:"
    )
    assert not template.uses_bad_query


@pytest.mark.parametrize(
    "text",
    [
        "only\n---\ntwo sections",
        "---\n{unknown}\n---\nDocument: {document}\nQ:\n---\nStop",
        "---\n{document}\n---\nDocument: {document}\n---\nStop",
        "---\n{document}\n---\nQ:\n---\n",
    ],
    ids=["sections", "placeholder", "no-cue", "no-stop"],
)
def test_invalid_templates(text):
    with pytest.raises(TemplateError):
        parse_template(text)


def test_unknown_template_name():
    with pytest.raises(TemplateError):
        load_template("does-not-exist")


@pytest.mark.parametrize(
    "raw, expected",
    [
        (" what is rust\nExample 5:", "what is rust"),
        ("what is rust Example 5", "what is rust"),
        ("  padded  ", "padded"),
    ],
)
def test_parse_generation(raw, expected):
    assert parse_generation(raw, "Example") == expected


@pytest.mark.parametrize("raw", ["", "   ", "\nwhat", "Example 2:"])
def test_parse_generation_degenerate(raw):
    with pytest.raises(DegenerateGenerationError):
        parse_generation(raw, "Example")
