"""Smoke test for the oceanvoice extension module.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import pathlib
import sys
import tempfile

import oceanvoice

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"
CONFIG = ROOT / "config"


def check(label, cond):
    print(("ok   " if cond else "FAIL ") + label)
    if not cond:
        check.failed = True


check.failed = False


def main():
    paras = oceanvoice.split_paragraphs("One. Two.\n\nThree?")
    check("paragraph split", paras == ["One. Two.", "Three?"])
    check("sentence split", oceanvoice.split_sentences(paras[0]) == ["One.", "Two."])

    index = oceanvoice.Index.build(str(CORPUS))
    check("index dimension", index.dimension == oceanvoice.DEFAULT_DIMENSION == 384)
    hits = index.search("why is the water green")
    check("default k hits", len(hits) == oceanvoice.DEFAULT_TOP_K == 2)
    check("distinct paragraphs", hits[0]["para_id"] != hits[1]["para_id"])
    check("exact agrees with ann", index.search("why is the water green", exact=True) == hits)
    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "ocean.idx"
        index.save(str(path))
        reloaded = oceanvoice.Index.load(str(path))
        check("index round trip", len(reloaded) == len(index) and reloaded.search("plastic") == index.search("plastic"))

    grammar = oceanvoice.Grammar.from_tokens(["SST", "CHLOROPHYLL", oceanvoice.NONE_TOKEN])
    check("grammar accepts token", grammar.matches("SST"))
    check("grammar rejects suffix", not grammar.matches("SSTX"))
    check("grammar prefix", grammar.prefix_valid("CHLO") and not grammar.prefix_valid("X"))
    check("token extraction", grammar.extract_token("warm water\nSST") == "SST")
    check("gbnf round trip", oceanvoice.Grammar(grammar.to_gbnf()).matches("NONE"))
    try:
        oceanvoice.Grammar('root ::= "a" |')
        check("bad grammar raises", False)
    except ValueError:
        check("bad grammar raises", True)

    matcher = oceanvoice.KeywordMatcher((CONFIG / "rules.toml").read_text())
    first = matcher.scan_at("A plankton bloom turns the water green.", 0)
    check("matcher fires", any(e["rule_id"] == "plankton" for e in first))
    again = matcher.scan_at("More plankton.", 1_000)
    check("cooldown suppresses", not any(e["rule_id"] == "plankton" for e in again))

    gate = oceanvoice.Gate()
    actions = gate.reading(40.0, 0)
    check("gate engages", gate.state == "recording" and any(a["type"] == "start_recording" for a in actions))
    gate.reading(70.0, 100)
    actions = gate.reading(70.0, 700)
    check("gate releases", any(a["type"] == "stop_recording" for a in actions))

    engine = oceanvoice.Engine.offline(
        str(CORPUS),
        (CONFIG / "mock_script.toml").read_text(),
        rules=(CONFIG / "rules.toml").read_text(),
    )
    result = engine.query("visitor", "why is the water green")
    check("visual selected", result["visual"]["token"] == "CHLOROPHYLL")
    check("two hits", len(result["hits"]) == 2)
    check("response present", bool(result["response_text"]))
    tokens = {e["token"] for e in engine.catalog()}
    check("catalog lists token", "CHLOROPHYLL" in tokens)

    script = (CONFIG / "mock_script.toml").read_text()
    a = oceanvoice.Engine.offline(str(CORPUS), script)
    b = oceanvoice.Engine.offline(str(CORPUS), script)
    check(
        "canonical output is deterministic",
        a.query_canonical("s", "is it getting warmer", 5) == b.query_canonical("s", "is it getting warmer", 5),
    )
    version = engine.reload_rules('[[rule]]\nid = "r"\nphrases = ["green"]\nkind = "layer_on"\npayload = { token = "CHLOROPHYLL" }\n')
    check("rules reload", version == engine.rules_version == 2)

    if check.failed:
        sys.exit(1)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
