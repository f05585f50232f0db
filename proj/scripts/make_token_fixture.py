#!/usr/bin/env python3
"""Regenerates tests/fixtures/hf_tokens.json.

Encodes a fixed prompt list with the reference GPT-2 tokenizer (HuggingFace
transformers, running fully offline against data/gpt2_vocab) and freezes the
ids for the C++ tokenizer parity test.
"""

import json
import pathlib

from transformers import GPT2Tokenizer

ROOT = pathlib.Path(__file__).resolve().parent.parent

PROMPTS = [
    "Alan Turing",
    "Actions speak louder than",
    "The quick brown fox jumps over the lazy",
    "To be or not to be, that is the",
    "Machine learning is",
    "helpful",
    " helpful",
    "don't count your chickens",
    "It's 2024, and 3.14 isn't pi!",
    "  leading and trailing  ",
    "tabs\tand\nnewlines",
    "CamelCase ALLCAPS mixed123numbers",
    "quote's 'll 've 're n't",
    "...ellipsis---dashes...",
    "The following prompt is the beginning of a popular English idiom, "
    "please respond with a single word to complete the phrase. When in Rome do as the Romans",
]


def main() -> None:
    vocab_dir = ROOT / "data" / "gpt2_vocab"
    vocab = json.loads((vocab_dir / "vocab.json").read_text())
    merge_lines = (vocab_dir / "merges.txt").read_text().split("\n")
    merges = [tuple(line.split(" ")) for line in merge_lines[1:] if line]
    tok = GPT2Tokenizer(vocab=vocab, merges=merges)
    cases = [{"text": p, "ids": tok.encode(p)} for p in PROMPTS]
    out = ROOT / "tests" / "fixtures" / "hf_tokens.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(cases, indent=1) + "\n")
    print(f"wrote {out} ({len(cases)} cases)")


if __name__ == "__main__":
    main()
