#!/usr/bin/env python3
"""Builds the tiny reference-model fixture under tests/fixtures/hf_tiny/.

Creates a randomly initialized 2-layer masked-LM encoder over the test
tokenizer's vocabulary, saves it in the standard ecosystem format
(config.json + model.safetensors + vocab.json + merges.txt), runs a few
prompts through it with the reference byte-level BPE (the `tokenizers`
library) and the reference model implementation (torch/transformers), and
freezes inputs and outputs into expected.json. The C++ suite replays those
inputs and must reproduce the token ids exactly and the scores to float
precision, pinning the forward pass and the checkpoint loader.

Run from the repo root:  python3 scripts/make_reference_fixture.py
torch + transformers + tokenizers are needed only to regenerate; the tests
consume the committed fixture.
"""

import json
import pathlib

import torch
from tokenizers import ByteLevelBPETokenizer
from transformers import RobertaConfig, RobertaForMaskedLM

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "tests" / "fixtures" / "hf_tiny"

BOS, PAD, EOS, UNK, MASK = 0, 1, 2, 3, 4


def build_tokenizer_files() -> dict:
    """Mirrors tests/helpers.hpp: byte alphabet plus merged whole-word pieces."""
    bytes_to_unicode = {}
    direct = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(0xA1, 0xAD))
        + list(range(0xAE, 0x100))
    )
    n = 0
    for b in range(256):
        if b in direct:
            bytes_to_unicode[b] = chr(b)
        else:
            bytes_to_unicode[b] = chr(256 + n)
            n += 1

    vocab = {"<s>": BOS, "<pad>": PAD, "</s>": EOS, "<unk>": UNK, "<mask>": MASK}
    next_id = 5
    for b in range(256):
        vocab[bytes_to_unicode[b]] = next_id
        next_id += 1

    g = bytes_to_unicode[ord(" ")]
    words = [
        "World", "Sports", "Business", "Tech", "awful", "great", "terrible",
        "bad", "okay", "good", "religion", "automobile", "medicine", "gun",
        "sports", "movie", "game",
    ]
    merges = []
    seen = set()
    for w in words:
        piece = g + w
        acc = piece[0]
        for ch in piece[1:]:
            pair = (acc, ch)
            if pair not in seen:
                seen.add(pair)
                merges.append(pair)
            acc += ch
            if acc not in vocab:
                vocab[acc] = next_id
                next_id += 1

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "vocab.json").write_text(json.dumps(vocab, ensure_ascii=False))
    (OUT / "merges.txt").write_text(
        "#version: 0.2\n" + "".join(f"{a} {b}\n" for a, b in merges)
    )
    return vocab


def encode_prompt(bpe: ByteLevelBPETokenizer, template: str, text: str) -> tuple:
    """Renders {x}/{mask} and tokenizes with the mask-left-strip convention."""
    rendered = template.replace("{x}", text)
    before, after = rendered.split("{mask}")
    if before.endswith(" "):
        before = before[:-1]  # the mask swallows its leading space
    ids = [BOS]
    if before:
        ids += bpe.encode(before).ids
    mask_index = len(ids)
    ids.append(MASK)
    if after:
        ids += bpe.encode(after).ids
    ids.append(EOS)
    return ids, mask_index


def main() -> None:
    vocab = build_tokenizer_files()
    bpe = ByteLevelBPETokenizer(str(OUT / "vocab.json"), str(OUT / "merges.txt"))

    torch.manual_seed(20240817)
    config = RobertaConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=202,
        type_vocab_size=1,
        pad_token_id=PAD,
        bos_token_id=BOS,
        eos_token_id=EOS,
        layer_norm_eps=1e-5,
    )
    model = RobertaForMaskedLM(config).eval()
    model.save_pretrained(OUT, safe_serialization=True)

    prompt_cases = [
        ("{x} Sentiment: {mask}.", "great movie"),
        ("{mask} News: {x}", "the match was great"),
        ("{x} Question: What is the sentiment of this text? Answer: {mask}.",
         "bad bad bad, don't go"),
    ]
    cases = []
    with torch.no_grad():
        for template, text in prompt_cases:
            ids, mask_index = encode_prompt(bpe, template, text)
            t = torch.tensor([ids])
            out = model(input_ids=t)
            hidden = model.roberta(input_ids=t).last_hidden_state
            cases.append(
                {
                    "template": template,
                    "text": text,
                    "ids": ids,
                    "mask_index": mask_index,
                    "mask_logits": out.logits[0, mask_index].tolist(),
                    "pooled_first": hidden[0, 0].tolist(),
                }
            )
        plain = "just a plain text, no mask anywhere"
        ids = [BOS] + bpe.encode(plain).ids + [EOS]
        hidden = model.roberta(input_ids=torch.tensor([ids])).last_hidden_state
        cases.append(
            {
                "template": "",
                "text": plain,
                "ids": ids,
                "mask_index": -1,
                "mask_logits": [],
                "pooled_first": hidden[0, 0].tolist(),
            }
        )

    (OUT / "expected.json").write_text(json.dumps({"cases": cases}, indent=1))
    print(f"fixture written to {OUT} (vocab {len(vocab)})")


if __name__ == "__main__":
    main()
