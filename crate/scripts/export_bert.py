#!/usr/bin/env python3
"""Export a HuggingFace BERT masked-LM checkpoint to an exlens model directory.

Writes manifest.json, weights.bin and vocab.txt, plus reference.json holding
the checkpoint's own hidden states for a sentence, which the acceptance suite
compares against when EXLENS_BERT_DIR points at the output directory.

    pip install torch transformers
    python scripts/export_bert.py bert-base-cased out/bert-base-cased

Without network access, --random exports a randomly initialized model of
the BERT-base shape over a synthetic cased vocabulary instead.
"""

import argparse
import json
import os
import struct

import torch
from transformers import BertConfig, BertForMaskedLM, BertTokenizer

SENTENCE = "The girl ran to a local pub to escape the din of her city."

# Linear layers stored [out, in] by torch; the container wants [in, out].
TRANSPOSED = (
    "attention.self.query.weight",
    "attention.self.key.weight",
    "attention.self.value.weight",
    "attention.output.dense.weight",
    "intermediate.dense.weight",
    "output.dense.weight",
    "cls.predictions.transform.dense.weight",
)


def random_model(sentence, out, seed):
    torch.manual_seed(seed)
    words = []
    for w in sentence.replace(".", " . ").split():
        if w not in words:
            words.append(w)
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    config = BertConfig()
    filler = [f"w{i}" for i in range(config.vocab_size - len(specials) - len(words))]
    vocab_file = os.path.join(out, "vocab.txt")
    with open(vocab_file, "w", encoding="utf-8") as f:
        f.write("\n".join(specials + words + filler) + "\n")
    tokenizer = BertTokenizer(vocab_file, do_lower_case=False)
    return tokenizer, BertForMaskedLM(config)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("checkpoint", nargs="?")
    parser.add_argument("out")
    parser.add_argument("--sentence", default=SENTENCE)
    parser.add_argument("--random", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    if args.random:
        tokenizer, model = random_model(args.sentence, args.out, args.seed)
    else:
        tokenizer = BertTokenizer.from_pretrained(args.checkpoint)
        model = BertForMaskedLM.from_pretrained(args.checkpoint)
    model = model.eval()
    cfg = model.config

    tensors = {}
    for name, value in model.state_dict().items():
        name = name.removeprefix("bert.")
        if name.endswith("position_ids") or name == "cls.predictions.decoder.bias":
            continue
        if name.startswith("pooler."):
            continue
        t = value.detach().float()
        if name == "cls.predictions.decoder.weight":
            t = t.t()
        elif name.endswith(TRANSPOSED):
            t = t.t()
        tensors[name] = t.contiguous()

    entries, offset = {}, 0
    with open(os.path.join(args.out, "weights.bin"), "wb") as f:
        for name in sorted(tensors):
            t = tensors[name]
            data = t.flatten().tolist()
            f.write(struct.pack(f"<{len(data)}f", *data))
            entries[name] = {"shape": list(t.shape), "dtype": "f32", "offset": offset}
            offset += 4 * len(data)

    manifest = {
        "format": "exlens-weights-v1",
        "config": {
            "num_layers": cfg.num_hidden_layers,
            "num_heads": cfg.num_attention_heads,
            "d_model": cfg.hidden_size,
            "d_head": cfg.hidden_size // cfg.num_attention_heads,
            "vocab_size": cfg.vocab_size,
            "max_positions": cfg.max_position_embeddings,
            "ffn_dim": cfg.intermediate_size,
            "layernorm_eps": cfg.layer_norm_eps,
            "lowercase": bool(tokenizer.do_lower_case),
        },
        "tensors": entries,
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)

    vocab = sorted(tokenizer.vocab.items(), key=lambda kv: kv[1])
    with open(os.path.join(args.out, "vocab.txt"), "w", encoding="utf-8") as f:
        for token, _ in vocab:
            f.write(token + "\n")

    enc = tokenizer(args.sentence, return_tensors="pt")
    with torch.no_grad():
        out = model.bert(**enc, output_hidden_states=True)
    reference = {
        "sentence": args.sentence,
        "input_ids": enc["input_ids"][0].tolist(),
        "hidden": [h[0].double().tolist() for h in out.hidden_states[1:]],
    }
    with open(os.path.join(args.out, "reference.json"), "w") as f:
        json.dump(reference, f)


if __name__ == "__main__":
    main()
