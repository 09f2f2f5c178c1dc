"""Builds the tiny randomly initialised DistilBERT used by the ONNX backend tests.

Writes model.onnx, vocab.txt and reference.json (final-layer hidden states
computed by PyTorch for a few sentences) next to this script.

    python3 make_fixture.py
"""
import json
import os

import torch
from transformers import BertTokenizerFast, DistilBertConfig, DistilBertModel
from transformers.models.distilbert import modeling_distilbert

HERE = os.path.dirname(os.path.abspath(__file__))

WORDS = """the a an and or but is are was it its this that my i you to of in on for with
app phone camera photo photos upload auto sync battery drain drains login password
screen tab tabs video audio file files folder crash crashes crashed broken fails
error update notification notifications server account wi fi setting settings
does not n't after before when since every time keeps stopped working open
firefox nextcloud signal vlc android page pages load loading slow freeze""".split()
PIECES = ["##s", "##ing", "##ed", "##load", "##er", "##ly", "##cloud", "##fox", "up", "next", "fire"]
PUNCT = list("!?.,;:'\"-()/")


def classic_mask(config, inputs_embeds, attention_mask, **_):
    if attention_mask is None:
        return None
    m = attention_mask[:, None, None, :].to(inputs_embeds.dtype)
    return (1.0 - m) * torch.finfo(inputs_embeds.dtype).min


def main():
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + PUNCT + sorted(set(WORDS)) + PIECES
    vocab += [str(d) for d in range(10)]
    with open(os.path.join(HERE, "vocab.txt"), "w") as f:
        f.write("\n".join(vocab) + "\n")

    torch.manual_seed(7)
    config = DistilBertConfig(
        vocab_size=len(vocab), dim=32, hidden_dim=64, n_layers=2, n_heads=2, max_position_embeddings=64
    )
    config._attn_implementation = "eager"
    model = DistilBertModel(config).eval()
    modeling_distilbert.create_bidirectional_mask = classic_mask

    ids = torch.tensor([[2, 10, 11, 3]])
    mask = torch.ones_like(ids)
    torch.onnx.export(
        model,
        (ids, mask),
        os.path.join(HERE, "model.onnx"),
        input_names=["input_ids", "attention_mask"],
        output_names=["last_hidden_state"],
        dynamic_axes={"input_ids": {1: "seq"}, "attention_mask": {1: "seq"}, "last_hidden_state": {1: "seq"}},
        opset_version=14,
        dynamo=False,
    )

    tok = BertTokenizerFast(os.path.join(HERE, "vocab.txt"), do_lower_case=True)
    sentences = ["Auto upload broken!", "Firefox crashes when loading pages", "the battery drains after every update"]
    reference = []
    for s in sentences:
        enc = tok(s, return_offsets_mapping=True)
        with torch.no_grad():
            out = model(torch.tensor([enc["input_ids"]]), torch.tensor([enc["attention_mask"]])).last_hidden_state[0]
        reference.append(
            {
                "text": s,
                "input_ids": enc["input_ids"],
                "offsets": enc["offset_mapping"],
                "hidden": [[round(float(x), 6) for x in row] for row in out],
            }
        )
    with open(os.path.join(HERE, "reference.json"), "w") as f:
        json.dump(reference, f)


if __name__ == "__main__":
    main()
