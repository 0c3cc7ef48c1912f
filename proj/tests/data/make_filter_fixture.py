#!/usr/bin/env python3
"""Writes filter_fixture.jsonl: 200 conversations built so that the expected
filter outcome of each one is known by construction.

Defaults assumed: min_utterances 5, max_utterances 50, min_tokens 250,
min_participants 2. Checks run in that order (utterances, tokens,
participants) and the first failure is the one counted.

  kept                   82   8 blocks of 10 (one escalated + 9 negatives
                              of the same length, lengths 6..13) plus two
                              boundary negatives (5 utts / 250 tokens and
                              50 utts)
  too_few_utterances     40   1..4 utterances; ten of them also have a
                              single author
  too_many_utterances    30   51..60 utterances
  too_few_tokens         25   6..10 utterances, under 250 tokens; one sits
                              at 249
  too_few_participants   23   one author, enough of everything else
"""

import json
import sys
from pathlib import Path

WORDS = ["article", "source", "section", "wording", "claim", "citation", "policy", "page"]


def text(n_tokens, seed):
    return " ".join(WORDS[(seed + k) % len(WORDS)] for k in range(n_tokens))


def conversation(cid, tokens_per_utt, authors, label):
    utts = []
    t = 1_600_000_000 + cid * 100_000
    for i, n in enumerate(tokens_per_utt):
        t += 60
        utts.append({"id": f"f{cid:03d}-{i}", "author": authors[i % len(authors)], "timestamp": t,
                     "kind": "talk", "text": text(n, cid + i)})
    return {"id": f"f{cid:03d}", "page": f"Talk:Fixture_{cid:03d}",
            "label": "escalated" if label else "not_escalated", "utterances": utts}


def build():
    out = []
    two = ["Alice", "Bob"]
    three = ["Alice", "Bob", "Carol"]
    cid = 0

    def add(tokens, authors, label=False):
        nonlocal cid
        out.append(conversation(cid, tokens, authors, label))
        cid += 1

    # kept
    for block in range(8):
        length = 6 + block
        for k in range(10):
            add([50] * length, three if k % 2 else two, label=(k == 0))
    add([50] * 5, two)   # exactly 5 utterances, exactly 250 tokens
    add([6] * 50, two)   # exactly 50 utterances

    # too few utterances
    for k in range(40):
        n = 1 + k % 4
        add([300] * n, ["Solo"] if k < 10 else two, label=(k % 5 == 0))

    # too many utterances
    for k in range(30):
        add([10] * (51 + k % 10), three)

    # too few tokens
    add([50, 50, 50, 50, 49], two)  # 249 tokens
    for k in range(24):
        n = 6 + k % 5
        add([240 // n - 1] * n, two)

    # too few participants
    for k in range(23):
        add([60] * (6 + k % 5), ["Solo"], label=(k % 4 == 0))

    assert len(out) == 200
    return out


def main():
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("filter_fixture.jsonl")
    with open(target, "w") as f:
        for c in build():
            f.write(json.dumps(c, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
