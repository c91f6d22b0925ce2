#!/usr/bin/env python3
"""Regenerate the bundled synthetic corpora under data/synthetic/.

The seeds here are fixed; rerunning this script must reproduce the committed
files byte for byte (tests check that).  A few deliberately unusable records
— markup dumps and a non-English body — are appended so the filtering stage
of the pipeline has something real to drop.
"""

from __future__ import annotations

import json
from pathlib import Path

from mailmasq.synthetic import make_corpus

OUT = Path(__file__).resolve().parent.parent / "data" / "synthetic"

JUNK_LEGIT = [
    {
        "id": "legit-junk-0000",
        "label": "legitimate",
        "source": "synthetic",
        "body": "<html><head><title>weekly digest</title></head><body><table><tr>"
        "<td>metrics</td><td>attached</td></tr></table></body></html>",
    },
    {
        "id": "legit-junk-0001",
        "label": "legitimate",
        "source": "synthetic",
        "body": "fw zxqv bnmr tklp wsdj qhgc xvbn plkm juhy gtrf edcb nmkl oiuy "
        "trew qazx svnm poir ghjk bvcx mnzu qpwo eirt",
    },
]
JUNK_PHISH = [
    {
        "id": "phish-junk-0000",
        "label": "phishing",
        "source": "synthetic",
        "body": "<div class=\"alert\"><span style=\"color:red\"><b>klik</b></span>"
        "<a href=\"#\"><img src=\"x.gif\"/></a><br/><br/><hr/></div>",
    },
]


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    corpora = {
        "legit.jsonl": make_corpus("legitimate", 320, seed=11) + JUNK_LEGIT,
        "phish.jsonl": make_corpus("phishing", 240, seed=13) + JUNK_PHISH,
    }
    for name, records in corpora.items():
        path = OUT / name
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        print(f"wrote {len(records)} records -> {path}")


if __name__ == "__main__":
    main()
