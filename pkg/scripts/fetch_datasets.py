#!/usr/bin/env python3
"""Download the two text corpora used by the reproduction runs into data/.

  tinyshakespeare.txt   ~1.1 MB, concatenated Shakespeare plays
  ptb.txt               ~5.8 MB, Penn Treebank text (train+valid portions
                        joined; the trainer does its own 90/10 split)

Both are plain UTF-8 text; the loaders build the character vocabulary from
the file itself, so no preprocessing is required. Re-running skips files
that are already present. Exits nonzero if any requested file could not be
fetched (offline boxes: copy the files into data/ by hand instead).
"""

import sys
import urllib.error
import urllib.request
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "data"

# (filename, ordered candidate URLs)
SOURCES = [
    ("tinyshakespeare.txt", [
        "https://raw.githubusercontent.com/karpathy/char-rnn/master/data/"
        "tinyshakespeare/input.txt",
    ]),
    ("ptb.txt", [
        # train + valid character text, concatenated in this order
        "https://raw.githubusercontent.com/wojzaremba/lstm/master/data/ptb.train.txt",
        "https://raw.githubusercontent.com/wojzaremba/lstm/master/data/ptb.valid.txt",
    ]),
]


def fetch(url: str) -> bytes:
    print(f"  GET {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def main() -> int:
    DATA.mkdir(exist_ok=True)
    failures = 0
    for name, urls in SOURCES:
        dest = DATA / name
        if dest.is_file() and dest.stat().st_size > 0:
            print(f"{name}: already present ({dest.stat().st_size:,} bytes)")
            continue
        try:
            blob = b"".join(fetch(u) for u in urls)
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            print(f"{name}: FAILED ({exc}); place the file at {dest} manually")
            failures += 1
            continue
        dest.write_bytes(blob)
        print(f"{name}: wrote {len(blob):,} bytes")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
