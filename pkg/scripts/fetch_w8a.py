#!/usr/bin/env python3
"""Download the w8a binary classification dataset (LIBSVM format).

The file is ~4 MB of sparse examples (n=49749, d=300) and is not bundled
with the repository.  Run this once with network access:

    python3 scripts/fetch_w8a.py [target-path]

The default target is data/w8a.  Set LOCALSGD_W8A to the target path so
the experiment configs and the acceptance tests pick it up.
"""

import sys
import urllib.request
from pathlib import Path

URL = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/w8a"
EXPECTED_N = 49749
EXPECTED_D = 300


def main():
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/w8a")
    target.parent.mkdir(parents=True, exist_ok=True)
    print(f"fetching {URL} -> {target}")
    with urllib.request.urlopen(URL, timeout=120) as response:
        payload = response.read()
    target.write_bytes(payload)

    lines = [ln for ln in payload.decode("utf-8").splitlines() if ln.strip()]
    max_index = 0
    for line in lines:
        for token in line.split()[1:]:
            max_index = max(max_index, int(token.split(":")[0]))
    print(f"examples: {len(lines)} (expected {EXPECTED_N})")
    print(f"max feature index: {max_index} (expected {EXPECTED_D})")
    if len(lines) != EXPECTED_N or max_index != EXPECTED_D:
        print("warning: file does not match the expected w8a shape", file=sys.stderr)
        return 1
    print(f"ok; export LOCALSGD_W8A={target} to use it in tests and configs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
