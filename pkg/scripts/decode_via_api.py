#!/usr/bin/env python3
"""Post one audio feature file (``*.f64``) to a running service and print the hypotheses."""
import os
import sys
from typing import Dict, List

import pandas as pd
import requests

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.corpus.audio import read_audio  # noqa: E402

API = os.getenv("VGS_API", "http://localhost:8000/decode")


def pretty_print(result: Dict) -> None:
    hyps: List[Dict] = result.get("hypotheses", [])
    df = pd.DataFrame.from_records(hyps, columns=["text", "log_prob", "group"])
    print(df.to_string(index=True))
    meta = result.get("_meta", {})
    print(f"\nstrategy={meta.get('strategy')} elapsed_ms={meta.get('elapsed_ms')} checkpoint={meta.get('checkpoint')}")


def main(path: str, strategy: str = "greedy", num_return: int = 1) -> None:
    frames = read_audio(path)
    payload = {"frames": frames.tolist(), "strategy": strategy, "num_return": num_return}
    headers = {"x-api-key": os.environ["VGS_API_KEY"]} if os.getenv("VGS_API_KEY") else {}
    r = requests.post(API, json=payload, headers=headers, timeout=60)
    r.raise_for_status()
    pretty_print(r.json())


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit("usage: decode_via_api.py AUDIO.f64 [strategy] [num_return]")
    strategy = sys.argv[2] if len(sys.argv) > 2 else "greedy"
    num_return = int(sys.argv[3]) if len(sys.argv) > 3 else 1
    main(sys.argv[1], strategy, num_return)
