"""Regenerate the desk-scale synthetic corpus under data/synthetic/.

Three small tasks with paraphrased instructions, skewed instruction counts
(so the real and uniform marginals differ), raw intention tags with noisy
variants, and embeddings for instructions, instances, and normalized tags.
Everything is seeded; rerunning reproduces the files byte for byte.
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from replaykit.corpus import load_corpus, save_corpus
from replaykit.taginfo import normalize_rule

ROOT = Path(__file__).resolve().parents[1] / "data" / "synthetic"
SEED = 20240811
DIM = 16
TAG_DIM = 8

TASKS = {
    "arith_add": {
        "instructions": [
            ("Add the two numbers and report their sum.", 20),
            ("Compute the sum of the given integers.", 12),
            ("What is the total of the numbers below?", 6),
            ("Return the result of adding both values.", 4),
        ],
        "tags": {
            "Add the two numbers and report their sum.": ["Arithmetic", "Addition!"],
            "Compute the sum of the given integers.": ["Arithmetic", "Math & Numbers"],
            "What is the total of the numbers below?": ["Addition", "Math & Numbers"],
            "Return the result of adding both values.": ["Arithmetic", "Summation"],
        },
    },
    "str_reverse": {
        "instructions": [
            ("Reverse the characters of the input string.", 18),
            ("Write the given word backwards.", 10),
            ("Output the string in reverse order.", 8),
        ],
        "tags": {
            "Reverse the characters of the input string.": ["String Manipulation", "Reversal"],
            "Write the given word backwards.": ["String-Manipulation", "Reversing"],
            "Output the string in reverse order.": ["Text Processing", "Reversal"],
        },
    },
    "review_sentiment": {
        "instructions": [
            ("Classify the sentiment of this product review as positive or negative.", 16),
            ("Decide whether the review below is positive or negative.", 12),
            ("Label the review sentiment.", 8),
            ("Is the following review positive or negative?", 4),
        ],
        "tags": {
            "Classify the sentiment of this product review as positive or negative.": [
                "Sentiment Analysis",
                "Classification",
            ],
            "Decide whether the review below is positive or negative.": [
                "Sentiment-Analysis",
                "Binary Classification",
            ],
            "Label the review sentiment.": ["Sentiment Analysis", "Labeling"],
            "Is the following review positive or negative?": ["Opinion Mining", "Classification"],
        },
    },
}

POSITIVE_SNIPPETS = [
    "Great quality and fast shipping.",
    "Works exactly as described, very happy.",
    "Five stars, would buy again.",
    "Exceeded my expectations in every way.",
]
NEGATIVE_SNIPPETS = [
    "Broke after two days of light use.",
    "Nothing like the pictures, very disappointed.",
    "Customer support never answered my emails.",
    "Cheap materials and confusing manual.",
]
WORDS = [
    "lantern", "orbit", "maple", "copper", "signal", "harbor", "velvet", "meadow",
    "quartz", "ember", "willow", "summit", "cinder", "breeze", "falcon", "tundra",
]


def make_rows(rng: np.random.Generator) -> list[dict]:
    rows = []
    for task_id, spec in TASKS.items():
        for instruction, count in spec["instructions"]:
            for _ in range(count):
                if task_id == "arith_add":
                    a, b = int(rng.integers(1, 999)), int(rng.integers(1, 999))
                    inp, out = f"{a} {b}", str(a + b)
                elif task_id == "str_reverse":
                    word = WORDS[int(rng.integers(len(WORDS)))]
                    inp, out = word, word[::-1]
                else:
                    if rng.random() < 0.5:
                        inp = POSITIVE_SNIPPETS[int(rng.integers(len(POSITIVE_SNIPPETS)))]
                        out = "positive"
                    else:
                        inp = NEGATIVE_SNIPPETS[int(rng.integers(len(NEGATIVE_SNIPPETS)))]
                        out = "negative"
                rows.append(
                    {"task_id": task_id, "instruction": instruction, "input": inp, "output": out}
                )
    return rows


def unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def write_embeddings(path: Path, rows: dict[str, np.ndarray]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for key, vec in rows.items():
            record = {"key": key, "vector": [round(float(x), 8) for x in vec]}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def main() -> None:
    ROOT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)

    rows = make_rows(rng)
    raw_path = ROOT / "corpus.jsonl"
    with raw_path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    # round-trip through the loader so shipped rows carry assigned ids
    tasks = load_corpus(raw_path)
    save_corpus(tasks, raw_path)

    # instruction embeddings: one direction per task plus per-instruction jitter
    emb: dict[str, np.ndarray] = {}
    task_dirs = {t: unit(rng.normal(size=DIM)) for t in TASKS}
    for task in tasks:
        for instruction in task.histogram:
            emb[instruction] = unit(task_dirs[task.task_id] + 0.35 * rng.normal(size=DIM))
    # instance embeddings keyed by instruction + "\n" + input
    for task in tasks:
        for inst in task.instances:
            key = inst.instruction + "\n" + inst.input
            emb[key] = unit(emb[inst.instruction] + 0.25 * rng.normal(size=DIM))
    write_embeddings(ROOT / "embeddings.jsonl", emb)

    # raw tag table keyed by instruction
    with (ROOT / "tags.jsonl").open("w", encoding="utf-8") as fh:
        for task_id, spec in TASKS.items():
            for instruction, tags in spec["tags"].items():
                fh.write(json.dumps({"key": instruction, "tags": tags}, ensure_ascii=False) + "\n")

    # tag embeddings keyed by the rule-normalized tag forms; make the
    # reversal/reversing pair close enough to merge at threshold 0.1
    normalized = sorted(
        {
            normalize_rule(tag)
            for spec in TASKS.values()
            for tags in spec["tags"].values()
            for tag in tags
        }
    )
    tag_emb: dict[str, np.ndarray] = {}
    for tag in normalized:
        tag_emb[tag] = unit(rng.normal(size=TAG_DIM))
    if "reversal" in tag_emb and "rever" in tag_emb:
        base = tag_emb["reversal"]
        tag_emb["rever"] = unit(base + 0.05 * rng.normal(size=TAG_DIM))
    write_embeddings(ROOT / "tag_embeddings.jsonl", tag_emb)

    with (ROOT / "bounds.json").open("w", encoding="utf-8") as fh:
        json.dump(
            {"arith_add": 0.95, "str_reverse": 0.9, "review_sentiment": 0.85},
            fh,
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")

    with (ROOT / "categories.json").open("w", encoding="utf-8") as fh:
        json.dump(
            {
                "Mathematics": ["arith_add"],
                "Program Execution": ["str_reverse"],
                "Sentiment Analysis": ["review_sentiment"],
            },
            fh,
            ensure_ascii=False,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")

    config = {
        "task_order": ["arith_add", "str_reverse", "review_sentiment"],
        "alpha_per_task": 20,
        "strategy": "inscl",
        "mode": "real",
        "method": "exact",
        "seed": SEED,
        "holdout_fraction": 0.2,
        "paths": {
            "corpus": "corpus.jsonl",
            "embeddings": "embeddings.jsonl",
            "tags": "tags.jsonl",
            "tag_embeddings": "tag_embeddings.jsonl",
            "bounds": "bounds.json",
            "state_dir": "state",
        },
    }
    with (ROOT / "config.json").open("w", encoding="utf-8") as fh:
        json.dump(config, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")

    # demo predictions over the holdout: exact for fresh tasks, degraded for
    # older ones so the gain curve and forgetting rates are non-trivial
    from replaykit.config import load_run_config
    from replaykit.pipeline import PipelineContext

    ctx = PipelineContext(load_run_config(ROOT / "config.json"))
    order = config["task_order"]
    with (ROOT / "predictions.jsonl").open("w", encoding="utf-8") as fh:
        for stage in range(1, len(order) + 1):
            for j, task_id in enumerate(order[:stage], start=1):
                age = stage - j
                for inst in ctx.holdout[task_id].instances:
                    tokens = inst.output.split()
                    if age == 0 or len(tokens) <= 1:
                        predicted = inst.output if age == 0 else (inst.output if rng.random() < 0.75 else "unknown")
                    else:
                        keep = max(1, len(tokens) - age)
                        predicted = " ".join(tokens[:keep])
                    record = {"stage": stage, "task_id": task_id, "id": inst.id, "output": predicted}
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    print(f"wrote synthetic corpus under {ROOT}")


if __name__ == "__main__":
    main()
