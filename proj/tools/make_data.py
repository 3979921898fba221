#!/usr/bin/env python3
"""Writes the bundled mini knowledge base, embeddings and layout spec into data/."""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"
DIM = 32

ROOMS = {
    "bedroom": ["bed", "nightstand", "lamp", "wardrobe", "dresser", "pillow"],
    "kitchen": ["refrigerator", "stove", "sink", "microwave", "kitchen cabinet", "dining table", "chair"],
    "living room": ["sofa", "coffee table", "tv", "armchair", "bookshelf", "plant"],
    "bathroom": ["toilet", "bathtub", "towel", "mirror"],
    "office": ["desk", "office chair", "computer", "monitor", "printer", "keyboard"],
}

USES = {
    "bed": ["sleeping", "resting"], "nightstand": ["storing things"], "lamp": ["reading", "lighting"],
    "wardrobe": ["storing clothes"], "dresser": ["storing clothes"], "pillow": ["sleeping"],
    "refrigerator": ["storing food"], "stove": ["cooking"], "sink": ["washing"], "microwave": ["cooking"],
    "kitchen cabinet": ["storing food"], "dining table": ["eating"], "chair": ["sitting", "eating"],
    "sofa": ["sitting", "relaxing"], "coffee table": ["holding drinks"], "tv": ["watching"],
    "armchair": ["sitting", "relaxing"], "bookshelf": ["storing books", "reading"], "plant": ["decoration"],
    "toilet": ["washing"], "bathtub": ["washing", "relaxing"], "towel": ["washing"], "mirror": ["decoration"],
    "desk": ["working"], "office chair": ["sitting", "working"], "computer": ["working"],
    "monitor": ["working", "watching"], "printer": ["working"], "keyboard": ["working", "typing"],
}


def main():
    rng = random.Random(20240611)
    rows = []
    for room, objs in ROOMS.items():
        for o in objs:
            rows.append((o, "AtLocation", room, round(rng.uniform(2.0, 9.0), 3)))
            rows.append((o, "AtLocation", "house", round(rng.uniform(1.2, 3.0), 3)))
            rows.append((o, "AtLocation", "floor", round(rng.uniform(0.2, 1.0), 3)))
    for o, uses in USES.items():
        for u in uses:
            rows.append((o, "UsedFor", u, round(rng.uniform(1.5, 8.0), 3)))
        rows.append((o, "UsedFor", "everything", round(rng.uniform(0.1, 0.9), 3)))
    rows.sort()
    with open(OUT / "mini_kb.tsv", "w") as f:
        f.write("# head\trelation\ttail\tweight\n")
        for h, r, t, w in rows:
            f.write(f"{h}\t/r/{r}\t{t}\t{w}\n")

    def unit(v):
        n = sum(x * x for x in v) ** 0.5
        return [x / n for x in v]

    def rand_vec():
        return [rng.gauss(0.0, 1.0) for _ in range(DIM)]

    base = {room: unit(rand_vec()) for room in ROOMS}
    vectors = {}
    for room, objs in ROOMS.items():
        vectors[room] = [x * 1.0 for x in base[room]]
        for o in objs:
            noise = rand_vec()
            vectors[o] = unit([0.7 * b + 0.5 * e / DIM ** 0.5 for b, e in zip(base[room], noise)])
    uses = sorted({u for us in USES.values() for u in us} | {"everything"})
    for u in uses:
        owners = [o for o, us in USES.items() if u in us]
        mean = [sum(vectors[o][i] for o in owners) / len(owners) if owners else 0.0 for i in range(DIM)]
        noise = rand_vec()
        vectors[u] = unit([m + 0.3 * e / DIM ** 0.5 for m, e in zip(mean, noise)])
    for extra in ["house", "floor"]:
        vectors[extra] = unit(rand_vec())
    with open(OUT / "mini_emb.txt", "w") as f:
        f.write(f"DIM {DIM}\n")
        for term in sorted(vectors):
            f.write(term + " " + " ".join(f"{x:.6f}" for x in vectors[term]) + "\n")

    layout = {
        "room": [8.0, 6.0],
        "dim": 2,
        "min_separation": 0.15,
        "classes": [
            {"class": "bed", "count": [1, 1], "region": [0.2, 0.2, 3.8, 2.8], "z": [0.2, 0.6]},
            {"class": "nightstand", "count": [1, 2], "anchor": "bed", "radius": [0.6, 1.1], "z": [0.3, 0.6]},
            {"class": "lamp", "count": [0, 1], "anchor": "nightstand", "radius": [0.15, 0.4], "z": [0.6, 1.0]},
            {"class": "wardrobe", "count": [1, 1], "region": [0.2, 0.2, 3.8, 2.8], "z": [0.8, 1.2]},
            {"class": "refrigerator", "count": [1, 1], "region": [4.2, 0.2, 7.8, 2.8], "z": [0.8, 1.0]},
            {"class": "stove", "count": [1, 1], "anchor": "refrigerator", "radius": [0.8, 1.6], "z": [0.4, 0.5]},
            {"class": "dining table", "count": [1, 1], "region": [4.5, 0.5, 7.5, 2.5], "z": [0.7, 0.8]},
            {"class": "chair", "count": [1, 3], "anchor": "dining table", "radius": [0.5, 1.0], "z": [0.4, 0.5]},
            {"class": "sofa", "count": [1, 1], "region": [0.3, 3.3, 4.7, 5.7], "z": [0.3, 0.5]},
            {"class": "coffee table", "count": [1, 1], "anchor": "sofa", "radius": [0.6, 1.1], "z": [0.3, 0.4]},
            {"class": "tv", "count": [0, 1], "anchor": "coffee table", "radius": [1.0, 1.6], "z": [0.9, 1.2]},
            {"class": "plant", "count": [0, 2], "z": [0.2, 0.8], "target": False},
            {"class": "desk", "count": [1, 1], "region": [5.3, 3.3, 7.7, 5.7], "z": [0.7, 0.8]},
            {"class": "office chair", "count": [1, 1], "anchor": "desk", "radius": [0.4, 0.8], "z": [0.4, 0.5]},
            {"class": "monitor", "count": [0, 1], "anchor": "desk", "radius": [0.1, 0.35], "z": [1.0, 1.2]},
        ],
    }
    with open(OUT / "layout.json", "w") as f:
        json.dump(layout, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
