#!/usr/bin/env python3
"""Generate the deterministic toy corpus used by the acceptance run.

Short grade-school stories built from fixed word lists with a seeded RNG.
Documents are separated by a line holding only the record separator (0x1e).
"""
import argparse
import random

NAMES = ["Ada", "Ben", "Cora", "Dev", "Emma", "Finn", "Gita", "Hugo", "Iris", "Jack", "Kira", "Leo",
         "Mia", "Noah", "Omar", "Pia", "Quinn", "Rosa", "Sam", "Tess", "Uma", "Vic", "Wren", "Yara", "Zane"]
ANIMALS = ["dog", "cat", "rabbit", "duck", "horse", "goat", "fox", "owl", "turtle", "frog", "bird", "mouse"]
COLORS = ["red", "blue", "green", "yellow", "small", "big", "happy", "sleepy", "brown", "white"]
PLACES = ["the park", "the farm", "the school", "the river", "the garden", "the forest", "the beach",
          "the market", "the library", "the hill", "the lake", "the town"]
OBJECTS = ["ball", "kite", "book", "apple", "hat", "box", "cake", "boat", "drum", "map", "cup", "shell"]
WEATHER = ["sunny", "rainy", "windy", "cold", "warm", "cloudy", "bright", "quiet"]
FEELINGS = ["happy", "sad", "tired", "proud", "surprised", "calm", "excited", "curious"]
TIMES = ["In the morning", "After lunch", "In the evening", "One day", "Before school", "At night"]
VERBS = [("found", "a"), ("lost", "the"), ("painted", "a"), ("shared", "the"), ("carried", "a"),
         ("cleaned", "the"), ("wanted", "a"), ("made", "a")]


def article(word):
    return "an" if word[0] in "aeiou" else "a"


def sentence(rng, hero, pet, friend):
    kind = rng.randrange(9)
    obj = rng.choice(OBJECTS)
    place = rng.choice(PLACES)
    if kind == 0:
        return f"{rng.choice(TIMES)}, {hero} went to {place} with the {pet}."
    if kind == 1:
        verb, det = rng.choice(VERBS)
        det = article(obj) if det == "a" else det
        return f"{hero} {verb} {det} {obj} at {place}."
    if kind == 2:
        return f"The {pet} ran after the {obj} and {hero} laughed."
    if kind == 3:
        return f"It was {rng.choice(WEATHER)}, so {hero} and {friend} stayed near {place}."
    if kind == 4:
        return f"{friend} said, \"Can I see your {obj}?\" and {hero} said yes."
    if kind == 5:
        return f"{hero} felt {rng.choice(FEELINGS)} because the {pet} was {rng.choice(COLORS)}."
    if kind == 6:
        n = rng.randrange(2, 10)
        return f"{hero} counted {n} {obj}s. Then {friend} counted {n + 1} {obj}s."
    if kind == 7:
        return f"At {place}, {friend} gave {hero} {article(obj)} {obj}."
    return f"The {pet} was tired, so it slept under the {rng.choice(COLORS)} {obj}."


def story(rng):
    hero, friend = rng.sample(NAMES, 2)
    pet = rng.choice(ANIMALS)
    color = rng.choice(COLORS)
    lines = [f"{hero} and the {color} {pet}", ""]
    body = [f"{hero} had {article(color)} {color} {pet}."]
    body += [sentence(rng, hero, pet, friend) for _ in range(rng.randrange(5, 10))]
    body.append(f"At the end of the day, {hero} and the {pet} went home. The end.")
    lines.append(" ".join(body))
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/toy_corpus.txt")
    ap.add_argument("--bytes", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    docs, size = [], 0
    while size < args.bytes:
        doc = story(rng)
        docs.append(doc)
        size += len(doc.encode("utf-8")) + 2
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("\x1e\n".join(docs))
    print(f"wrote {len(docs)} documents, {size} bytes to {args.out}")


if __name__ == "__main__":
    main()
