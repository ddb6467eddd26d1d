"""Template-grammar generator for desk-scale slot-filling corpora.

Sentences are drawn from flight-query style templates whose slot fillers are
labeled with suffix-BIO tags ("slot-B", "slot-I") and carry a per-token word
class. Two slot types (confirmation code / tracking reference) share an
identical filler distribution and an identical right context, so that filler
tokens far from the trigger word are ambiguous from the word window alone and
can only be labeled consistently through the label context.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

from .corpus import NO_CLASS, Sentence, write_column_file
from .errors import ConfigError
from .mathcore import new_rng


@dataclass
class SlotSpec:
    """Filler source for one slot: fixed phrases, or random pool sequences."""

    class_name: str = NO_CLASS
    phrases: Optional[list] = None
    pool: Optional[list] = None
    min_len: int = 1
    max_len: int = 1

    def sample(self, rng) -> list:
        if self.phrases is not None:
            return self.phrases[rng.integers(len(self.phrases))].split()
        length = int(rng.integers(self.min_len, self.max_len + 1))
        return [self.pool[rng.integers(len(self.pool))] for _ in range(length)]


@dataclass
class Grammar:
    """Slot definitions plus templates mixing literal words and {slot} refs."""

    slots: dict
    templates: list

    @classmethod
    def from_json(cls, path) -> "Grammar":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        slots = {name: SlotSpec(**spec) for name, spec in raw["slots"].items()}
        return cls(slots=slots, templates=raw["templates"])


CITY_PHRASES = [
    "boston", "chicago", "denver", "seattle", "atlanta", "portland",
    "new york city", "salt lake city", "san francisco", "los angeles",
    "kansas city", "saint louis",
]
AIRLINE_PHRASES = [
    "delta", "united", "continental", "air france", "british airways",
]
DATE_PHRASES = [
    "monday", "tuesday", "friday", "next sunday", "next thursday",
    "early monday morning", "late friday evening",
]
# Shared pool for the two ambiguous slot types; fillers are i.i.d. sequences,
# so tokens deep inside a filler carry no word-level cue about the slot type.
CODEWORD_POOL = [
    "alpha", "bravo", "charlie", "echo", "foxtrot",
    "golf", "india", "juliet", "kilo", "lima",
]


def default_grammar() -> Grammar:
    slots = {
        "from-city": SlotSpec(class_name="city", phrases=CITY_PHRASES),
        "to-city": SlotSpec(class_name="city", phrases=CITY_PHRASES),
        "airline": SlotSpec(class_name="airline", phrases=AIRLINE_PHRASES),
        "date": SlotSpec(class_name="date", phrases=DATE_PHRASES),
        "conf-code": SlotSpec(pool=CODEWORD_POOL, min_len=5, max_len=8),
        "track-ref": SlotSpec(pool=CODEWORD_POOL, min_len=5, max_len=8),
    }
    # The code/reference trigger word appears on both sides of the filler,
    # so forward and backward passes can each pick up the slot type at the
    # span edge; interior tokens still need the label context.
    templates = [
        "i want a flight from {from-city} to {to-city} {date}",
        "show me {airline} flights from {from-city} to {to-city}",
        "please book a flight leaving {from-city} on {date}",
        "list all {airline} flights arriving in {to-city}",
        "my confirmation code is {conf-code} code received thank you",
        "my tracking reference is {track-ref} reference received thank you",
    ]
    return Grammar(slots=slots, templates=templates)


def generate_sentence(grammar: Grammar, rng) -> Sentence:
    template = grammar.templates[rng.integers(len(grammar.templates))]
    words, classes, labels = [], [], []
    for item in template.split():
        if item.startswith("{") and item.endswith("}"):
            name = item[1:-1]
            spec = grammar.slots[name]
            filler = spec.sample(rng)
            for i, token in enumerate(filler):
                words.append(token)
                classes.append(spec.class_name)
                labels.append(f"{name}-B" if i == 0 else f"{name}-I")
        else:
            words.append(item)
            classes.append(NO_CLASS)
            labels.append("O")
    return Sentence(words=words, classes=classes, labels=labels)


def generate_corpus(size: int, seed: int, grammar: Optional[Grammar] = None):
    """Return (train, dev, test) sentence lists; dev/test are size//10 (min 1)."""
    if size < 1:
        raise ConfigError(f"corpus size must be >= 1, got {size}")
    grammar = grammar or default_grammar()
    rng = new_rng(seed)
    held_out = max(1, size // 10)
    train = [generate_sentence(grammar, rng) for _ in range(size)]
    dev = [generate_sentence(grammar, rng) for _ in range(held_out)]
    test = [generate_sentence(grammar, rng) for _ in range(held_out)]
    return train, dev, test


def generate_corpus_files(out_dir, size: int, seed: int, grammar: Optional[Grammar] = None):
    """Write train.txt / dev.txt / test.txt under out_dir; returns the paths."""
    import os

    train, dev, test = generate_corpus(size, seed, grammar)
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, sentences in (("train", train), ("dev", dev), ("test", test)):
        path = os.path.join(out_dir, f"{name}.txt")
        write_column_file(sentences, path)
        paths[name] = path
    return paths
