"""Template-generated paraphrase pairs for small-scale training runs."""

from __future__ import annotations

import numpy as np

from .corpus import QuestionPair

TEMPLATES = (
    ("how can i learn {x} ?", "what is the best way to learn {x} ?"),
    ("is {x} hard to learn ?", "how difficult is it to learn {x} ?"),
    ("why do people like {x} ?", "what makes {x} so popular ?"),
    ("where can i study {x} online ?", "which websites teach {x} ?"),
    ("how long does it take to master {x} ?", "how much time is needed to get good at {x} ?"),
    ("what are good books about {x} ?", "which books should i read on {x} ?"),
    ("should i learn {x} first ?", "is {x} a good first choice ?"),
    ("what jobs need {x} ?", "which careers use {x} ?"),
    ("how do i get better at {x} ?", "what can i do to improve my {x} ?"),
    ("is {x} worth learning ?", "does learning {x} pay off ?"),
)

SUBJECTS = (
    "python", "chess", "guitar", "french", "calculus", "painting", "cooking", "swimming",
    "physics", "drawing", "piano", "spanish", "statistics", "poetry", "running", "chemistry",
    "photography", "dancing", "economics", "biology",
)


def template_pairs(n, seed=0, n_subjects=None):
    """``n`` distinct (source, target) pairs drawn without replacement from the template grid.

    ``n_subjects`` restricts the grid to the first few subjects, which keeps
    the vocabulary small.
    """
    subjects = SUBJECTS[:n_subjects] if n_subjects else SUBJECTS
    grid = [(t, s) for t in range(len(TEMPLATES)) for s in range(len(subjects))]
    if n > len(grid):
        raise ValueError(f"at most {len(grid)} distinct pairs available, asked for {n}")
    pick = np.random.default_rng(seed).permutation(len(grid))[:n]
    out = []
    for k in pick:
        t, s = grid[k]
        src, tgt = TEMPLATES[t]
        out.append((src.format(x=subjects[s]), tgt.format(x=subjects[s])))
    return out


def as_question_pairs(pairs, start_id=1):
    return [QuestionPair(start_id + i, 2 * (start_id + i), 2 * (start_id + i) + 1, s, t, 1)
            for i, (s, t) in enumerate(pairs)]
