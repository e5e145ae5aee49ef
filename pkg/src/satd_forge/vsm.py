"""Vector space model: bag-of-words counts and TF-IDF weighting for the
traditional classifiers. Documents are sparse {term_index: weight} maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError
from .textpipe import Vocabulary


def bow_counts(document, vocab: Vocabulary) -> dict[int, float]:
    """Occurrence counts per vocabulary term; out-of-vocabulary tokens ignored."""
    counts: dict[int, float] = {}
    index_of = vocab.index_of
    for tok in document:
        idx = index_of.get(tok)
        if idx is None:
            continue
        counts[idx] = counts.get(idx, 0.0) + 1.0
    return counts


@dataclass
class TfIdfModel:
    vocab_size: int
    n_documents: int
    df: dict[int, int]
    idf: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.idf:
            self.idf = {
                t: math.log(self.n_documents / df_t) + 1.0 for t, df_t in self.df.items()
            }


def fit_tfidf(documents, vocab: Vocabulary) -> TfIdfModel:
    """Document frequencies over the training documents; idf = ln(|D|/df) + 1."""
    documents = list(documents)
    if not documents:
        raise DataError("cannot fit TF-IDF on an empty document set")
    df: dict[int, int] = {}
    for doc in documents:
        for idx in set(bow_counts(doc, vocab)):
            df[idx] = df.get(idx, 0) + 1
    return TfIdfModel(vocab_size=vocab.size, n_documents=len(documents), df=df)


def transform(document, vocab: Vocabulary, model: TfIdfModel) -> dict[int, float]:
    """tf(t, d) * idf(t); terms unseen at fit time get weight zero."""
    weighted: dict[int, float] = {}
    for idx, tf in bow_counts(document, vocab).items():
        idf = model.idf.get(idx)
        if idf is not None:
            weighted[idx] = tf * idf
    return weighted
