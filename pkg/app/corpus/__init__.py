from .dataset import Corpus, DatasetSplit, build_dataset, load_dataset
from .grammar import Grammar, Vocabulary, realize

__all__ = ["Corpus", "DatasetSplit", "Grammar", "Vocabulary", "build_dataset", "load_dataset", "realize"]
