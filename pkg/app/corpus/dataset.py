"""Build, write and load the synthetic speech/caption corpus.

On disk a corpus directory holds ``corpus.json`` (format version, seed,
config, vocabulary), one ``<split>.jsonl`` line-record file per split and
one audio feature file per item under ``audio/``. Building twice from the
same (config, seed) writes byte-identical files.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError, FormatError
from ..schemas import CorpusConfig, DatasetItem, Scene, Utterance
from ..utils.records import iter_records, write_records
from ..utils.seeding import rng_for
from .audio import AudioPrototypes, read_audio, synthesize_audio, write_audio
from .grammar import Grammar, Vocabulary, realize
from .oracle import oracle_captions
from .scenes import sample_scenes

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1
SPLITS = ("train", "dev", "test")
MANIFEST_NAME = "corpus.json"


@dataclass
class DatasetSplit:
    name: str
    items: List[DatasetItem]
    root: Optional[Path] = None
    audio: Dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.items)

    def frames(self, item: DatasetItem) -> np.ndarray:
        hit = self.audio.get(item.item_id)
        if hit is None:
            if self.root is None:
                raise FormatError(f"no audio for {item.item_id}")
            hit = self.audio[item.item_id] = read_audio(self.root / item.audio_path)
        return hit

    @property
    def scene_ids(self) -> List[int]:
        return sorted({it.scene.scene_id for it in self.items})

    def by_scene(self) -> Dict[int, List[DatasetItem]]:
        out: Dict[int, List[DatasetItem]] = {}
        for it in self.items:
            out.setdefault(it.scene.scene_id, []).append(it)
        return out


@dataclass
class Corpus:
    config: CorpusConfig
    seed: int
    vocab: Vocabulary
    splits: Dict[str, DatasetSplit]
    root: Optional[Path] = None

    def __getitem__(self, name: str) -> DatasetSplit:
        try:
            return self.splits[name]
        except KeyError:
            raise ConfigError("split", f"unknown split {name!r}") from None

    @property
    def train(self) -> DatasetSplit:
        return self.splits["train"]

    @property
    def dev(self) -> DatasetSplit:
        return self.splits["dev"]

    @property
    def test(self) -> DatasetSplit:
        return self.splits["test"]


def validate_corpus_config(config: CorpusConfig) -> None:
    for name in ("n_train", "n_dev", "n_test", "k_captions", "d_audio", "frame_rate"):
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be >= 1")
    if not 1 <= config.n_references <= 5:
        raise ConfigError("n_references", "must be in 1..5")
    if config.noise_sigma < 0:
        raise ConfigError("noise_sigma", "must be >= 0")


def grammars_for(config: CorpusConfig) -> Dict[str, Grammar]:
    target, source = Grammar.target(), Grammar.source()
    if config.collapse_templates:
        target, source = target.collapsed(), source.collapsed()
    return {"target": target, "source": source}


def _scene_items(scene: Scene, split: str, config: CorpusConfig, seed: int,
                 grammars: Dict[str, Grammar], vocab: Vocabulary) -> List[Tuple[DatasetItem, Utterance]]:
    target = grammars["target"]
    references = [realize(scene, target, t, vocab).tokens for t in range(config.n_references)]
    captions = oracle_captions(scene, config.oracle, config.k_captions, seed, target, vocab)
    if config.mode == "paraphrase":
        utterances = [realize(scene, target, t, vocab) for t in range(config.utterances_per_scene)]
    else:
        source = grammars["source"]
        tid = int(rng_for(seed, "source-template", scene.scene_id).integers(len(source.templates)))
        utterances = [realize(scene, source, tid, vocab)]
    items = []
    for u, utt in enumerate(utterances):
        item_id = f"{split}-{scene.scene_id:05d}-{u}"
        items.append((DatasetItem(
            item_id=item_id, split=split, scene=scene, language=utt.language, tokens=utt.tokens,
            template_id=utt.template_id, captions=captions, references=references,
            audio_path=f"audio/{item_id}.f64",
        ), utt))
    return items


def build_dataset(config: CorpusConfig, seed: int, out_dir: Optional[Union[str, Path]] = None) -> Corpus:
    """Scenes, utterances, audio, oracle captions and references for every split.

    Scene ids run consecutively across train, dev and test, so the splits
    are disjoint. When ``out_dir`` is given the corpus is also written there.
    """
    validate_corpus_config(config)
    vocab = Vocabulary.joint()
    grammars = grammars_for(config)
    prototypes = AudioPrototypes(len(vocab), config.d_audio, seed)
    inventories = grammars["target"].inventories
    splits: Dict[str, DatasetSplit] = {}
    start = 0
    for split, n in zip(SPLITS, (config.n_train, config.n_dev, config.n_test)):
        items: List[DatasetItem] = []
        audio: Dict[str, np.ndarray] = {}
        for scene in sample_scenes(inventories, seed, n, start_id=start):
            for item, utt in _scene_items(scene, split, config, seed, grammars, vocab):
                audio[item.item_id] = synthesize_audio(utt, seed, config.noise_sigma, prototypes,
                                                       config.frame_rate).frames
                items.append(item)
        splits[split] = DatasetSplit(split, items, audio=audio)
        logger.info("corpus_split split=%s scenes=%d items=%d", split, n, len(items))
        start += n
    corpus = Corpus(config=config, seed=seed, vocab=vocab, splits=splits)
    if out_dir is not None:
        write_dataset(corpus, out_dir)
    return corpus


def _manifest(corpus: Corpus) -> str:
    payload = {
        "format_version": CORPUS_FORMAT_VERSION,
        "seed": corpus.seed,
        "config": corpus.config.model_dump(mode="json"),
        "vocab": json.loads(corpus.vocab.to_json()),
    }
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_dataset(corpus: Corpus, out_dir: Union[str, Path]) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / MANIFEST_NAME).write_text(_manifest(corpus), encoding="utf-8", newline="\n")
    for name, split in corpus.splits.items():
        write_records(root / f"{name}.jsonl", split.items)
        for item in split.items:
            write_audio(root / item.audio_path, split.frames(item))
        split.root = root
    corpus.root = root
    logger.info("corpus_written dir=%s", root)
    return root


def _read_manifest(base: Path) -> Dict[str, Any]:
    manifest_path = base / MANIFEST_NAME
    if not manifest_path.exists():
        raise FormatError(f"{base}: missing {MANIFEST_NAME}")
    raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = raw.get("format_version")
    if version != CORPUS_FORMAT_VERSION:
        raise FormatError(f"{manifest_path}: unsupported corpus format version {version}")
    return raw


def load_vocabulary(root: Union[str, Path]) -> Vocabulary:
    """Only the vocabulary of a written corpus; items and audio stay on disk."""
    raw = _read_manifest(Path(root))
    return Vocabulary(raw["vocab"]["words"], raw["vocab"]["languages"])


def load_dataset(root: Union[str, Path]) -> Corpus:
    base = Path(root)
    raw = _read_manifest(base)
    vocab = Vocabulary(raw["vocab"]["words"], raw["vocab"]["languages"])
    splits = {
        name: DatasetSplit(name, [DatasetItem(**rec) for rec in iter_records(base / f"{name}.jsonl")], root=base)
        for name in SPLITS
    }
    return Corpus(config=CorpusConfig(**raw["config"]), seed=int(raw["seed"]), vocab=vocab, splits=splits, root=base)


def lm_sequences(corpus: Corpus, split: str = "train", include_captions: bool = True) -> List[List[int]]:
    """Target-language text of a split: references of each scene, plus its captions."""
    out: List[List[int]] = []
    for items in corpus[split].by_scene().values():
        first = items[0]
        out.extend(list(r) for r in first.references)
        if include_captions:
            out.extend(list(c) for c in first.captions)
    return out


def audio_frames(corpora: Sequence[Corpus], split: str = "train") -> List[np.ndarray]:
    return [c[split].frames(it) for c in corpora for it in c[split].items]
