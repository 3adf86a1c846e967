"""Synchronous template grammars for the two synthetic languages and their joint vocabulary.

Templates are token patterns over five slots (agent, attribute, action,
object, location). Target and source templates are aligned by id, so
source template ``i`` and target template ``i`` express the same scene.
Target templates may carry function-word jitter slots; the first option of
each is canonical and the canonical realization is what references use.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from ..errors import ConfigError, GrammarError, VocabularyError
from ..schemas import Scene, Utterance

SLOTS: Tuple[str, ...] = ("agent", "attribute", "action", "object", "location")
SPECIALS: Tuple[str, ...] = ("<pad>", "<bos>", "<eos>")
PAD_ID, BOS_ID, EOS_ID = 0, 1, 2

TARGET = "target"
SOURCE = "source"


# -- template pieces --------------------------------------------------------

@dataclass(frozen=True)
class Word:
    text: str


@dataclass(frozen=True)
class Slot:
    name: str


@dataclass(frozen=True)
class Jitter:
    """Interchangeable function words; ``options[0]`` is canonical."""
    options: Tuple[str, ...]
    weights: Tuple[float, ...]


@dataclass(frozen=True)
class Optional_:
    """Realized only when the scene has an object."""
    pieces: Tuple["Piece", ...]


Piece = Union[Word, Slot, Jitter, Optional_]


@dataclass(frozen=True)
class Template:
    template_id: int
    pieces: Tuple[Piece, ...]
    requires_object: bool = False

    def compatible(self, scene: Scene) -> bool:
        return scene.object is not None or not self.requires_object

    def jitter_slots(self, scene: Scene) -> List[Jitter]:
        return [p for p in _flatten(self.pieces, scene) if isinstance(p, Jitter)]


def _flatten(pieces: Sequence[Piece], scene: Scene) -> Iterator[Piece]:
    for p in pieces:
        if isinstance(p, Optional_):
            if scene.object is not None:
                yield from _flatten(p.pieces, scene)
        else:
            yield p


def _w(*words: str) -> Tuple[Word, ...]:
    return tuple(Word(x) for x in words)


PREP = Jitter(("in", "at", "on", "by"), (0.5, 0.3, 0.1, 0.1))
LOC_DET = Jitter(("the", "a"), (5 / 9, 4 / 9))
OBJ_DET = Jitter(("a", "the"), (5 / 9, 4 / 9))
OBJ_VERB = Jitter(("with", "holding"), (0.6, 0.4))

_T_OBJ = (OBJ_VERB, OBJ_DET, Slot("object"))
_T_LOC = (PREP, LOC_DET, Slot("location"))
_A_D_V = (Slot("attribute"), Slot("agent"), Slot("action"))

TARGET_TEMPLATES: Tuple[Template, ...] = (
    Template(0, _w("a") + _A_D_V + (Optional_(_T_OBJ),) + _T_LOC),
    Template(1, _w("the") + (Slot("agent"),) + _w("that", "is") + (Slot("attribute"), Slot("action"))
             + (Optional_(_T_OBJ),) + _T_LOC),
    Template(2, _w("there", "is", "a") + (Slot("attribute"), Slot("agent")) + _w("that") + (Slot("action"),)
             + (Optional_(_T_OBJ),) + _T_LOC),
    Template(3, _w("in") + (LOC_DET, Slot("location")) + _w("a") + _A_D_V + (Optional_(_T_OBJ),)),
    Template(4, _w("one") + _A_D_V + (Optional_(_T_OBJ),) + _w("near") + (LOC_DET, Slot("location"))),
    Template(5, _w("this") + _A_D_V + _T_OBJ + _T_LOC, requires_object=True),
)

_S_OBJ = Optional_(_w("pelu") + (Slot("object"),))
_S_LOC = _w("ni") + (Slot("location"),)

SOURCE_TEMPLATES: Tuple[Template, ...] = (
    Template(0, (Slot("agent"), Slot("attribute")) + _w("kan", "n") + (Slot("action"), _S_OBJ) + _S_LOC),
    Template(1, (Slot("agent"),) + _w("ti", "o", "je") + (Slot("attribute"),) + _w("n") + (Slot("action"), _S_OBJ) + _S_LOC),
    Template(2, _w("o", "ri") + (Slot("agent"), Slot("attribute")) + _w("kan", "ti", "o", "n")
             + (Slot("action"), _S_OBJ) + _S_LOC),
    Template(3, _S_LOC + (Slot("agent"), Slot("attribute")) + _w("kan", "n") + (Slot("action"), _S_OBJ)),
    Template(4, _w("won") + (Slot("agent"), Slot("attribute")) + _w("n") + (Slot("action"), _S_OBJ) + _S_LOC),
)

# slot inventories are ordered confusability rings: each value's neighbours are i-1 and i+1
TARGET_LEXICON: Dict[str, Tuple[str, ...]] = {
    "agent": ("dog", "cat", "horse", "bird", "boy", "child", "girl", "woman", "man", "player"),
    "attribute": ("brown", "black", "white", "red", "small", "young", "big", "happy"),
    "action": ("runs", "jumps", "plays", "sits", "walks", "swims", "climbs", "rides"),
    "object": ("ball", "frisbee", "stick", "rope", "board", "kite", "bike", "rock"),
    "location": ("field", "court", "grass", "park", "street", "beach", "river", "snow"),
}
SOURCE_LEXICON: Dict[str, Tuple[str, ...]] = {
    "agent": ("aja", "ologbo", "esin", "eye", "omokunrin", "omode", "omobinrin", "obinrin", "okunrin", "agbaboolu"),
    "attribute": ("alawo", "dudu", "funfun", "pupa", "kekere", "ewe", "nla", "ayo"),
    "action": ("sare", "fo", "sere", "joko", "rin", "luwe", "gun", "gigun"),
    "object": ("boolu", "awo", "igi", "okun", "paako", "afefe", "keke", "apata"),
    "location": ("papa", "agbala", "koriko", "ogba", "opopona", "eti-okun", "odo", "yinyin"),
}
TARGET_FUNCTION_WORDS = ("a", "the", "that", "is", "there", "in", "at", "on", "by", "one", "near", "this", "with", "holding")
SOURCE_FUNCTION_WORDS = ("kan", "n", "pelu", "ni", "ti", "o", "je", "ri", "won")


# -- vocabulary -------------------------------------------------------------

class Vocabulary:
    """Joint id space: specials, then target words, then source words."""

    def __init__(self, words: Sequence[str], languages: Sequence[str]) -> None:
        if len(words) != len(languages):
            raise ConfigError("vocabulary", "words and languages differ in length")
        self.words: List[str] = list(words)
        self.languages: List[str] = list(languages)
        self._index: Dict[str, int] = {}
        for i, w in enumerate(self.words):
            if w in self._index:
                raise ConfigError("vocabulary", f"duplicate word {w!r}")
            self._index[w] = i

    @classmethod
    def joint(cls) -> "Vocabulary":
        words: List[str] = list(SPECIALS)
        langs: List[str] = ["special"] * len(SPECIALS)
        for lang, fw, lex in ((TARGET, TARGET_FUNCTION_WORDS, TARGET_LEXICON),
                              (SOURCE, SOURCE_FUNCTION_WORDS, SOURCE_LEXICON)):
            block = list(fw) + [w for slot in SLOTS for w in lex[slot]]
            words += block
            langs += [lang] * len(block)
        return cls(words, langs)

    def __len__(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise VocabularyError(f"unknown word {word!r}") from None

    def word_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.words):
            raise VocabularyError(f"unknown token id {token_id}")
        return self.words[token_id]

    def language_of(self, token_id: int) -> str:
        self.word_of(token_id)
        return self.languages[token_id]

    def ids_for(self, language: str) -> List[int]:
        return [i for i, lang in enumerate(self.languages) if lang == language]

    def to_json(self) -> str:
        return json.dumps({"words": self.words, "languages": self.languages}, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        raw = json.loads(text)
        return cls(raw["words"], raw["languages"])


# -- grammar ----------------------------------------------------------------

@dataclass
class Grammar:
    language: str
    lexicon: Dict[str, Tuple[str, ...]]
    templates: Tuple[Template, ...]
    function_words: Tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def target(cls) -> "Grammar":
        return cls(TARGET, dict(TARGET_LEXICON), TARGET_TEMPLATES, TARGET_FUNCTION_WORDS)

    @classmethod
    def source(cls) -> "Grammar":
        return cls(SOURCE, dict(SOURCE_LEXICON), SOURCE_TEMPLATES, SOURCE_FUNCTION_WORDS)

    def collapsed(self) -> "Grammar":
        """Every template realizes like template 0 (ids kept)."""
        base = self.templates[0]
        return Grammar(self.language, self.lexicon,
                       tuple(Template(t.template_id, base.pieces, base.requires_object) for t in self.templates),
                       self.function_words)

    @property
    def inventories(self) -> Dict[str, int]:
        return {slot: len(self.lexicon[slot]) for slot in SLOTS}

    def template(self, template_id: int) -> Template:
        if not 0 <= template_id < len(self.templates):
            raise GrammarError(f"{self.language} grammar has no template {template_id}")
        return self.templates[template_id]

    def compatible_templates(self, scene: Scene, limit: Optional[int] = None) -> List[int]:
        ids = [t.template_id for t in self.templates if t.compatible(scene)]
        return ids if limit is None else [i for i in ids if i < limit]

    def words_for(self, scene: Scene, template_id: int, jitter: Optional[Sequence[int]] = None) -> List[str]:
        """Surface words; ``jitter`` picks an option per jitter slot (default canonical)."""
        tpl = self.template(template_id)
        if not tpl.compatible(scene):
            raise GrammarError(f"template {template_id} needs an object; scene {scene.scene_id} has none")
        values = scene.slots()
        out: List[str] = []
        j = 0
        for piece in _flatten(tpl.pieces, scene):
            if isinstance(piece, Word):
                out.append(piece.text)
            elif isinstance(piece, Slot):
                value = values[piece.name]
                inventory = self.lexicon[piece.name]
                if value is None or not 0 <= value < len(inventory):
                    raise GrammarError(f"slot {piece.name}={value} outside its inventory")
                out.append(inventory[value])
            elif isinstance(piece, Jitter):
                choice = 0 if jitter is None else int(jitter[j])
                out.append(piece.options[choice])
                j += 1
        return out

    def slot_of(self, word: str) -> Optional[Tuple[str, int]]:
        for slot, words in self.lexicon.items():
            if word in words:
                return slot, words.index(word)
        return None


def realize(scene: Scene, grammar: Grammar, template_id: int, vocab: Vocabulary,
            jitter: Optional[Sequence[int]] = None) -> Utterance:
    words = grammar.words_for(scene, template_id, jitter)
    return Utterance(scene_id=scene.scene_id, language=grammar.language,
                     tokens=[vocab.id_of(w) for w in words], template_id=template_id)


def recover_slots(tokens: Sequence[int], grammar: Grammar, vocab: Vocabulary) -> Dict[str, Optional[int]]:
    """Invert the slot lexicons over a realization (function words are skipped)."""
    found: Dict[str, Optional[int]] = {slot: None for slot in SLOTS}
    for t in tokens:
        hit = grammar.slot_of(vocab.word_of(int(t)))
        if hit is not None:
            found[hit[0]] = hit[1]
    return found
