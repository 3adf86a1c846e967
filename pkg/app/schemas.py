"""Pydantic data models for the image-pivot speech translation toolkit."""

from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing_extensions import Literal

Mode = Literal["paraphrase", "translation"]
Strategy = Literal["greedy", "beam", "diverse_beam", "multinomial"]
OracleStrategy = Literal["deterministic_best", "diverse_templates", "sampled"]
Tier = Literal["tier_A", "tier_B", "tier_C"]
Smoothing = Literal["none", "add_epsilon"]
RowKind = Literal[
    "annotator_topline",
    "supervised_translation_topline",
    "generated_captions_topline",
    "vgs_translation",
    "vgs_paraphrase",
]

# captioner quality tiers: slot confusion rate per tier
TIER_CONFUSION: Dict[str, float] = {"tier_A": 0.02, "tier_B": 0.05, "tier_C": 0.10}


class ModelConfig(BaseModel):
    d_audio: int = Field(default=48, description="Encoder output width")
    d_text: int = Field(default=64, description="Decoder width")
    n_blocks: int = Field(default=4, description="Decoder depth")
    n_heads: int = Field(default=4, description="Decoder attention heads")
    vocab_size_text: int = Field(default=128, description="Decoder vocabulary size")
    max_audio_frames: int = 64
    max_text_len: int = 24
    dropout: float = Field(default=0.1, description="Dropout on decoder sublayer outputs while training")
    encoder_blocks: int = 2
    encoder_heads: int = 4
    encoder_positional: bool = Field(default=True, description="Add learned positions to encoder frames")
    mlp_ratio: int = 4
    ln_eps: float = 1e-5
    init_std: float = 0.02


class PretrainConfig(BaseModel):
    lm_lr: float = Field(default=1e-3, description="Decoder language-model learning rate")
    lm_batch_size: int = 32
    lm_max_epochs: int = 30
    lm_patience: int = Field(default=2, description="Epochs without dev-perplexity gain before stopping")
    plateau_tol: float = Field(default=0.01, description="Relative perplexity gain that counts as progress")
    enc_lr: float = 1e-3
    enc_batch_size: int = 16
    enc_epochs: int = 5
    mask_prob: float = Field(default=0.15, description="Fraction of frames masked for reconstruction")


class DecodeConfig(BaseModel):
    strategy: Strategy = "greedy"
    beam_width: int = 5
    num_groups: int = 5
    diversity_penalty: float = Field(default=0.5, description="Hamming diversity strength (lambda)")
    temperature: float = 1.0
    max_len: int = 20
    num_return: int = 1
    seed: int = 0
    length_alpha: float = Field(default=0.0, description="Length-normalisation exponent for beam scores")


class Hypothesis(BaseModel):
    tokens: List[int]
    log_prob: float
    score: float
    group: Optional[int] = None
    finished: bool = False


class EvalPair(BaseModel):
    hypothesis: List[int]
    references: List[List[int]]

    @field_validator("references")
    @classmethod
    def _references_present(cls, refs: List[List[int]]) -> List[List[int]]:
        if not refs:
            raise ValueError("at least one reference is required")
        if any(len(r) == 0 for r in refs):
            raise ValueError("references must be non-empty")
        return refs


class BleuScore(BaseModel):
    score: float
    precisions: List[float]
    bp: float
    hyp_len: int
    ref_len: int
    matched: List[int] = Field(default_factory=list)
    totals: List[int] = Field(default_factory=list)


class Scene(BaseModel):
    scene_id: int
    agent: int
    attribute: int
    action: int
    object: Optional[int] = None
    location: int

    def slots(self) -> Dict[str, Optional[int]]:
        return {
            "agent": self.agent,
            "attribute": self.attribute,
            "action": self.action,
            "object": self.object,
            "location": self.location,
        }


class Utterance(BaseModel):
    scene_id: int
    language: str
    tokens: List[int]
    template_id: int


class AudioFeatures(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scene_id: int
    frames: np.ndarray
    durations: List[int] = Field(default_factory=list)
    frame_rate: int = 50


class CaptionerOracle(BaseModel):
    tier: Tier = "tier_A"
    p_confuse: float = Field(default=TIER_CONFUSION["tier_A"], description="Per-slot misread probability")
    strategy: OracleStrategy = "diverse_templates"
    temperature: float = Field(default=1.5, description="Sampling temperature of the sampled strategy")
    diversity_penalty: float = Field(default=3.0, description="Hamming penalty of the diverse-templates strategy")

    @classmethod
    def from_tier(cls, tier: str, strategy: str = "diverse_templates") -> "CaptionerOracle":
        return cls(tier=tier, p_confuse=TIER_CONFUSION[tier], strategy=strategy)


class CorpusConfig(BaseModel):
    n_train: int = 2000
    n_dev: int = 250
    n_test: int = 250
    mode: Mode = "translation"
    k_captions: int = 5
    n_references: int = 5
    d_audio: int = 48
    noise_sigma: float = 0.3
    frame_rate: int = 50
    oracle: CaptionerOracle = Field(default_factory=CaptionerOracle)
    collapse_templates: bool = Field(default=False, description="Realize every template identically")

    @property
    def utterances_per_scene(self) -> int:
        return 5 if self.mode == "paraphrase" else 1


class DatasetItem(BaseModel):
    item_id: str
    split: str
    scene: Scene
    language: str
    tokens: List[int]
    template_id: int
    captions: List[List[int]] = Field(default_factory=list)
    references: List[List[int]] = Field(default_factory=list)
    audio_path: str = ""

    @property
    def own_reference(self) -> Optional[int]:
        return self.template_id if self.template_id < len(self.references) else None


class TrainConfig(BaseModel):
    lr_max: float = 1e-4
    warmup_steps: int = 200
    epochs: int = 50
    batch_size: int = 16
    weight_decay: float = 0.01
    seed: int = 0
    mode: Mode = "translation"
    init_checkpoint: Optional[str] = None
    grad_clip: float = 1.0
    selection: Literal["bleu", "loss"] = "bleu"
    targets: Literal["captions", "references"] = "captions"
    k_captions: Optional[int] = Field(default=None, description="Use only the first k captions per scene")
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class StepRecord(BaseModel):
    step: int
    lr: float
    loss: float


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    dev_metric: float


class TrainLog(BaseModel):
    criterion: Literal["bleu", "loss"] = "bleu"
    steps: List[StepRecord] = Field(default_factory=list)
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None


class CheckpointMeta(BaseModel):
    epoch: int = 0
    dev_metric: Optional[float] = None
    seed: int = 0
    mode: Optional[str] = None
    note: str = ""


class ReferenceProtocol(BaseModel):
    n: int
    include_input_rule: bool = True
    seed: int = 0


class ExperimentSpec(BaseModel):
    row: RowKind
    tier: Tier = "tier_A"
    strategy: Optional[OracleStrategy] = None
    repeats: int = 5


class CellResult(BaseModel):
    mean: float
    dispersion: float
    values: List[float] = Field(default_factory=list)


class ReportRow(BaseModel):
    label: str
    cells: Dict[int, Optional[CellResult]] = Field(default_factory=dict)


class SweepCell(BaseModel):
    tier: Tier
    strategy: OracleStrategy
    caption_bleu: float
    translation_bleu: float
    paraphrase_bleu: float


class DecodeRequest(BaseModel):
    frames: List[List[float]]
    strategy: Strategy = "greedy"
    beam_width: int = 5
    num_groups: int = 5
    diversity_penalty: float = 0.5
    temperature: float = 1.0
    num_return: int = 1
    seed: int = 0


class DecodedCaption(BaseModel):
    tokens: List[int]
    text: str
    log_prob: float
    group: Optional[int] = None


class BleuRequest(BaseModel):
    pairs: List[EvalPair]
    smoothing: Smoothing = "none"


class GenerationMeta(BaseModel):
    checkpoint: Optional[str] = None
    strategy: str
    elapsed_ms: Optional[int] = None
    extra: Dict[str, Any] = Field(default_factory=dict)
