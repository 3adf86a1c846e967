from fastapi import APIRouter, HTTPException, Request
import asyncio
import hashlib
import logging
import threading
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from app.config import CHECKPOINT_PATH, CORPUS_DIR, DECODE_TIMEOUT, MAX_DECODE_LEN
from app.corpus.dataset import load_vocabulary
from app.corpus.grammar import Vocabulary
from app.decode.contexts import ModelContext
from app.decode.strategies import decode, strip_eos
from app.errors import DimensionError
from app.metrics.bleu import corpus_bleu
from app.model.checkpoint import load_checkpoint
from app.model.transformer import AudioToTextModel
from app.schemas import BleuRequest, BleuScore, DecodeConfig, DecodedCaption, DecodeRequest, GenerationMeta

logger = logging.getLogger(__name__)

router = APIRouter()


class ModelStore:
    """Loads the checkpoint (and vocabulary) on first use and keeps them."""

    def __init__(self, checkpoint_path: str = "", corpus_dir: str = "") -> None:
        self.checkpoint_path = checkpoint_path
        self.corpus_dir = corpus_dir
        self._model: Optional[AudioToTextModel] = None
        self._vocab: Optional[Vocabulary] = None
        self._tag: Optional[str] = None
        self._lock = threading.Lock()

    def reset(self, checkpoint_path: Optional[str] = None, corpus_dir: Optional[str] = None) -> None:
        with self._lock:
            if checkpoint_path is not None:
                self.checkpoint_path = checkpoint_path
            if corpus_dir is not None:
                self.corpus_dir = corpus_dir
            self._model = None
            self._vocab = None
            self._tag = None

    def model(self) -> AudioToTextModel:
        with self._lock:
            if self._model is None:
                if not self.checkpoint_path:
                    raise HTTPException(status_code=503, detail="No checkpoint configured (VGS_CHECKPOINT)")
                self._model = load_checkpoint(self.checkpoint_path).to_model()
                self._tag = hashlib.sha256(Path(self.checkpoint_path).read_bytes()).hexdigest()[:12]
                logger.info("model_loaded checkpoint=%s tag=%s", self.checkpoint_path, self._tag)
            return self._model

    def vocab(self) -> Optional[Vocabulary]:
        with self._lock:
            if self._vocab is None and self.corpus_dir:
                self._vocab = load_vocabulary(self.corpus_dir)
            return self._vocab

    @property
    def tag(self) -> Optional[str]:
        """Short sha256 of the loaded checkpoint file; None until loaded."""
        return self._tag

    def describe(self) -> Dict[str, Any]:
        return {
            "checkpoint": self.checkpoint_path or None,
            "corpus_dir": self.corpus_dir or None,
            "loaded": self._model is not None,
            "tag": self._tag,
        }


store = ModelStore(CHECKPOINT_PATH, CORPUS_DIR)


def _text(tokens: List[int], vocab: Optional[Vocabulary]) -> str:
    if vocab is None:
        return " ".join(str(t) for t in tokens)
    return " ".join(vocab.word_of(t) if 0 <= t < len(vocab) else f"<{t}>" for t in tokens)


def run_decode(req: DecodeRequest) -> List[DecodedCaption]:
    model = store.model()
    frames = np.asarray(req.frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.config.d_audio:
        raise DimensionError(f"frames must be T x {model.config.d_audio}, got shape {frames.shape}")
    config = DecodeConfig(
        strategy=req.strategy,
        beam_width=req.beam_width,
        num_groups=req.num_groups,
        diversity_penalty=req.diversity_penalty,
        temperature=req.temperature,
        num_return=req.num_return,
        seed=req.seed,
        max_len=min(MAX_DECODE_LEN, model.config.max_text_len),
    )
    ctx = ModelContext(model, frames)
    vocab = store.vocab()
    out: List[DecodedCaption] = []
    for h in decode(ctx, config):
        tokens = strip_eos(h.tokens, ctx.eos_id)
        out.append(DecodedCaption(tokens=tokens, text=_text(tokens, vocab), log_prob=h.log_prob, group=h.group))
    return out


@router.post("/decode")
async def decode_audio(req: DecodeRequest, request: Request) -> Dict[str, Any]:
    """Decode one utterance's audio features with the loaded checkpoint."""
    start = time.time()
    try:
        hyps = await asyncio.wait_for(asyncio.to_thread(run_decode, req), timeout=DECODE_TIMEOUT)
    except asyncio.TimeoutError:
        raise HTTPException(status_code=504, detail=f"decoding exceeded {DECODE_TIMEOUT:.0f}s") from None
    meta = GenerationMeta(
        checkpoint=store.checkpoint_path or None,
        strategy=req.strategy,
        elapsed_ms=int((time.time() - start) * 1000),
        extra={"request_id": getattr(request.state, "request_id", None), "frames": len(req.frames),
               "checkpoint_tag": store.tag},
    )
    logger.info("decode strategy=%s hypotheses=%d elapsed_ms=%s", req.strategy, len(hyps), meta.elapsed_ms)
    return {"hypotheses": [h.model_dump() for h in hyps], "_meta": meta.model_dump()}


@router.post("/bleu", response_model=BleuScore)
async def bleu(req: BleuRequest) -> BleuScore:
    return await asyncio.to_thread(corpus_bleu, req.pairs, req.smoothing)
