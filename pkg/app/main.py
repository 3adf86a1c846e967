import os
import uuid
import time
import platform
import logging

from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from starlette.middleware.base import BaseHTTPMiddleware

from app.config import API_KEY, MAX_DECODE_LEN, REQUIRE_API_KEY
from app.errors import VGSError
from app.routers import inference as inference_router
from app.utils.diagnostics import DiagnosticContext

app: FastAPI = FastAPI(title="VGS Speech Translation API", version="0.1.0")

logger = logging.getLogger("uvicorn.error")


class RequestContextMiddleware(BaseHTTPMiddleware):
    """Request id on every response; decode responses also name the checkpoint that served them."""

    async def dispatch(self, request: Request, call_next):
        rid = request.headers.get("x-request-id") or str(uuid.uuid4())
        request.state.request_id = rid
        start = time.time()
        try:
            resp = await call_next(request)
        except Exception as e:  # pragma: no cover
            logger.exception("Unhandled error [%s] %s", rid, request.url.path)
            resp = JSONResponse(
                status_code=500,
                content={"ok": False, "error": "internal_error", "detail": str(e)[:400], "request_id": rid},
            )
        resp.headers["x-request-id"] = rid
        tag = inference_router.store.tag
        if request.url.path == "/decode" and tag:
            resp.headers["x-checkpoint-tag"] = tag
        dur = int((time.time() - start) * 1000)
        logger.info("%s %s %s status=%s %sms checkpoint=%s",
                    rid, request.method, request.url.path, resp.status_code, dur, tag or "-")
        return resp


app.add_middleware(RequestContextMiddleware)


@app.exception_handler(VGSError)
async def vgs_error_handler(request: Request, exc: VGSError) -> JSONResponse:
    rid = getattr(request.state, "request_id", None)
    logger.info("%s rejected %s: %s", rid, exc.__class__.__name__, exc)
    return JSONResponse(
        status_code=422,
        content={
            "ok": False,
            "error": exc.__class__.__name__,
            "detail": str(exc)[:400],
            "request_id": rid,
        },
    )


def require_api_key(x_api_key: str | None = Header(default=None, alias="x-api-key")) -> None:
    if not REQUIRE_API_KEY:
        return
    if not API_KEY or not x_api_key or x_api_key != API_KEY:
        raise HTTPException(status_code=401, detail="Invalid or missing API key")


deps = [Depends(require_api_key)] if REQUIRE_API_KEY else []

app.include_router(inference_router.router, dependencies=deps)


@app.get("/diag/health")
def diag_health(request: Request):
    env = DiagnosticContext().environment
    return {
        "ok": True,
        "request_id": request.state.request_id,
        "runtime": {"python": platform.python_version()},
        "versions": {k: v for k, v in env.items() if k.endswith("_version")},
        "model": inference_router.store.describe(),
        "env": {
            "VGS_MAX_DECODE_LEN": MAX_DECODE_LEN,
            "VGS_REQUIRE_API_KEY": REQUIRE_API_KEY,
        },
        "version": os.getenv("GIT_COMMIT", "unknown"),
    }


@app.get("/health")
def health():
    return {"status": "ok"}
