"""HTTP service exposing the experiment runners.

``POST /v1/{kind}`` takes an experiment config and returns its result. Failures
return ``{"error": "config" | "numerical", "message": ...}`` with status 422
or 500 respectively.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import __version__
from .errors import ConfigError, RhcError
from .harness import experiments as E
from .harness import schemas as S

app = FastAPI(title="rhcsub", version=__version__)


def validation_message(errors) -> str:
    """One line per pydantic error, each prefixed by the dotted field path."""
    lines = []
    for err in errors:
        loc = [str(p) for p in err.get("loc", ()) if p != "body"]
        lines.append(f"{'.'.join(loc) or '<root>'}: {err.get('msg', 'invalid')}")
    return "; ".join(lines)


@app.exception_handler(RequestValidationError)
async def _invalid(request: Request, exc: RequestValidationError):
    return JSONResponse(status_code=422, content={"error": "config", "message": validation_message(exc.errors())})


@app.exception_handler(ConfigError)
async def _config(request: Request, exc: ConfigError):
    return JSONResponse(status_code=422, content={"error": "config", "message": str(exc)})


@app.exception_handler(RhcError)
async def _numerical(request: Request, exc: RhcError):
    return JSONResponse(
        status_code=500, content={"error": "numerical", "message": f"{type(exc).__name__}: {exc}"}
    )


@app.exception_handler(np.linalg.LinAlgError)
async def _linalg(request: Request, exc):
    return JSONResponse(status_code=500, content={"error": "numerical", "message": f"LinAlgError: {exc}"})


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.get("/v1/kinds")
def kinds():
    return sorted(S.CONFIG_TYPES)


@app.post("/v1/dare", response_model=S.DareResult)
def dare(cfg: S.DareConfig):
    return E.run_dare(cfg)


@app.post("/v1/synthesize", response_model=S.SynthesizeResult)
def synthesize(cfg: S.SynthesizeConfig):
    return E.run_synthesize(cfg)


@app.post("/v1/evaluate", response_model=S.EvaluateResult)
def evaluate(cfg: S.EvaluateConfig):
    return E.run_evaluate(cfg)


@app.post("/v1/bound", response_model=S.BoundResult)
def bound(cfg: S.BoundConfig):
    return E.run_bound(cfg)


@app.post("/v1/sweep", response_model=S.SweepResult)
def sweep(cfg: S.SweepConfig):
    return E.run_sweep(cfg)


@app.post("/v1/identify", response_model=S.IdentifyResult)
def identify(cfg: S.IdentifyConfig):
    return E.run_identify(cfg)


@app.post("/v1/adaptive", response_model=S.AdaptiveResult)
def adaptive(cfg: S.AdaptiveExperimentConfig):
    return E.run_adaptive_experiment(cfg)
