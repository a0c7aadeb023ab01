#!/usr/bin/env python
"""
FastAPI Server for the Pseudo-Stereo toolkit
Exposes the pure geometry, loss and self-check operations over HTTP
"""
import logging
from datetime import datetime
from typing import List

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from core_types import StereoCalib
from errors import PseudoStereoError
from geometry import depth_levels, depth_to_disparity, reprojection_offsets
from selfcheck import SelfCheckReport, run_selfcheck
from settings import configure_logging, get_settings
from stereo_volume import combined_loss
from synthetic import default_calib

logger = logging.getLogger(__name__)

API_VERSION = "1.0.0"

# FastAPI app
app = FastAPI(
    title="Pseudo-Stereo Toolkit API",
    description="Virtual right view generation, stereo volume geometry and invariant self-checks",
    version=API_VERSION
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.on_event("startup")
async def startup_event():
    """Configure logging from the environment"""
    configure_logging()
    logger.info("[OK] Pseudo-Stereo API ready")


# Request/Response models
class DisparityRequest(BaseModel):
    depths: List[float] = Field(..., min_length=1, description="Depths in meters")
    calib: StereoCalib


class DisparityResponse(BaseModel):
    success: bool
    disparities: List[float]


class LevelsRequest(BaseModel):
    calib: StereoCalib


class LevelsResponse(BaseModel):
    success: bool
    depths: List[float]
    offsets: List[float]


class LossRequest(BaseModel):
    loss_det: float
    loss_depth: float
    loss_kd: float
    lambda_det: float = 1.0
    lambda_depth: float = 1.0
    lambda_kd: float = 1.0
    strict: bool = Field(default=False, description="Require lambda_depth to be 0 or 1")


class LossResponse(BaseModel):
    success: bool
    total: float


class SelfCheckRequest(BaseModel):
    seed: int = Field(default=0, ge=0)


def _bad_request(e: PseudoStereoError) -> HTTPException:
    logger.warning(f"Rejected request: {e}")
    return HTTPException(status_code=400, detail=str(e))


# ============================================================================
# API Endpoints
# ============================================================================

@app.get("/")
async def root():
    """API info"""
    return {
        "name": "Pseudo-Stereo Toolkit API",
        "version": API_VERSION,
        "status": "running",
        "port": get_settings().port,
        "endpoints": {
            "health": "/health (GET)",
            "docs": "/docs (Swagger UI)",
            "disparity": "/geometry/disparity (POST) - depth to disparity",
            "levels": "/geometry/levels (POST) - candidate depths and reprojection offsets",
            "combined_loss": "/losses/combined (POST) - weighted training loss",
            "selfcheck": "/selfcheck (POST) - invariant suite for a seed (slow)"
        }
    }


@app.get("/health")
async def health_check():
    """Health check that exercises the geometry path"""
    try:
        calib = default_calib()
        offsets = reprojection_offsets(calib)
        return {
            "status": "healthy",
            "service": "pseudo_stereo",
            "depth_levels": int(offsets.size),
            "timestamp": datetime.now().isoformat()
        }
    except Exception as e:
        return {
            "status": "unhealthy",
            "service": "pseudo_stereo",
            "error": str(e),
            "timestamp": datetime.now().isoformat()
        }


@app.post("/geometry/disparity", response_model=DisparityResponse)
async def disparity(request: DisparityRequest):
    """
    Convert depths to disparities with d = f*b/z

    Example:
    ```
    {
        "depths": [10.0, 20.0],
        "calib": {"focal_px": 400, "baseline_m": 1, "stride": 4,
                  "z_min_m": 10, "depth_interval_m": 1, "num_depth_levels": 8}
    }
    ```
    """
    try:
        values = [depth_to_disparity(z, request.calib) for z in request.depths]
        return DisparityResponse(success=True, disparities=values)
    except PseudoStereoError as e:
        raise _bad_request(e)


@app.post("/geometry/levels", response_model=LevelsResponse)
async def levels(request: LevelsRequest):
    """Candidate depths z(w) and per-level reprojection offsets"""
    try:
        return LevelsResponse(
            success=True,
            depths=depth_levels(request.calib).tolist(),
            offsets=reprojection_offsets(request.calib).tolist()
        )
    except PseudoStereoError as e:
        raise _bad_request(e)


@app.post("/losses/combined", response_model=LossResponse)
async def losses_combined(request: LossRequest):
    """Weighted sum of detection, depth and distillation losses"""
    try:
        total = combined_loss(
            request.loss_det,
            request.loss_depth,
            request.loss_kd,
            lambda_det=request.lambda_det,
            lambda_depth=request.lambda_depth,
            lambda_kd=request.lambda_kd,
            strict=request.strict
        )
        return LossResponse(success=True, total=total)
    except PseudoStereoError as e:
        raise _bad_request(e)


@app.post("/selfcheck", response_model=SelfCheckReport)
def selfcheck(request: SelfCheckRequest):
    """
    Run the invariant suite on data drawn from `seed`

    Takes a few seconds; runs in the worker thread pool.
    """
    try:
        return run_selfcheck(seed=request.seed)
    except PseudoStereoError as e:
        raise _bad_request(e)
    except Exception as e:
        logger.exception("Self-check crashed")
        raise HTTPException(
            status_code=500,
            detail=f"Self-check error: {str(e)}"
        )


# ============================================================================
# Main
# ============================================================================

if __name__ == "__main__":
    settings = get_settings()
    configure_logging()
    print("="*60)
    print("PSEUDO-STEREO TOOLKIT API")
    print("="*60)
    print(f"Starting on {settings.host}:{settings.port}")
    print(f"API Documentation: http://localhost:{settings.port}/docs")
    print("="*60)

    uvicorn.run(
        app,
        host=settings.host,
        port=settings.port,
        log_level=settings.log_level.lower()
    )
