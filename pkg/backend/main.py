import json
import logging
import uuid
from contextlib import asynccontextmanager
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from fastapi import APIRouter, BackgroundTasks, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .core.config import load_run_config, settings
from .core.errors import AdaptedHillError
from .core.logger import setup_logging
from .models import DistributionSpec, PairedSample, Scenario, TheoryParams
from .services import asymptotics, montecarlo, reports

logger = logging.getLogger("API")


# --- 生命周期管理 ---
@asynccontextmanager
async def lifespan(app: FastAPI):
    setup_logging()
    logger.info(f"✅ {settings.PROJECT_NAME} 启动")
    yield


app = FastAPI(title=settings.PROJECT_NAME, lifespan=lifespan)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

router = APIRouter(prefix=settings.API_V1_STR)


class EstimateRequest(BaseModel):
    x: List[float]
    y: List[List[float]]              # n×(d−1)
    y_extra: List[List[float]] = []   # m×(d−1)
    k: int = 100
    k_plus: Optional[int] = None
    matched: Optional[bool] = None
    k_sweep: Optional[List[int]] = None  # [lo, hi]


class QuantileRequest(EstimateRequest):
    p: float


class TheoryRequest(BaseModel):
    gammas: List[float]
    nu2: float
    beta: float = 1.0
    r11: List[List[float]]
    r1b: Optional[List[List[float]]] = None


class SimulateRequest(BaseModel):
    dist: str = "logistic"
    d: int = 2
    s: float = 0.0
    r: Optional[float] = None
    theta: float = 0.3
    n: int = 1000
    m: int = 1000
    k: int = 100
    k_plus: Optional[int] = None
    replications: int = 10000
    seed: int = 20190101
    threads: int = settings.DEFAULT_THREADS


# 内存任务表: task_id -> {status, progress, data|message}
simulation_tasks: Dict[str, Dict] = {}


def _prune_tasks(limit: Optional[int] = None):
    """已结束 (completed / failed) 的任务超过上限时，按提交顺序丢弃最早的"""
    limit = settings.SIMULATION_TASK_LIMIT if limit is None else limit
    finished = [tid for tid, task in list(simulation_tasks.items()) if task["status"] != "running"]
    for tid in finished[:max(0, len(finished) - limit)]:
        simulation_tasks.pop(tid, None)


def _sample(req: EstimateRequest) -> PairedSample:
    width = len(req.y[0]) if req.y else 1
    y_extra = np.asarray(req.y_extra, dtype=float).reshape(-1, width) if req.y_extra else np.empty((0, width))
    return PairedSample(x=req.x, y=req.y, y_extra=y_extra)


def _config(req: EstimateRequest, p: Optional[float] = None):
    matched = req.matched
    if matched is None and req.k_plus is not None:
        matched = False
    return load_run_config(K=req.k, K_PLUS=req.k_plus, MATCHED=matched,
                           K_SWEEP=tuple(req.k_sweep) if req.k_sweep else None, P=p)


def _records(df: pd.DataFrame) -> List[Dict]:
    # NaN 转 null，numpy 标量转原生类型
    return json.loads(df.to_json(orient="records", double_precision=15))


def _clean(values: Dict[str, float]) -> Dict[str, Optional[float]]:
    return {k: (v if np.isfinite(v) else None) for k, v in values.items()}


@router.post("/estimate")
def estimate(req: EstimateRequest):
    try:
        report = reports.estimate_sweep(_sample(req), _config(req))
        return {"status": "success", "rows": _records(report.rows),
                "averages": _clean(report.averages), "warnings": report.warnings}
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception("estimate 失败")
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/quantile")
def quantile(req: QuantileRequest):
    try:
        report = reports.quantile_sweep(_sample(req), _config(req, req.p))
        return {"status": "success", "rows": _records(report.rows),
                "averages": _clean(report.averages), "warnings": report.warnings}
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.exception("quantile 失败")
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/theory/variance-reduction")
def theory_variance_reduction(req: TheoryRequest):
    try:
        r1b = req.r1b if req.r1b is not None else req.r11
        params = TheoryParams(gammas=req.gammas, nu2=req.nu2, beta=req.beta, r11=req.r11, r1b=r1b)
        return {
            "sigma2": asymptotics.asymp_variance_multivariate(params),
            "sigma2_quadratic_form": asymptotics.asymp_variance_quadratic_form(params),
            "reduction": asymptotics.variance_reduction(params),
        }
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@router.post("/simulate")
def simulate_async(req: SimulateRequest, background_tasks: BackgroundTasks):
    """
    提交模拟任务，立即返回 Task ID
    参数在这里就校验，错误直接 400
    """
    try:
        dist = DistributionSpec(req.dist, req.d, s=req.s, r=req.r, theta=req.theta)
        sc = Scenario(distribution=dist, n=req.n, m=req.m, k=req.k, k_plus=req.k_plus,
                      replications=req.replications, master_seed=req.seed)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))

    _prune_tasks()
    task_id = str(uuid.uuid4())
    simulation_tasks[task_id] = {"status": "running", "progress": 0, "message": "初始化中..."}
    background_tasks.add_task(simulation_worker, task_id, sc, req.threads)
    return {"status": "success", "task_id": task_id}


@router.get("/simulate/status/{task_id}")
def get_simulation_status(task_id: str):
    task = simulation_tasks.get(task_id)
    if not task:
        raise HTTPException(status_code=404, detail="Task not found")
    return task


def simulation_worker(task_id: str, sc: Scenario, threads: int):
    def _progress(done: int, total: int):
        simulation_tasks[task_id]["progress"] = int(100 * done / total)

    try:
        result = montecarlo.run_scenario(sc, threads, progress=_progress, keep_estimates=False)
        simulation_tasks[task_id].update({
            "status": "completed",
            "progress": 100,
            "data": result.to_dict(),
            "message": "模拟完成",
        })
    except AdaptedHillError as e:
        simulation_tasks[task_id].update({"status": "failed", "message": str(e)})
    except Exception as e:
        logger.exception(f"模拟任务 {task_id} 异常")
        simulation_tasks[task_id].update({"status": "failed", "message": f"系统错误: {str(e)}"})


app.include_router(router)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("backend.main:app", host=settings.API_HOST, port=settings.API_PORT, reload=settings.DEBUG)
