"""HTTP + WebSocket service for interactive saliency inspection.

A session binds one model to one image pair and retains the forward
tape, so every hover costs a single backward pass. Hover traffic runs
over a WebSocket with latest-wins coalescing: when queries arrive faster
than they can be answered, only the newest pending pixel is computed,
and sequence numbers on outgoing frames are strictly increasing.

Guidance precomputation runs as a cancellable background job per
session; its result feeds the guidance/scatter exports and endpoints.
"""

from __future__ import annotations

import asyncio
import base64
import io
import statistics
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket
from fastapi.responses import Response
from PIL import Image

from .autodiff import ImageShape, PixelIndexError
from .checkpoint import load_checkpoint
from .data import ImagePair, SyntheticSpec, load_pairs, synth_pairs
from .models import MODEL_NAMES, FusionModel, build_model
from .saliency import (
    NEIGHBORHOOD_RADIUS,
    DisplayConfig,
    ForwardPass,
    GuidanceCancelled,
    GuidanceImage,
    display_normalize_pair,
    gamma_correct,
    guidance_pair,
    guidance_rgb,
    neighborhood_indices,
    scatter_csv,
    scatter_data,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# -------------------------------------------------------------- configuration

@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8077
    data_dir: str | None = None
    model_seed: int = 0
    guidance_block: int = 64
    synthetic_resolution: int = 64
    synthetic_count: int = 4
    synthetic_seed: int = 0
    checkpoints: dict = field(default_factory=dict)


_SERVICE_KEYS = {"host", "port", "data_dir", "model_seed", "guidance_block"}
_SYNTH_KEYS = {"resolution", "count", "seed"}


def load_config(path: str | Path | None = None, env: dict | None = None) -> ServiceConfig:
    """Build config from an optional TOML file plus environment overrides.

    Recognized file sections: [service], [synthetic], [checkpoints].
    FUSELENS_PORT and FUSELENS_DATA_DIR override the file.
    """
    import os

    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(raw) - {"service", "synthetic", "checkpoints"}
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        svc = raw.get("service", {})
        bad = set(svc) - _SERVICE_KEYS
        if bad:
            raise ValueError(f"unknown [service] keys: {sorted(bad)}")
        values.update(svc)
        synth = raw.get("synthetic", {})
        bad = set(synth) - _SYNTH_KEYS
        if bad:
            raise ValueError(f"unknown [synthetic] keys: {sorted(bad)}")
        for key, target in (("resolution", "synthetic_resolution"),
                            ("count", "synthetic_count"), ("seed", "synthetic_seed")):
            if key in synth:
                values[target] = synth[key]
        ckpts = raw.get("checkpoints", {})
        unknown_models = set(ckpts) - set(MODEL_NAMES)
        if unknown_models:
            raise ValueError(f"unknown model names in [checkpoints]: {sorted(unknown_models)}")
        values["checkpoints"] = dict(ckpts)
    if env.get("FUSELENS_PORT"):
        values["port"] = int(env["FUSELENS_PORT"])
    if env.get("FUSELENS_DATA_DIR"):
        values["data_dir"] = env["FUSELENS_DATA_DIR"]
    return ServiceConfig(**values)


# -------------------------------------------------------------------- payloads

def _encode_gray(arr01: np.ndarray) -> dict:
    """8-bit base64 buffer plus extents for a [0,1] grayscale image."""
    quant = np.round(np.asarray(arr01) * 255.0).astype(np.uint8)
    h, w = quant.shape
    return {"b64": base64.b64encode(quant.tobytes()).decode("ascii"),
            "width": w, "height": h}


def _gradient_images(v1: np.ndarray, v2: np.ndarray, gamma: float) -> dict:
    """Jointly normalized pair; each side carries the normalized buffer,
    its gamma-corrected display variant, and the shared magnitude range."""
    n1, n2 = display_normalize_pair(v1, v2)
    lo = float(min(np.abs(v1).min(), np.abs(v2).min()))
    hi = float(max(np.abs(v1).max(), np.abs(v2).max()))
    out = {}
    for key, norm in (("x1", n1), ("x2", n2)):
        entry = _encode_gray(norm)
        entry["b64_display"] = _encode_gray(gamma_correct(norm, gamma))["b64"]
        entry["b64_norm"] = entry.pop("b64")
        entry["min"] = lo
        entry["max"] = hi
        out[key] = entry
    return out


def _png_bytes(arr: np.ndarray, rgb: bool = False) -> bytes:
    quant = np.round(np.asarray(arr) * 255.0).astype(np.uint8)
    img = Image.fromarray(quant, mode="RGB" if rgb else "L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ----------------------------------------------------------------------- state

@dataclass
class Session:
    id: str
    model_name: str
    pair_id: str
    fp: ForwardPass
    display: DisplayConfig = field(default_factory=DisplayConfig)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    seq: int = 0
    last_pixel: int = 1
    guidance: tuple[GuidanceImage, GuidanceImage] | None = None
    job_id: str | None = None


@dataclass
class Job:
    id: str
    session_id: str
    total: int
    status: str = "pending"  # pending | running | done | cancelled | failed
    done: int = 0
    error: str = ""
    cancel: threading.Event = field(default_factory=threading.Event)


class ServiceState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.pairs = self._load_pairs(config)
        self.models: dict[str, FusionModel] = {}
        self.forwards: dict[tuple[str, str], ForwardPass] = {}
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}
        self.executor = ThreadPoolExecutor(max_workers=2)
        self._lock = threading.Lock()
        self._session_n = 0
        self._job_n = 0

    @staticmethod
    def _load_pairs(config: ServiceConfig) -> dict[str, ImagePair]:
        if config.data_dir is not None:
            manifest = Path(config.data_dir) / "manifest.txt"
            if not manifest.exists():
                raise FileNotFoundError(f"no manifest.txt in data dir {config.data_dir}")
            pairs = load_pairs(manifest)
        else:
            spec = SyntheticSpec(resolution=config.synthetic_resolution,
                                 rng_seed=config.synthetic_seed)
            pairs = synth_pairs(spec, config.synthetic_count)
        return {p.id: p for p in pairs}

    def model(self, name: str) -> FusionModel:
        with self._lock:
            got = self.models.get(name)
            if got is None:
                ckpt = self.config.checkpoints.get(name)
                if ckpt:
                    got, _ = load_checkpoint(ckpt)
                    if got.name != name:
                        raise ValueError(f"checkpoint {ckpt} holds {got.name}, not {name}")
                else:
                    got = build_model(name, seed=self.config.model_seed)
                self.models[name] = got
        return got

    def forward(self, model_name: str, pair_id: str) -> ForwardPass:
        key = (model_name, pair_id)
        with self._lock:
            got = self.forwards.get(key)
        if got is not None:
            return got
        model = self.model(model_name)
        pair = self.pairs[pair_id]
        fp = ForwardPass(model, pair.x1, pair.x2)
        with self._lock:
            # keep the first one if a concurrent request won the race
            got = self.forwards.setdefault(key, fp)
        return got

    def new_session(self, model_name: str, pair_id: str) -> Session:
        fp = self.forward(model_name, pair_id)
        with self._lock:
            self._session_n += 1
            sid = f"s{self._session_n}"
        shape = fp.shape
        center = shape.to_index(shape.height // 2, shape.width // 2)
        session = Session(id=sid, model_name=model_name, pair_id=pair_id, fp=fp,
                          last_pixel=center)
        self.sessions[sid] = session
        return session

    def new_job(self, session: Session) -> Job:
        with self._lock:
            self._job_n += 1
            jid = f"j{self._job_n}"
        job = Job(id=jid, session_id=session.id, total=session.fp.shape.n)
        self.jobs[jid] = job
        session.job_id = jid
        return job

    # ------------------------------------------------------------ compute

    def hover_payload(self, session: Session, pixel: int) -> dict:
        """One backward pass; everything the UI needs to paint one frame."""
        j1, j2 = session.fp.jacobian_pair(pixel)
        shape = session.fp.shape
        r, c = shape.to_rc(pixel)
        session.last_pixel = pixel
        return {
            "pixel": pixel,
            "gamma_corr1": session.display.gamma_corr1,
            "images": _gradient_images(j1.values, j2.values,
                                       session.display.gamma_corr1),
            "raw": {"x1": float(j1.values[r, c]), "x2": float(j2.values[r, c])},
            "highlight": neighborhood_indices(shape, pixel, NEIGHBORHOOD_RADIUS),
        }

    def run_guidance_job(self, job: Job, session: Session):
        job.status = "running"

        def progress(done, total):
            job.done = done

        try:
            pair = self.pairs[session.pair_id]
            g1, g2 = guidance_pair(self.model(session.model_name), pair.x1, pair.x2,
                                   block_size=self.config.guidance_block,
                                   progress=progress,
                                   should_stop=job.cancel.is_set)
        except GuidanceCancelled:
            job.status = "cancelled"
        except Exception as e:  # surfaced through GET /jobs/{id}
            job.status = "failed"
            job.error = str(e)
        else:
            session.guidance = (g1, g2)
            job.done = job.total
            job.status = "done"

    def bench(self, session: Session, hovers: int) -> dict:
        rng = np.random.default_rng(0)
        n = session.fp.shape.n
        times = []
        for _ in range(hovers):
            pixel = int(rng.integers(1, n + 1))
            t0 = time.perf_counter()
            session.fp.jacobian_pair(pixel)
            times.append(time.perf_counter() - t0)
        mean = sum(times) / len(times)
        return {
            "hovers": hovers,
            "mean_seconds": mean,
            "median_seconds": statistics.median(times),
            "max_seconds": max(times),
            "fps": (1.0 / mean) if mean > 0 else float("inf"),
        }


# ------------------------------------------------------------------ app factory

def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig())

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        state.executor.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="fuselens", lifespan=lifespan)
    app.state.service = state

    def get_session(sid: str) -> Session:
        session = state.sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return session

    @app.get("/models")
    def list_models():
        return {"models": list(MODEL_NAMES)}

    @app.get("/pairs")
    def list_pairs():
        return {"pairs": sorted(state.pairs)}

    @app.post("/sessions")
    def create_session(body: dict):
        model_name = body.get("model")
        pair_id = body.get("pair")
        if model_name not in MODEL_NAMES:
            raise HTTPException(status_code=404, detail=f"unknown model {model_name!r}")
        if pair_id not in state.pairs:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        session = state.new_session(model_name, pair_id)
        pair = state.pairs[pair_id]
        shape = session.fp.shape
        return {
            "session": session.id,
            "model": model_name,
            "pair": pair_id,
            "width": shape.width,
            "height": shape.height,
            "n": shape.n,
            "rf_radius": session.fp.model.rf_radius,
            "images": {
                "x1": _encode_gray(pair.x1),
                "x2": _encode_gray(pair.x2),
                "fused": _encode_gray(session.fp.fused),
            },
        }

    @app.post("/sessions/{sid}/display")
    def set_display(sid: str, body: dict):
        session = get_session(sid)
        current = session.display
        try:
            session.display = DisplayConfig(
                gamma_corr1=float(body.get("gamma_corr1", current.gamma_corr1)),
                gamma_corr2=float(body.get("gamma_corr2", current.gamma_corr2)),
            )
        except (TypeError, ValueError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        return {"ok": True,
                "gamma_corr1": session.display.gamma_corr1,
                "gamma_corr2": session.display.gamma_corr2}

    @app.websocket("/sessions/{sid}/hover")
    async def hover_stream(ws: WebSocket, sid: str):
        await ws.accept()
        session = state.sessions.get(sid)
        if session is None:
            await ws.close(code=4404, reason=f"unknown session {sid!r}")
            return

        slot: dict = {}
        wake = asyncio.Event()
        closed = False

        async def reader():
            nonlocal closed
            try:
                while True:
                    slot["msg"] = await ws.receive_json()
                    wake.set()
            except Exception:
                closed = True
                wake.set()

        reader_task = asyncio.create_task(reader())
        try:
            while True:
                await wake.wait()
                wake.clear()
                if closed:
                    break
                msg = slot.pop("msg", None)
                if msg is None:
                    continue
                pixel = msg.get("pixel")
                if not isinstance(pixel, int) or isinstance(pixel, bool):
                    await ws.send_json({"error": "hover message needs integer 'pixel'"})
                    continue
                async with session.lock:
                    try:
                        payload = await asyncio.to_thread(
                            state.hover_payload, session, pixel)
                    except PixelIndexError as e:
                        await ws.send_json({"error": str(e), "pixel": pixel})
                        continue
                    session.seq += 1
                    payload["seq"] = session.seq
                    await ws.send_json(payload)
        finally:
            reader_task.cancel()

    @app.post("/sessions/{sid}/guidance")
    def start_guidance(sid: str):
        session = get_session(sid)
        if session.job_id is not None:
            job = state.jobs[session.job_id]
            if job.status in ("pending", "running", "done"):
                return {"job": job.id, "status": job.status}
        job = state.new_job(session)
        state.executor.submit(state.run_guidance_job, job, session)
        return {"job": job.id, "status": job.status}

    def get_job(jid: str) -> Job:
        job = state.jobs.get(jid)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job {jid!r}")
        return job

    @app.get("/jobs/{jid}")
    def job_status(jid: str):
        job = get_job(jid)
        out = {"job": job.id, "session": job.session_id, "status": job.status,
               "progress": {"done": job.done, "total": job.total}}
        if job.error:
            out["error"] = job.error
        return out

    @app.delete("/jobs/{jid}")
    def cancel_job(jid: str):
        job = get_job(jid)
        job.cancel.set()
        return {"job": job.id, "status": job.status, "cancel_requested": True}

    @app.get("/sessions/{sid}/guidance")
    def get_guidance(sid: str):
        session = get_session(sid)
        if session.guidance is None:
            status = "absent"
            if session.job_id is not None:
                status = state.jobs[session.job_id].status
            return {"status": status}
        g1, g2 = session.guidance
        return {
            "status": "done",
            "gamma_corr2": session.display.gamma_corr2,
            "images": _gradient_images(g1.values, g2.values,
                                       session.display.gamma_corr2),
            "fused": _encode_gray(session.fp.fused),
        }

    def _guidance_or_409(session: Session) -> tuple[GuidanceImage, GuidanceImage]:
        if session.guidance is None:
            raise HTTPException(status_code=409,
                                detail="guidance not computed; start a guidance job first")
        return session.guidance

    def _export(session: Session, artifact: str, pixel: int | None) -> Response:
        pair = state.pairs[session.pair_id]
        d = session.display
        if artifact == "x1.png":
            return Response(_png_bytes(pair.x1), media_type="image/png")
        if artifact == "x2.png":
            return Response(_png_bytes(pair.x2), media_type="image/png")
        if artifact == "fused.png":
            return Response(_png_bytes(session.fp.fused), media_type="image/png")
        if artifact in ("jacobian_x1.png", "jacobian_x2.png"):
            i = pixel if pixel is not None else session.last_pixel
            j1, j2 = session.fp.jacobian_pair(i)
            n1, n2 = display_normalize_pair(j1.values, j2.values)
            chosen = n1 if artifact == "jacobian_x1.png" else n2
            return Response(_png_bytes(gamma_correct(chosen, d.gamma_corr1)),
                            media_type="image/png")
        if artifact in ("guidance_x1.png", "guidance_x2.png"):
            g1, g2 = _guidance_or_409(session)
            n1, n2 = display_normalize_pair(g1.values, g2.values)
            chosen = n1 if artifact == "guidance_x1.png" else n2
            return Response(_png_bytes(gamma_correct(chosen, d.gamma_corr2)),
                            media_type="image/png")
        if artifact == "guidance_rgb.png":
            g1, g2 = _guidance_or_409(session)
            rgb = guidance_rgb(g1, g2, session.fp.fused)
            composite = np.stack([gamma_correct(rgb.red, d.gamma_corr2),
                                  gamma_correct(rgb.green, d.gamma_corr2),
                                  rgb.blue], axis=-1)
            return Response(_png_bytes(composite, rgb=True), media_type="image/png")
        if artifact == "scatter.csv":
            g1, g2 = _guidance_or_409(session)
            i = pixel if pixel is not None else session.last_pixel
            data = scatter_data(g1, g2, i)
            return Response(scatter_csv(data), media_type="text/csv")
        raise HTTPException(status_code=404, detail=f"unknown artifact {artifact!r}")

    @app.get("/sessions/{sid}/export/{artifact}")
    async def export_artifact(sid: str, artifact: str, pixel: int | None = None):
        session = get_session(sid)
        if pixel is not None:
            try:
                session.fp.shape.check_index(pixel)
            except PixelIndexError as e:
                raise HTTPException(status_code=400, detail=str(e))
        async with session.lock:
            return await asyncio.to_thread(_export, session, artifact, pixel)

    @app.post("/sessions/{sid}/bench")
    async def bench(sid: str, body: dict | None = None):
        session = get_session(sid)
        hovers = 100
        if body and "hovers" in body:
            hovers = int(body["hovers"])
            if hovers < 1:
                raise HTTPException(status_code=400, detail="hovers must be >= 1")
        async with session.lock:
            return await asyncio.to_thread(state.bench, session, hovers)

    return app


def serve(config: ServiceConfig):
    """Run the service until interrupted (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
