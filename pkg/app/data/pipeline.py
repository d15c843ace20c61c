"""
Оркестрация пайплайна: fit(HR) -> fit(LR) -> refine -> adapt -> render

Каждый этап пишет свои файлы в каталог результатов и запись в
<out>/.cache/<этап>.json с SHA-256 хешем входов и выходов. Повторный
запуск с теми же входами помечает этап как cached.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from loguru import logger

from app.body.model import BodyModel, load_body_model, pose_body
from app.core.config import settings
from app.core.exceptions import DataIOError, HumanSRError, InvalidArgumentError, StageError
from app.data.imageio import read_ppm, upsample_nearest, write_ppm
from app.data.manifest import ProjectManifest
from app.fitting.fitter import FitMode, fit_frames
from app.fitting.observations import (
    FrameObservation,
    PoseSequence,
    frame_index,
    list_frames,
    load_frame,
    load_poses,
    save_poses,
)
from app.mesh.contour import (
    Contour,
    extract_mask_contour,
    extract_model_contour,
    match_contours,
    resample_indices,
)
from app.mesh.deform import deform_template
from app.mesh.keyframe import select_keyframe
from app.mesh.texture import (
    DeformedTemplate,
    bake_vertex_colors,
    load_deformed_template,
    save_deformed_template,
    to_zero_shape,
    unpose_template,
)
from app.motion.metrics import jitter
from app.motion.refine import RefinementReport, refine_pose_sequence, save_refine_report
from app.render.compose import composite
from app.render.rasterizer import rasterize_mesh

STAGES = ("fit_hr", "fit_lr", "refine", "adapt", "render")
OUTPUT_PATTERN = "out_{:06d}.ppm"


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def directory_digest(directory: Path) -> Dict[str, str]:
    return {p.name: file_digest(p) for p in sorted(directory.iterdir()) if p.is_file()}


@dataclass
class StageResult:
    """Итог этапа для run_report.json"""

    name: str
    status: str  # done | cached
    seconds: float
    details: Dict[str, Any] = field(default_factory=dict)


class StageCache:
    """Записи <out>/.cache/<этап>.json: хеш входов, хеши выходов, сводка"""

    def __init__(self, out_dir: Path, enabled: bool = True):
        self.directory = out_dir / ".cache"
        self.enabled = enabled

    @staticmethod
    def key(inputs: Dict[str, Any]) -> str:
        payload = json.dumps(inputs, sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _record_path(self, stage: str) -> Path:
        return self.directory / f"{stage}.json"

    def lookup(self, stage: str, key: str) -> Optional[Dict[str, Any]]:
        """Запись этапа, если ключ совпал и выходы не изменились"""
        if not self.enabled:
            return None
        path = self._record_path(stage)
        if not path.is_file():
            return None
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            logger.warning(f"⚠️ Запись кэша {path.name} повреждена, этап будет пересчитан")
            return None
        if record.get("key") != key:
            return None
        for name, digest in record.get("outputs", {}).items():
            output = self.directory.parent / name
            if not output.is_file() or file_digest(output) != digest:
                return None
        return record

    def store(self, stage: str, key: str, outputs: List[Path], details: Dict[str, Any]) -> None:
        root = self.directory.parent
        record = {
            "key": key,
            "outputs": {str(p.relative_to(root)): file_digest(p) for p in outputs},
            "details": details,
        }
        self.directory.mkdir(parents=True, exist_ok=True)
        with open(self._record_path(stage), "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True)


def load_observations(
    directory: Path, timestamps: Optional[List[float]] = None
) -> Tuple[List[int], List[FrameObservation]]:
    """Кадры каталога по порядку номеров; ошибка кадра несёт его номер"""
    numbers, observations = [], []
    for path in list_frames(str(directory)):
        number = frame_index(path)
        try:
            observations.append(load_frame(str(path)))
        except HumanSRError as e:
            e.frame = number
            raise
        numbers.append(number)
    if timestamps is not None:
        for obs, timestamp in zip(observations, timestamps):
            obs.timestamp = float(timestamp)
    return numbers, observations


def _total(sequence: PoseSequence) -> float:
    return float(sum(e["total"] for e in sequence.energies))


class Pipeline:
    """Этапы пайплайна над одним манифестом"""

    def __init__(
        self,
        manifest: ProjectManifest,
        mode: FitMode = "batch",
        use_cache: Optional[bool] = None,
    ):
        self.manifest = manifest
        self.mode = mode
        self.out = Path(manifest.output)
        self.cache = StageCache(self.out, settings.STAGE_CACHE if use_cache is None else use_cache)
        self._model: Optional[BodyModel] = None
        self._digests: Dict[str, Dict[str, str]] = {}

    @property
    def model(self) -> BodyModel:
        if self._model is None:
            self._model = load_body_model(str(self.manifest.model))
        return self._model

    def _digest(self, directory: Path) -> Dict[str, str]:
        key = str(directory)
        if key not in self._digests:
            self._digests[key] = directory_digest(directory)
        return self._digests[key]

    def _upstream(self, relative: str, stage: str) -> Path:
        path = self.out / relative
        if not path.is_file():
            raise DataIOError(f"нет {path}: сначала выполните этап {stage}")
        return path

    # Входы этапов

    def _inputs(self, stage: str) -> Dict[str, Any]:
        m = self.manifest
        common = {"stage": stage, "model": file_digest(m.model), "camera": m.camera.model_dump()}
        if stage == "fit_hr":
            return {
                **common,
                "frames": self._digest(m.hr_dir),
                "timestamps": m.hr_timestamps,
                "fit": m.fit.model_dump(),
                "mode": self.mode,
            }
        if stage == "fit_lr":
            return {
                **common,
                "frames": self._digest(m.lr_dir),
                "scale": m.scale,
                "fit": m.fit.model_dump(),
                "mode": self.mode,
            }
        if stage == "refine":
            return {
                **common,
                "hr": file_digest(self._upstream("fit_hr/poses.json", "fit_hr")),
                "lr": file_digest(self._upstream("fit_lr/poses.json", "fit_lr")),
                "refine": m.refine.model_dump(),
            }
        if stage == "adapt":
            return {
                **common,
                "hr": file_digest(self._upstream("fit_hr/poses.json", "fit_hr")),
                "frames": self._digest(m.hr_dir),
                "timestamps": m.hr_timestamps,
                "adapt": m.adapt.model_dump(),
            }
        if stage == "render":
            return {
                **common,
                "poses": file_digest(self._upstream("poses.json", "refine")),
                "template": file_digest(self._upstream("template.ply", "adapt")),
                "frames": self._digest(m.lr_dir),
                "scale": m.scale,
                "render": m.render.model_dump(),
            }
        raise InvalidArgumentError(f"неизвестный этап {stage}")

    # Этапы

    def _fit(self, directory: Path, timestamps, camera, target: str):
        numbers, observations = load_observations(directory, timestamps)
        try:
            sequence = fit_frames(self.model, camera, observations, self.manifest.fit, mode=self.mode)
        except HumanSRError as e:
            if e.frame is not None and 0 <= e.frame < len(numbers):
                e.frame = numbers[e.frame]
            raise
        path = Path(save_poses(sequence, str(self.out / target)))
        joints = [pose_body(self.model, p).joints3d for p in sequence.frames]
        return [path], {"frames": len(sequence), "energy": _total(sequence), "jitter": jitter(joints)}

    def _run_fit_hr(self):
        m = self.manifest
        return self._fit(m.hr_dir, m.hr_timestamps, m.camera, "fit_hr/poses.json")

    def _run_fit_lr(self):
        m = self.manifest
        return self._fit(m.lr_dir, None, m.lr_camera, "fit_lr/poses.json")

    def _run_refine(self):
        lr_seq = load_poses(str(self._upstream("fit_lr/poses.json", "fit_lr")))
        hr_seq = load_poses(str(self._upstream("fit_hr/poses.json", "fit_hr")))
        if self.manifest.refine.enabled:
            refined, report = refine_pose_sequence(lr_seq, hr_seq, self.manifest.refine)
        else:
            logger.info("⏭️ Уточнение движения выключено, используются LR позы")
            refined = PoseSequence(lr_seq.frames, lr_seq.timestamps, lr_seq.shared_beta)
            report = RefinementReport()
        poses = Path(save_poses(refined, str(self.out / "poses.json")))
        report_path = Path(save_refine_report(report, str(self.out / "refine_report.json")))
        joints = [pose_body(self.model, p).joints3d for p in refined.frames]
        details = {
            "enabled": self.manifest.refine.enabled,
            "channels": report.counts(),
            "jitter": jitter(joints),
        }
        return [poses, report_path], details

    def _run_adapt(self):
        m = self.manifest
        model = self.model
        hr_seq = load_poses(str(self._upstream("fit_hr/poses.json", "fit_hr")))
        numbers, observations = load_observations(m.hr_dir, m.hr_timestamps)
        keyframe = select_keyframe(hr_seq, model, m.camera, m.adapt.depth_gap)
        obs = observations[keyframe]
        params = hr_seq.frames[keyframe]
        try:
            posed = pose_body(model, params)
            mask_contour = extract_mask_contour(obs.mask)
            model_contour, vertex_ids = extract_model_contour(posed, model.faces, m.camera)
            mask_ids = resample_indices(len(mask_contour), m.adapt.contour_samples)
            model_ids = resample_indices(len(model_contour), m.adapt.contour_samples)
            targets = mask_contour.points[mask_ids]
            correspondence = match_contours(
                Contour(targets),
                Contour(model_contour.points[model_ids], source="model"),
                m.adapt.lambda_smooth,
            )
            correspondence.vertex_ids = vertex_ids[model_ids][correspondence.psi]
            deformed = deform_template(
                posed.vertices, model.faces, m.camera, correspondence, targets, config=m.adapt
            )
            if obs.image_path is None:
                raise DataIOError("у ключевого кадра нет изображения для текстуры")
            image = read_ppm(obs.image_path)
            colors, visible = bake_vertex_colors(deformed, model.faces, image, m.camera)
            rest = unpose_template(deformed, params, posed.per_vertex_transform)
        except HumanSRError as e:
            e.frame = numbers[keyframe]
            raise

        template = DeformedTemplate(
            vertices=to_zero_shape(model, rest, params.beta),
            faces=model.faces,
            colors=colors,
            keyframe=numbers[keyframe],
            visible=visible,
        )
        path = Path(save_deformed_template(template, str(self.out / "template.ply")))
        details = {
            "keyframe": numbers[keyframe],
            "contour_cost": correspondence.cost,
            "visible_vertices": int(visible.sum()),
        }
        return [path], details

    def _run_render(self):
        m = self.manifest
        model = self.model
        sequence = load_poses(str(self._upstream("poses.json", "refine")))
        template = load_deformed_template(str(self._upstream("template.ply", "adapt")))
        paths = list_frames(str(m.lr_dir))
        if len(paths) != len(sequence):
            raise InvalidArgumentError(f"poses.json: {len(sequence)} поз на {len(paths)} LR кадров")

        outputs = []
        for path, params in zip(paths, sequence.frames):
            number = frame_index(path)
            try:
                obs = load_frame(str(path))
                if obs.image_path is None:
                    raise DataIOError(f"{path.name}: нет LR изображения")
                background = upsample_nearest(read_ppm(obs.image_path), m.scale)
                posed = template.pose(model, params)
                raster = rasterize_mesh(
                    posed.vertices, template.faces, m.camera, template.colors, m.render.cull_backfaces
                )
                frame = composite(background, raster)
            except HumanSRError as e:
                e.frame = number
                raise
            outputs.append(Path(write_ppm(str(self.out / OUTPUT_PATTERN.format(number)), frame)))
        logger.info(f"🖼️ Отрисовано {len(outputs)} кадров")
        return outputs, {"frames": len(outputs)}

    def run_stage(self, stage: str) -> StageResult:
        """Выполнить этап или взять его из кэша"""
        runners: Dict[str, Callable[[], Tuple[List[Path], Dict[str, Any]]]] = {
            "fit_hr": self._run_fit_hr,
            "fit_lr": self._run_fit_lr,
            "refine": self._run_refine,
            "adapt": self._run_adapt,
            "render": self._run_render,
        }
        if stage not in runners:
            raise InvalidArgumentError(f"неизвестный этап {stage}, ожидается один из {STAGES}")

        started = time.perf_counter()
        try:
            key = self.cache.key(self._inputs(stage))
            record = self.cache.lookup(stage, key)
            if record is not None:
                logger.info(f"♻️ Этап {stage}: входы не изменились, взят из кэша")
                seconds = time.perf_counter() - started
                return StageResult(stage, "cached", seconds, record.get("details", {}))

            logger.info(f"🔧 Этап {stage}...")
            outputs, details = runners[stage]()
        except HumanSRError as e:
            logger.error(f"❌ Этап {stage} прерван: {e}")
            raise StageError(stage, e, e.frame) from e
        self.cache.store(stage, key, outputs, details)
        seconds = time.perf_counter() - started
        logger.success(f"✅ Этап {stage} завершён за {seconds:.2f} с")
        return StageResult(stage, "done", seconds, details)

    def run(self) -> Dict[str, Any]:
        """Все этапы по порядку и run_report.json"""
        logger.info(f"🚀 Пайплайн: {self.manifest.lr_dir} -> {self.out}")
        self.out.mkdir(parents=True, exist_ok=True)
        results = [self.run_stage(stage) for stage in STAGES]
        report = build_report(results)
        write_report(report, self.out / "run_report.json")
        logger.success(f"✅ Пайплайн завершён, результаты в {self.out}")
        return report


def build_report(results: List[StageResult]) -> Dict[str, Any]:
    by_name = {r.name: r.details for r in results}
    return {
        "stages": [asdict(r) for r in results],
        "energies": {
            name: by_name[name].get("energy") for name in ("fit_hr", "fit_lr") if name in by_name
        },
        "refinement": by_name.get("refine", {}).get("channels"),
        "jitter": {
            "lr": by_name.get("fit_lr", {}).get("jitter"),
            "refined": by_name.get("refine", {}).get("jitter"),
        },
        "keyframe": by_name.get("adapt", {}).get("keyframe"),
    }


def write_report(report: Dict[str, Any], path: Path) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, default=float)
    return str(path)


def run_pipeline(
    manifest: ProjectManifest, mode: FitMode = "batch", use_cache: Optional[bool] = None
) -> Dict[str, Any]:
    return Pipeline(manifest, mode=mode, use_cache=use_cache).run()
