"""Stage orchestration for the canopy species pipeline.

Every stage reads its inputs from and writes its outputs to one output
directory. ``manifest.json`` there records, per artifact, the sha256 of its
bytes and the stage that made it, and per stage the configuration snapshot
and input hashes it ran with; ``resume`` skips stages whose record still
matches.
"""

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv

from evaluation import emit_report, evaluate_plots, read_plots_csv
from inference import InferConfig, predict_map, worker_count, write_preview
from labels import PrepConfig, apply_land_mask, prep_labels, relabel_round2, weak_species_map
from raster.filters import compute_chm
from raster.io import load_raster, save_raster
from raster.utils import ensure_dir, hash_file, load_json, load_yaml, save_json
from synth import SceneSpec, gen_scene, save_scene
from training import (CowMixConfig, FocalConfig, TrainConfig, class_weights, train_epochs, training_data,
                      write_metrics_csv)
from training.dataset import train_mask
from unet import NetConfig, load_checkpoint, save_checkpoint

load_dotenv(Path(__file__).resolve().parent / ".env")
load_dotenv()

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
ROUNDS = (1, 2)


class StageError(RuntimeError):
    """A stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


class ManifestHashError(RuntimeError):
    """A recorded artifact no longer has the bytes it was recorded with."""


def artifact_files(round_: int) -> Dict[str, str]:
    names = {
        f"labels_round{round_}": f"labels_round{round_}.csr",
        f"checkpoint_round{round_}": f"checkpoint_round{round_}.csnp",
        f"metrics_round{round_}": f"metrics_round{round_}.csv",
        f"species_round{round_}": f"species_round{round_}.csr",
        f"preview_round{round_}": f"preview_round{round_}.ppm",
        f"report_round{round_}": f"report_round{round_}.txt",
        f"report_csv_round{round_}": f"report_round{round_}.csv",
    }
    for c in range(4):
        names[f"logits_round{round_}_{c}"] = f"logits_round{round_}_{c}.csr"
    return names


ARTIFACTS = {
    "dtm": "dtm.csr",
    "dsm": "dsm.csr",
    "truth": "truth.csr",
    "weak16": "weak16.csr",
    "land_mask": "land_mask.csr",
    "plots": "plots.csv",
    "chm": "chm.csr",
    "report_weak16": "report_weak16.txt",
    "report_csv_weak16": "report_weak16.csv",
    **artifact_files(1),
    **artifact_files(2),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Typed view of ``config.yaml``, one dataclass per section."""
    scene: SceneSpec
    prep: PrepConfig
    net: NetConfig
    train: TrainConfig
    focal: FocalConfig
    cowmix: CowMixConfig
    infer: InferConfig
    auto_class_weights: bool = True
    eval_rounds: tuple = ROUNDS

    @classmethod
    def from_dict(cls, config: Dict[str, Any], seed: Optional[int] = None) -> "PipelineConfig":
        focal = dict(config.get("focal") or {})
        weights = focal.pop("class_weights", "auto")
        auto = weights == "auto"
        if not auto:
            focal["class_weights"] = weights
        scene = SceneSpec.from_config(config.get("synth") or {})
        train = TrainConfig.from_config(config.get("train") or {})
        if seed is not None:
            scene, train = replace(scene, seed=seed), replace(train, seed=seed)
        return cls(
            scene=scene,
            prep=PrepConfig.from_config(config.get("labels") or {}),
            net=NetConfig.from_config(config.get("net") or {}),
            train=train,
            focal=FocalConfig.from_config(focal),
            cowmix=CowMixConfig.from_config(config.get("cowmix") or {}),
            infer=InferConfig.from_config(config.get("infer") or {}),
            auto_class_weights=auto,
            eval_rounds=tuple((config.get("eval") or {}).get("rounds", ROUNDS)),
        )

    @classmethod
    def load(cls, path, seed: Optional[int] = None) -> "PipelineConfig":
        return cls.from_dict(load_yaml(path), seed)

    def snapshot(self, *sections: str) -> Dict[str, Any]:
        """JSON-ready copy of the named sections."""
        out = {}
        for name in sections:
            value = getattr(self, name)
            out[name] = _jsonable(asdict(value) if hasattr(value, "__dataclass_fields__") else value)
        return out


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class PipelineManifest:
    """Artifact hashes and per-stage records, persisted as JSON."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.path = self.out_dir / MANIFEST_FILE
        self.artifacts: Dict[str, Dict[str, str]] = {}
        self.stages: Dict[str, Dict[str, Any]] = {}
        if self.path.exists():
            data = load_json(self.path)
            self.artifacts = data.get("artifacts", {})
            self.stages = data.get("stages", {})

    def save(self) -> None:
        save_json({"artifacts": self.artifacts, "stages": self.stages}, self.path)

    def artifact_path(self, name: str) -> Path:
        return self.out_dir / ARTIFACTS[name]

    def verify(self, name: str) -> bool:
        """True if the artifact is present with its recorded bytes, False if it is missing."""
        record = self.artifacts.get(name)
        path = self.artifact_path(name)
        if record is None or not path.exists():
            return False
        if hash_file(path) != record["sha256"]:
            raise ManifestHashError(f"{path.name} changed since it was recorded by stage {record['stage']}")
        return True

    def is_current(self, stage: str, snapshot: Dict[str, Any], inputs: List[str]) -> bool:
        record = self.stages.get(stage)
        if record is None or record["config"] != _jsonable(snapshot):
            return False
        if record["inputs"] != {name: self.artifacts.get(name, {}).get("sha256") for name in inputs}:
            return False
        return all(self.verify(name) for name in record["outputs"])

    def record(self, stage: str, snapshot: Dict[str, Any], inputs: List[str], outputs: List[str]) -> None:
        for name in outputs:
            self.artifacts[name] = {"path": ARTIFACTS[name], "sha256": hash_file(self.artifact_path(name)),
                                    "stage": stage}
        self.stages[stage] = {
            "config": _jsonable(snapshot),
            "inputs": {name: self.artifacts.get(name, {}).get("sha256") for name in inputs},
            "outputs": list(outputs),
        }
        self.save()

    def checkpoints(self) -> List[str]:
        return sorted(name for name in self.artifacts if name.startswith("checkpoint_round"))


class CanopyPipeline:
    """Runs the stages against one output directory."""

    def __init__(self, config: PipelineConfig, out_dir, resume: bool = False, deterministic: bool = False):
        self.config = config
        self.out_dir = ensure_dir(out_dir)
        self.resume = resume
        self.deterministic = deterministic
        self.manifest = PipelineManifest(self.out_dir)

    def path(self, name: str) -> Path:
        return self.manifest.artifact_path(name)

    def _input(self, name: str):
        path = self.path(name)
        if not path.exists():
            raise FileNotFoundError(f"missing artifact {path.name}")
        return path

    def _run(self, stage: str, snapshot: Dict[str, Any], inputs: List[str], outputs: List[str],
             body: Callable[[], None]) -> None:
        try:
            if self.resume and self.manifest.is_current(stage, snapshot, inputs):
                logger.info("Stage %s is up to date, skipping", stage)
                return
            for name in inputs:
                self._input(name)
            logger.info("Running stage %s", stage)
            body()
            self.manifest.record(stage, snapshot, inputs, outputs)
        except (StageError, ManifestHashError):
            raise
        except Exception as e:
            raise StageError(stage, str(e)) from e

    def synth(self) -> None:
        outputs = ["dtm", "dsm", "truth", "weak16", "land_mask", "plots"]
        self._run("synth", self.config.snapshot("scene"), [], outputs,
                  lambda: save_scene(gen_scene(self.config.scene), self.out_dir))

    def chm(self) -> None:
        def body():
            save_raster(compute_chm(load_raster(self.path("dsm")), load_raster(self.path("dtm"))), self.path("chm"))
        self._run("chm", {}, ["dsm", "dtm"], ["chm"], body)

    def prep(self) -> None:
        def body():
            labels = prep_labels(load_raster(self.path("weak16")), load_raster(self.path("chm")), self.config.prep)
            labels = apply_land_mask(labels, load_raster(self.path("land_mask")))
            save_raster(labels, self.path("labels_round1"))
        self._run("prep", self.config.snapshot("prep"), ["weak16", "chm", "land_mask"], ["labels_round1"], body)

    def train(self, round_: int) -> None:
        cfg = self.config
        labels_name = f"labels_round{round_}"

        def body():
            labels = load_raster(self.path(labels_name))
            data = training_data(load_raster(self.path("dtm")), load_raster(self.path("chm")), labels)
            focal = cfg.focal
            if cfg.auto_class_weights:
                in_train = np.where(train_mask(data.shape, cfg.train.val_regions), labels.samples, 255)
                focal = focal.with_weights(class_weights(in_train))
            params, metrics = train_epochs(data, cfg.train, cfg.net, focal, cfg.cowmix)
            save_checkpoint(params, cfg.net, self.path(f"checkpoint_round{round_}"))
            write_metrics_csv(metrics, self.path(f"metrics_round{round_}"))

        snapshot = {**cfg.snapshot("net", "train", "focal", "cowmix", "auto_class_weights"), "round": round_}
        self._run(f"train_round{round_}", snapshot, ["dtm", "chm", labels_name],
                  [f"checkpoint_round{round_}", f"metrics_round{round_}"], body)

    def predict(self, round_: int) -> None:
        cfg = self.config
        outputs = [f"species_round{round_}", f"preview_round{round_}"] + [f"logits_round{round_}_{c}"
                                                                           for c in range(4)]

        def body():
            params, _ = load_checkpoint(self.path(f"checkpoint_round{round_}"), expected=cfg.net)
            threads = 1 if self.deterministic else worker_count()
            species, logits = predict_map(load_raster(self.path("dtm")), load_raster(self.path("chm")),
                                          params, cfg.net, cfg.infer, threads=threads)
            save_raster(species, self.path(f"species_round{round_}"))
            for c, grid in enumerate(logits):
                save_raster(grid, self.path(f"logits_round{round_}_{c}"))
            write_preview(species, self.path(f"preview_round{round_}"))

        snapshot = {**cfg.snapshot("net", "infer"), "round": round_}
        self._run(f"predict_round{round_}", snapshot, ["dtm", "chm", f"checkpoint_round{round_}"], outputs, body)

    def relabel(self) -> None:
        def body():
            labels = relabel_round2(load_raster(self.path("labels_round1")), load_raster(self.path("species_round1")),
                                    self.config.prep)
            save_raster(labels, self.path("labels_round2"))
        self._run("relabel", self.config.snapshot("prep"), ["labels_round1", "species_round1"],
                  ["labels_round2"], body)

    def eval(self, round_: int) -> None:
        def body():
            cm = evaluate_plots(load_raster(self.path(f"species_round{round_}")), read_plots_csv(self.path("plots")))
            emit_report(cm, self.path(f"report_round{round_}"))
            logger.info("Round %d: OA %.4f, macro-F1 %.4f", round_, cm.overall_accuracy, cm.macro_f1)
        self._run(f"eval_round{round_}", {"round": round_}, [f"species_round{round_}", "plots"],
                  [f"report_round{round_}", f"report_csv_round{round_}"], body)

    def eval_weak16(self) -> None:
        """Score the weak labels themselves on the plots, as the baseline for both rounds."""
        def body():
            species = weak_species_map(load_raster(self.path("weak16")), self.config.prep.upsample_factor)
            cm = evaluate_plots(species, read_plots_csv(self.path("plots")))
            emit_report(cm, self.path("report_weak16"))
            logger.info("Weak labels: OA %.4f, macro-F1 %.4f", cm.overall_accuracy, cm.macro_f1)
        self._run("eval_weak16", self.config.snapshot("prep"), ["weak16", "plots"],
                  ["report_weak16", "report_csv_weak16"], body)

    def run_all(self) -> None:
        """synth -> chm -> prep -> train 1 -> predict 1 -> relabel -> train 2 -> predict 2 -> eval, weak-label baseline."""
        self.synth()
        self.chm()
        self.prep()
        self.train(1)
        self.predict(1)
        self.relabel()
        self.train(2)
        self.predict(2)
        for round_ in self.config.eval_rounds:
            self.eval(round_)
        self.eval_weak16()
        logger.info("Pipeline finished; checkpoints recorded: %s", ", ".join(self.manifest.checkpoints()))

