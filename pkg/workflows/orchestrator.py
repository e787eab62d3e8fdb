"""
Experiment orchestrator for WaveProbe.
Runs the full pipeline stage by stage and indexes every report in a run manifest.
"""
import asyncio
import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from composer.records import write_composition
from composer.training import train
from core.config import ExperimentConfig, config_to_dict
from core.errors import DataError, StageError, UsageError
from core.models import (
    CLSBundle,
    CompositionModel,
    ConstraintMode,
    Reference,
    canonical_subbands,
    error_report_to_dict,
    eval_row_to_dict,
    model_config_to_dict,
)
from vit.encoder import Model, init_random
from vit.weights import read_weights
from wavelets.decomposition import basis_filters
from workflows.caching import cache_primitive_cls_async
from workflows.datasets import Dataset, DatasetItem, Split, generate_synthetic_dataset, load_manifest, split
from workflows.distortions import distort_compress, distort_noise
from workflows.evaluation import (
    ORIGINAL,
    SUMMED,
    accuracy,
    condition_name,
    error_breakdown,
    eval_accuracy,
    eval_reweighted,
    predictions,
    reference_labels,
)
from workflows.pool import map_async
from workflows.reports import (
    layerwise_cka_report,
    ssim_map_report,
    write_csv,
    write_json,
    write_ssim_maps,
)

logger = logging.getLogger(__name__)

ACCURACY_HEADER = ("condition", "acc_gt", "acc_relative", "n")
REWEIGHT_HEADER = ("mode", "acc_gt", "acc_relative", "n", "clamped")
ERRORS_HEADER = ("condition", "err_learned", "err_org", "err_learned_not_org", "err_org_not_learned", "err_both", "n")
DISTORTION_HEADER = ("condition", "original") + tuple(m.value for m in ConstraintMode)
CKA_HEADER = ("mode", "layer", "summed", "learned")
SSIM_HEADER = ("condition", "layer", "channel", "score")


class WorkflowPhase(Enum):
    """Stages of an experiment run, in execution order."""
    MODEL = "model"
    DATA = "data"
    CACHE = "cache"
    TRAIN = "train"
    EVALUATE = "evaluate"
    WEIGHTS = "weights"
    REWEIGHT = "reweight"
    ERRORS = "errors"
    DISTORTION = "distortion"
    CKA = "cka"
    SSIM = "ssim"


@dataclass
class WorkflowState:
    """Everything a run has produced so far."""
    config: ExperimentConfig
    phase: Optional[WorkflowPhase] = None
    completed: list[WorkflowPhase] = field(default_factory=list)
    reports: list[str] = field(default_factory=list)
    model: Optional[Model] = None
    layer: int = 0
    dataset: Optional[Dataset] = None
    split: Optional[Split] = None
    bundles: list[CLSBundle] = field(default_factory=list)
    compositions: dict[ConstraintMode, CompositionModel] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    started_at: datetime = field(default_factory=datetime.utcnow)
    completed_at: Optional[datetime] = None

    def part(self, indices) -> list[CLSBundle]:
        return [self.bundles[i] for i in indices]

    def items(self, indices) -> list[DatasetItem]:
        return self.require()[1].subset(indices)

    def require(self) -> tuple[Model, Dataset, Split]:
        if self.model is None or self.dataset is None or self.split is None:
            raise DataError("the model and data stages have not run")
        return self.model, self.dataset, self.split


class ExperimentOrchestrator:
    """
    Runs decompose -> cache -> train -> evaluate -> reports for one config.
    Every report lands in the output directory and is listed in manifest.json.
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.pipeline = [
            (WorkflowPhase.MODEL, self._load_model),
            (WorkflowPhase.DATA, self._load_data),
            (WorkflowPhase.CACHE, self._cache),
            (WorkflowPhase.TRAIN, self._train),
            (WorkflowPhase.EVALUATE, self._evaluate),
            (WorkflowPhase.WEIGHTS, self._weights),
            (WorkflowPhase.REWEIGHT, self._reweight),
            (WorkflowPhase.ERRORS, self._errors),
            (WorkflowPhase.DISTORTION, self._distortion),
            (WorkflowPhase.CKA, self._cka),
            (WorkflowPhase.SSIM, self._ssim),
        ]

    # =========================================================================
    # Workflow Execution
    # =========================================================================

    async def run(self) -> WorkflowState:
        """Execute every stage; on failure flag the manifest incomplete and raise StageError."""
        state = WorkflowState(config=self.config)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        for phase, handler in self.pipeline:
            state.phase = phase
            logger.info("stage %s: starting", phase.value)
            try:
                await handler(state)
            except Exception as e:
                state.errors.append(f"{phase.value}: {e}")
                logger.error("stage %s failed: %s", phase.value, e)
                self._write_manifest(state, failed=phase)
                raise StageError(phase.value, e) from e
            state.completed.append(phase)

        state.completed_at = datetime.utcnow()
        self._write_manifest(state)
        logger.info("run complete: %d reports in %s", len(state.reports), self.output_dir)
        return state

    def _emit(self, state: WorkflowState, path: Path) -> None:
        state.reports.append(path.relative_to(self.output_dir).as_posix())

    def _tag(self, source: str) -> str:
        return condition_name(self.config.wavelet, self.config.levels, source)

    # =========================================================================
    # Stages
    # =========================================================================

    async def _load_model(self, state: WorkflowState):
        if self.config.model_path:
            model = read_weights(self.config.model_path)
            if model.config != self.config.model_config:
                logger.warning("weight file architecture overrides the configured one: %s", model.config)
        else:
            model = init_random(self.config.model_config, self.config.model_seed)
        layer = self.config.layer if self.config.layer is not None else model.config.num_layers
        if not 1 <= layer <= model.config.num_layers:
            raise UsageError(f"config key 'layer': {layer} outside [1, {model.config.num_layers}]")
        state.model = model
        state.layer = layer

    async def _load_data(self, state: WorkflowState):
        if state.model is None:
            raise DataError("no model loaded")
        model_config = state.model.config
        if self.config.dataset_manifest:
            dataset = load_manifest(self.config.dataset_manifest, model_config.num_classes)
        else:
            dataset = generate_synthetic_dataset(
                model_config.num_classes,
                self.config.synthetic_per_class,
                model_config.image_size,
                self.config.synthetic_seed,
                model_config.channels,
            )
        parts = split(dataset, self.config.split_seed)
        state.dataset = dataset
        state.split = parts
        logger.info(
            "split: %d train, %d val, %d test",
            len(parts.train), len(parts.val), len(parts.test),
        )
        if not parts.test:
            raise DataError("test split is empty; the dataset is too small")

    async def _cache(self, state: WorkflowState):
        model, dataset, _ = state.require()
        state.bundles = await cache_primitive_cls_async(
            model,
            dataset.items,
            self.config.wavelet,
            self.config.levels,
            state.layer,
            cache_dir=self.output_dir / "cache",
            workers=self.config.workers,
        )

    async def _train(self, state: WorkflowState):
        model, _, parts = state.require()
        train_bundles = state.part(parts.train)
        val_bundles = state.part(parts.val)
        for mode in self.config.constraint_modes:
            composition = await asyncio.to_thread(
                train,
                model,
                train_bundles,
                val_bundles,
                mode,
                self.config.training,
                self.config.wavelet,
                self.config.levels,
                state.layer,
            )
            state.compositions[mode] = composition
            self._emit(state, write_composition(self.output_dir / f"composition_{mode.value}.yaml", composition))

    async def _evaluate(self, state: WorkflowState):
        model, _, parts = state.require()
        test = state.part(parts.test)
        rows = [
            eval_accuracy(model, ORIGINAL, test, self._tag(ORIGINAL)),
            eval_accuracy(model, SUMMED, test, self._tag(SUMMED)),
        ]
        rows += [
            eval_accuracy(model, composition, test, self._tag(mode.value))
            for mode, composition in state.compositions.items()
        ]
        path = write_csv(self.output_dir / "table_accuracy.csv", ACCURACY_HEADER, [eval_row_to_dict(r) for r in rows])
        self._emit(state, path)

    async def _weights(self, state: WorkflowState):
        payload = {
            "basis": self.config.basis,
            "levels": self.config.levels,
            "layer": state.layer,
            "subbands": [s.label for s in canonical_subbands(self.config.levels)],
            "weights": {mode.value: c.weights.tolist() for mode, c in state.compositions.items()},
            "best_epoch": {mode.value: c.best_epoch for mode, c in state.compositions.items()},
        }
        self._emit(state, write_json(self.output_dir / "weights.json", payload))

    async def _reweight(self, state: WorkflowState):
        model, _, parts = state.require()
        items = state.items(parts.test)
        bundles = state.part(parts.test)
        rows = []
        for mode, composition in state.compositions.items():
            row, clamped = await asyncio.to_thread(
                eval_reweighted, model, composition, items, bundles, self.config.workers
            )
            rows.append({**eval_row_to_dict(row), "mode": mode.value, "clamped": clamped})
        self._emit(state, write_csv(self.output_dir / "reweighted.csv", REWEIGHT_HEADER, rows))

    async def _errors(self, state: WorkflowState):
        model, _, parts = state.require()
        test = state.part(parts.test)
        original = predictions(model, ORIGINAL, test)
        labels = reference_labels(test, Reference.GROUND_TRUTH)
        rows = [
            error_report_to_dict(
                error_breakdown(predictions(model, composition, test), original, labels), mode.value
            )
            for mode, composition in state.compositions.items()
        ]
        self._emit(state, write_csv(self.output_dir / "errors.csv", ERRORS_HEADER, rows))

    async def _distorted_items(self, items: list[DatasetItem]) -> dict[str, list[DatasetItem]]:
        config = self.config
        if config.distortion_manifest:
            external = {item.image_id: item for item in load_manifest(config.distortion_manifest).items}
            missing = [item.image_id for item in items if item.image_id not in external]
            if missing:
                raise DataError(f"distortion manifest lacks image id '{missing[0]}'")
            compressed = [DatasetItem(i.image_id, external[i.image_id].image, i.label) for i in items]
        else:
            images = await map_async(
                lambda i: distort_compress(i.image, config.compress_quality), items, config.workers
            )
            compressed = [DatasetItem(i.image_id, image, i.label) for i, image in zip(items, images)]
        noisy = [
            DatasetItem(i.image_id, distort_noise(i.image, config.noise_sigma, [config.noise_seed, index]), i.label)
            for index, i in enumerate(items)
        ]
        return {"compressed": compressed, "noisy": noisy}

    async def _distortion(self, state: WorkflowState):
        model, _, parts = state.require()
        items = state.items(parts.test)
        conditions = {"original": state.part(parts.test)}
        for name, distorted in (await self._distorted_items(items)).items():
            conditions[name] = await cache_primitive_cls_async(
                model, distorted, self.config.wavelet, self.config.levels, state.layer,
                workers=self.config.workers,
            )

        rows = []
        for name, bundles in conditions.items():
            labels = reference_labels(bundles, Reference.GROUND_TRUTH)
            row = {"condition": name, "original": f"{accuracy(predictions(model, ORIGINAL, bundles), labels):.6f}"}
            for mode, composition in state.compositions.items():
                row[mode.value] = f"{accuracy(predictions(model, composition, bundles), labels):.6f}"
            rows.append(row)
        self._emit(state, write_csv(self.output_dir / "distortion.csv", DISTORTION_HEADER, rows))

    async def _cka(self, state: WorkflowState):
        model, _, parts = state.require()
        images = [item.image for item in state.items(parts.test)[: self.config.cka_samples]]
        basis = basis_filters(self.config.wavelet)
        rows = []
        for mode, composition in state.compositions.items():
            curve = await asyncio.to_thread(
                layerwise_cka_report, model, composition.weights, images, basis, self.config.levels
            )
            rows += [
                {"mode": mode.value, "layer": r.layer, "summed": f"{r.summed:.6f}", "learned": f"{r.learned:.6f}"}
                for r in curve
            ]
        self._emit(state, write_csv(self.output_dir / "cka_layers.csv", CKA_HEADER, rows))

    async def _ssim(self, state: WorkflowState):
        model, _, parts = state.require()
        test_items = state.items(parts.test)
        index = self.config.ssim_image_index
        if not 0 <= index < len(test_items):
            raise UsageError(f"config key 'ssim_image_index': {index} outside [0, {len(test_items)})")
        image = test_items[index].image
        basis = basis_filters(self.config.wavelet)
        n = len(canonical_subbands(self.config.levels))
        weights = {SUMMED: np.ones(n)}
        weights.update({mode.value: c.weights for mode, c in state.compositions.items()})

        rows = []
        for name, eta in weights.items():
            report = await asyncio.to_thread(ssim_map_report, model, image, eta, basis, self.config.levels)
            for path in write_ssim_maps(self.output_dir / "ssim", f"ssim_map_{name}", report):
                self._emit(state, path)
            rows.append({"condition": name, "layer": report.layer, "channel": "all", "score": f"{report.score:.6f}"})
            rows += [
                {"condition": name, "layer": report.layer, "channel": c, "score": f"{s:.6f}"}
                for c, s in enumerate(report.channel_scores)
            ]
        self._emit(state, write_csv(self.output_dir / "ssim_scores.csv", SSIM_HEADER, rows))

    # =========================================================================
    # Manifest
    # =========================================================================

    def _write_manifest(self, state: WorkflowState, failed: Optional[WorkflowPhase] = None) -> Path:
        payload = {
            "complete": failed is None,
            "failed_stage": failed.value if failed else None,
            "stages": [phase.value for phase in state.completed],
            "reports": sorted(state.reports),
            "config": {k: v for k, v in config_to_dict(self.config).items() if k != "output_dir"},
            "model_config": model_config_to_dict(state.model.config) if state.model else None,
            "model_fingerprint": state.model.fingerprint() if state.model else None,
            "dataset_fingerprint": state.dataset.fingerprint() if state.dataset else None,
            "errors": state.errors,
        }
        return write_json(self.output_dir / "manifest.json", payload)


# =============================================================================
# Convenience Functions
# =============================================================================

def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> WorkflowState:
    """Run the full pipeline synchronously."""
    return asyncio.run(ExperimentOrchestrator(config, output_dir).run())
