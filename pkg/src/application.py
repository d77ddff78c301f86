import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

import pandas as pd

from src.core.config_service import ConfigurationService
from src.core.dependency_container import DependencyContainer
from src.core.profile_manager import ProfileManager
from src.data.checkpoint_repository import FileCheckpointRepository
from src.data.manifest_repository import JsonLinesManifestRepository
from src.data.synthetic import generate_synthetic_pairs
from src.domain.errors import ClipMambaError, ConfigError
from src.domain.models import (DEFAULT_TEMPLATES, LossRecord, ManifestKind, PerturbationSpec, PromptTemplateSet,
                               RunConfig)
from src.model.clip_model import ClipModel, init_model, init_params
from src.service.hessian_service import HessianService, clip_loss_builder, large_magnitude_count, summarize_sharpness
from src.service.ood_service import OodService, summarize_ood
from src.service.perturbation_service import parse_kind, parse_ladders, perturb_tree, perturbation_ladder
from src.service.report_service import ReportService
from src.service.table_reference import reference_grid
from src.service.training_service import (TrainingService, load_training_data, model_from_checkpoint,
                                          model_checkpoint, retrieval_top1)
from src.service.zeroshot_service import ZeroShotService, load_templates, summarize_table
from src.tensor.tensor import DTYPES
from src.util import error_translator as codes
from src.util.compute_checksum import compute_sha256
from src.util.paths import get_checkpoint_file_path, get_log_file_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1


class Application:
    """Resolves one command's configuration, wires its services and runs it."""

    def __init__(self, profiles_dir: Optional[str] = None):
        self.profile_manager = ProfileManager(profiles_dir)
        self.container = DependencyContainer()
        self.config: Optional[RunConfig] = None
        self.setup_dependencies()

    def setup_logging(self, out_dir: str, command: str) -> None:
        """File log under <out>/logs plus console; console only if the file cannot be opened."""
        try:
            log_file_path = get_log_file_path(out_dir, command)
            logging.basicConfig(
                level=logging.INFO,
                format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                handlers=[
                    logging.FileHandler(log_file_path, encoding='utf-8'),
                    logging.StreamHandler()
                ]
            )
            logger.info(f"Log file: {log_file_path}")
        except OSError as e:
            logging.basicConfig(
                level=logging.INFO,
                format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                handlers=[logging.StreamHandler()]
            )
            logger.warning(f"Failed to set up file logging ({e}), falling back to console only")

    def setup_dependencies(self) -> None:
        self.container.register('profile_manager', self.profile_manager)
        self.container.register('config_service', ConfigurationService(self.profile_manager))
        self.container.register('manifest_repository', JsonLinesManifestRepository())
        self.container.register('checkpoint_repository', FileCheckpointRepository())

    def configure(self, command: str, profile: Optional[str] = None, ini_path: Optional[str] = None,
                  flags: Optional[Mapping[str, Mapping[str, Any]]] = None, overrides: tuple = ()) -> RunConfig:
        """Resolve profile, INI file and flags, start logging and echo the result into the output directory."""
        config_service = self.container.get('config_service')
        self.config = config_service.resolve(profile, ini_path, flags, overrides)
        self.setup_logging(self.config.paths.out, command)
        config_service.write_echo(self.config, command)
        self.container.register_factory('report_service', lambda c: ReportService(self.config.paths.out))
        return self.config

    def run(self, command: str, profile: Optional[str] = None, ini_path: Optional[str] = None,
            flags: Optional[Mapping[str, Mapping[str, Any]]] = None, overrides: tuple = ()) -> int:
        """Configure and execute one command; library errors are logged with their code and mapped to exit 1."""
        handler = self.commands().get(command)
        if handler is None:
            logger.error(f"Unknown command: {command}")
            return EXIT_FAILED
        try:
            self.configure(command, profile, ini_path, flags, overrides)
            return handler()
        except ClipMambaError as e:
            logger.error(f"{command} failed [{e.code}]: {e}")
            return EXIT_FAILED

    def commands(self) -> Dict[str, Callable[..., int]]:
        return {
            "train": self.cmd_train,
            "eval-zeroshot": self.cmd_eval_zeroshot,
            "eval-ood": self.cmd_eval_ood,
            "eval-stimulus": self.cmd_eval_stimulus,
            "shape-bias": self.cmd_report_shape_bias,
            "perturb": self.cmd_perturb,
            "hessian": self.cmd_hessian,
            "summarize": self.cmd_summarize,
            "make-synthetic": self.cmd_make_synthetic,
        }

    # helpers

    def _require(self, section: str, key: str) -> str:
        value = getattr(getattr(self.config, section), key)
        if not value:
            raise ConfigError("is required for this command", code=codes.MISSING_CONFIG_KEY, key=f"{section}.{key}")
        return value

    def _load_manifest(self, kind: ManifestKind):
        return self.container.get('manifest_repository').load(self._require('paths', 'manifest'), kind)

    def _templates(self) -> PromptTemplateSet:
        if self.config.paths.templates:
            return load_templates(self.config.paths.templates)
        return PromptTemplateSet(list(DEFAULT_TEMPLATES))

    def _load_model(self, path: str) -> ClipModel:
        """Checkpoint checked tensor by tensor against the configured model shapes."""
        expected = init_params(self.config.model, seed=0, dtype=self.config.train.dtype).shapes()
        checkpoint = self.container.get('checkpoint_repository').load(path, expected)
        return model_from_checkpoint(checkpoint, self.config.eval.model_id or Path(path).stem)

    def _model(self) -> ClipModel:
        return self._load_model(self._require('paths', 'checkpoint'))

    # commands

    def cmd_train(self) -> int:
        config = self.config
        data = load_training_data(self._load_manifest(ManifestKind.CAPTION_PAIRS), config.model,
                                  DTYPES[config.train.dtype])
        resume = None
        if config.paths.checkpoint:
            expected = init_params(config.model, seed=0, dtype=config.train.dtype).shapes()
            resume = self.container.get('checkpoint_repository').load(config.paths.checkpoint, expected)

        losses: List[LossRecord] = []
        reports = self.container.get_typed('report_service', ReportService)
        service = TrainingService(config.model, config.train, on_step=losses.append)
        try:
            result = service.train(data, resume=resume)
        finally:
            reports.write_loss_log(losses)

        checkpoint = model_checkpoint(result.model, result.optimizer, config.train)
        path = get_checkpoint_file_path(config.paths.out, checkpoint.step)
        self.container.get('checkpoint_repository').save(checkpoint, path)
        logger.info(f"Checkpoint {path} sha256 {compute_sha256(path)}")
        logger.info(f"Training finished at step {checkpoint.step}; retrieval top-1 "
                    f"{retrieval_top1(result.model, data):.4f}")
        return EXIT_OK

    def cmd_eval_zeroshot(self) -> int:
        model = self._model()
        manifest = self._load_manifest(ManifestKind.LABELED)
        service = ZeroShotService(model, self._templates(), self.config.eval.batch_size)
        report = service.evaluate(manifest, self.config.eval.dataset)
        self.container.get_typed('report_service', ReportService).write_zeroshot(report)
        return EXIT_OK if report.sample_count == len(manifest) else EXIT_FAILED

    def _ood_service(self, model: ClipModel) -> OodService:
        ood = self.config.ood
        return OodService(model, self._templates(), categories=ood.categories, seed=ood.seed,
                          batch_size=self.config.eval.batch_size, category_field=ood.category_field,
                          ladders=parse_ladders(ood.levels))

    def cmd_eval_ood(self) -> int:
        model = self._model()
        manifest = self._load_manifest(ManifestKind.LABELED)
        service = self._ood_service(model)
        curves = [service.evaluate_ood(manifest, parse_kind(kind)) for kind in self.config.ood.kinds]
        reports = self.container.get_typed('report_service', ReportService)
        reports.write_ood_curves(curves, overall=summarize_ood(curves))
        complete = all(count == len(manifest) for curve in curves for count in curve.counts)
        return EXIT_OK if complete else EXIT_FAILED

    def cmd_eval_stimulus(self) -> int:
        model = self._model()
        manifest = self._load_manifest(ManifestKind.LABELED)
        accuracy = self._ood_service(model).evaluate_stimulus(manifest)
        reports = self.container.get_typed('report_service', ReportService)
        reports.write_stimulus(self.config.eval.dataset, model.model_id, accuracy, len(manifest))
        return EXIT_OK

    def cmd_report_shape_bias(self) -> int:
        model = self._model()
        manifest = self._load_manifest(ManifestKind.CUE_CONFLICT)
        result = self._ood_service(model).shape_bias(manifest)
        self.container.get_typed('report_service', ReportService).write_shape_bias(result, model.model_id)
        return EXIT_OK

    def cmd_perturb(self) -> int:
        """Perturbed copy of every PNG under perturb.input, mirrored under the output directory."""
        settings = self.config.perturb
        if not settings.input or not os.path.isdir(settings.input):
            raise ConfigError(f"input directory '{settings.input}' not found", code=codes.MISSING_CONFIG_KEY,
                              key="perturb.input")
        kind = parse_kind(self._require('perturb', 'kind'))
        try:
            level = float(self._require('perturb', 'level'))
        except ValueError:
            raise ConfigError(f"cannot parse {settings.level!r}", code=codes.INVALID_CONFIG_VALUE, key="perturb.level")
        ladder = perturbation_ladder(kind, parse_ladders(self.config.ood.levels))
        spec = PerturbationSpec(kind, level, self.config.ood.seed)
        count = perturb_tree(settings.input, self.config.paths.out, spec, ladder)
        return EXIT_OK if count > 0 else EXIT_FAILED

    def cmd_hessian(self) -> int:
        """Spectra of the configured checkpoints (comma-separated), or of a fresh model if none is given."""
        config = self.config
        data = load_training_data(self._load_manifest(ManifestKind.CAPTION_PAIRS), config.model,
                                  DTYPES[config.train.dtype])
        paths = [p.strip() for p in config.paths.checkpoint.split(",") if p.strip()]
        models = [self._load_model(p) for p in paths] or [
            init_model(config.model, seed=config.train.seed, dtype=config.train.dtype,
                       model_id=config.eval.model_id or None)]

        reports = self.container.get_typed('report_service', ReportService)
        service = HessianService(config.hessian)
        for model in models:
            report = service.spectrum_run(model.params, len(data), clip_loss_builder(model, data), model.model_id)
            suffix = "" if len(models) == 1 else f"_{model.model_id}"
            reports.write_spectrum(report, f"hessian{suffix}.csv")
            summary = summarize_sharpness(report)
            reports.write_sharpness(summary, model.model_id, f"sharpness{suffix}")
            logger.info(f"{model.model_id}: {summary.negative_count}/{summary.total} negative eigenvalues, "
                        f"{large_magnitude_count(report, 1.0)} with magnitude above 1")
        return EXIT_OK

    def cmd_summarize(self) -> int:
        """Best model per dataset from the paths.grid zeroshot.csv, or from the bundled reference table."""
        grid_path = self.config.paths.grid
        if grid_path:
            if not os.path.exists(grid_path):
                raise ConfigError(f"results grid {grid_path} not found", code=codes.MISSING_CONFIG_KEY,
                                  key="paths.grid")
            frame = pd.read_csv(grid_path)
            grid: Dict[str, Dict[str, float]] = {}
            for row in frame.itertuples(index=False):
                grid.setdefault(str(row.model), {})[str(row.dataset)] = float(row.top1)
        else:
            grid = reference_grid()
        summaries, wins = summarize_table(grid)
        self.container.get_typed('report_service', ReportService).write_table_summary(summaries, wins)
        for model, count in sorted(wins.items(), key=lambda item: -item[1]):
            logger.info(f"{model}: best on {count} of {len(summaries)} datasets")
        return EXIT_OK

    def cmd_make_synthetic(self) -> int:
        manifests = generate_synthetic_pairs(self.config.paths.out, per_class=self.config.synthetic.per_class,
                                             seed=self.config.train.seed, image_size=self.config.model.image_size)
        for kind, path in manifests.items():
            logger.info(f"{kind} manifest: {path}")
        return EXIT_OK
