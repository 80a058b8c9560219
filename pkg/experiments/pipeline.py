from concurrent.futures import ProcessPoolExecutor
import filecmp
from functools import partial
from typing import Any, Dict, Iterator, List, Optional, Tuple
import logging
import os

from app.services.barriers import BarriersService
from app.services.kernel import KernelService
from app.services.nodal2d import Nodal2DService
from app.services.stats import MeasureAccumulator, StatsService
from core.config import settings
from core.errors import InsufficientDataError, ParameterError
from experiments.extract import SampleExtractor
from experiments.load import RunLoader
from experiments.transform import SampleTransformer
from models.experiment import ExperimentConfig, RunManifest, SampleRecord
from models.measures import EmpiricalMeasure
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

_SPOOL_BATCH = 256
_MEASURE_KIND = {"measure-omega-2d": "connectivity", "measure-ends-2d": "tree", "genus-3d": "genus"}


def _run_sample(config: ExperimentConfig, index: int) -> SampleRecord:
    seed, sampled = SampleExtractor(config).extract(index)
    return SampleTransformer.transform(config, index, seed, sampled)


class ExperimentPipeline:
    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None, persist: bool = True):
        self.config = config
        self.manifest = RunManifest(config=config)
        self.output_dir = output_dir or config.out or os.path.join(settings.output_dir, self.manifest.run_id)
        self.loader = RunLoader(self.output_dir)
        self.persist = persist

    def samples(self) -> Iterator[SampleRecord]:
        """Per-sample records in index order, whatever the number of workers."""
        task = partial(_run_sample, self.config)
        indices = range(self.config.samples)
        if self.config.workers == 1:
            yield from map(task, indices)
            return
        chunk = max(1, self.config.samples // (4 * self.config.workers))
        with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
            yield from pool.map(task, indices, chunksize=chunk)

    def run(self) -> RunManifest:
        c = self.config
        logger.info("=== Experiment %s, run %s ===", c.experiment, self.manifest.run_id)
        self.manifest.sample_seeds = [derive_seed(c.seed, i) for i in range(c.samples)]
        if self.persist:
            RunLoader.record(self.manifest, self.output_dir)

        measure: Optional[EmpiricalMeasure] = None
        try:
            if c.experiment in _MEASURE_KIND:
                measure = self._measure_run()
            elif c.experiment in ("kacrice-1d", "ns-constant"):
                self._count_run()
            elif c.experiment == "covariance-check":
                self._covariance_run()
            else:
                self._barrier_run()
            self.manifest.status = "succeeded"
        except Exception as e:
            logger.error("Run %s failed: %s", self.manifest.run_id, e)
            self.manifest.status = "failed"
            self.manifest.summary["error"] = f"{type(e).__name__}: {e}"
            raise
        finally:
            self.loader.write_manifest(self.manifest)
            if self.persist:
                RunLoader.finish(self.manifest, measure)

        logger.info("=== Pipeline Complete. Outputs in %s ===", self.output_dir)
        return self.manifest

    # --- Experiments ---

    def _collect(self, on_record) -> Tuple[int, int]:
        """Stream records through on_record, spooling them when asked; returns (kept, flagged)."""
        logger.info("--- Pipeline Step 1: Extract + Transform (%d samples, %d worker(s)) ---",
                    self.config.samples, self.config.workers)
        kept = flagged = 0
        batch: List[SampleRecord] = []
        spooled = self.loader.path("samples.jsonl")
        if self.config.spool and os.path.exists(spooled):
            os.remove(spooled)
        for record in self.samples():
            if self.config.spool:
                batch.append(record)
                if len(batch) >= _SPOOL_BATCH:
                    self.loader.spool(batch)
                    batch = []
            if record.flagged:
                flagged += 1
                continue
            kept += 1
            on_record(record)
        if batch:
            self.loader.spool(batch)
        logger.info("Transformed %d samples, %d flagged", kept, flagged)
        return kept, flagged

    def _measure_run(self) -> EmpiricalMeasure:
        c = self.config
        kind = _MEASURE_KIND[c.experiment]
        acc = MeasureAccumulator(kind)
        extras: List[Dict[str, float]] = []

        def take(record: SampleRecord):
            acc.add(record.atoms + [None] * record.unresolved)
            extras.append(record.extras)

        kept, flagged = self._collect(take)
        logger.info("--- Pipeline Step 2: Aggregate (%s) ---", c.mode)
        if kept == 0:
            raise ParameterError("every sample was flagged; nothing to aggregate")
        measure = acc.result(c.mode)
        summary: Dict[str, Any] = {
            "kind": kind,
            "mode": c.mode,
            "num_samples": kept,
            "flagged_samples": flagged,
            "total_atoms": measure.total_count,
            "unresolved_mass": measure.unresolved_mass,
            "atoms": dict(list(measure.atoms.items())[:32]),
        }
        if kind in ("connectivity", "genus") and measure.integer_atoms():
            summary["mean"], summary["mean_stderr"] = StatsService.mean(measure)
        if kind == "connectivity":
            if c.geometry == "sphere" and c.alpha in (0.0, 1.0):
                rows = StatsService.table_compare(measure, StatsService.reference_table(c.alpha))
                summary["reference"] = [row.model_dump() for row in rows[:5]]
            try:
                summary["tail_fit"] = StatsService.fit_power_law(measure, c.m_min).model_dump()
            except InsufficientDataError as e:
                summary["tail_fit"] = f"insufficient data: {e}"
        if kind == "tree":
            trees = sum(1 for e in extras if e.get("is_tree"))
            summary["tree_fraction"] = trees / len(extras)
            summary["degree_identity_failures"] = sum(
                1 for e in extras
                if e.get("is_tree") and "degree_sum" in e and e["degree_sum"] != e["two_v_minus_2"])
        if kind == "genus":
            summary["euler_per_volume"] = sum(e.get("euler_sum", 0.0) for e in extras) / len(extras) / SampleExtractor(c).area

        logger.info("--- Pipeline Step 3: Load ---")
        self.loader.write_measure_csv(measure)
        self.manifest.summary.update(summary)
        return measure

    def _count_run(self):
        c = self.config
        counts: List[int] = []
        kept, flagged = self._collect(lambda record: counts.append(record.components))
        logger.info("--- Pipeline Step 2: Aggregate (Nazarov-Sodin estimate) ---")
        if kept == 0:
            raise ParameterError("every sample was flagged; nothing to aggregate")
        n = 1 if c.geometry == "circle" else 2
        T = 1.0 if c.geometry == "planar" else c.spectral_T
        estimate = StatsService.ns_estimate(counts, SampleExtractor(c).area, T, n, c.alpha)
        summary: Dict[str, Any] = {"estimate": estimate.model_dump(), "flagged_samples": flagged}
        if n == 1:
            expected = KernelService.ns_constant_1d(c.alpha)
            summary["expected"] = expected
            summary["relative_error"] = abs(estimate.beta_hat - expected) / expected
        logger.info("--- Pipeline Step 3: Load ---")
        self.loader.write_rows_csv(
            ["beta_hat", "stderr", "mean_count", "num_samples", "n", "alpha"],
            [[estimate.beta_hat, estimate.stderr, estimate.mean_count, estimate.num_samples, n, c.alpha]],
            "estimate.csv",
        )
        self.loader.write_rows_csv(["index", "count"], enumerate(counts), "counts.csv")
        self.manifest.summary.update(summary)

    def _covariance_run(self):
        c = self.config
        logger.info("--- Pipeline Step 1: Sample %d planar fields ---", c.samples)
        report = KernelService.empirical_covariance_ensemble(c.alpha, c.samples, c.lags, c.J, c.seed)
        logger.info("--- Pipeline Step 2: Load ---")
        self.loader.write_rows_csv(
            ["lag", "estimate", "stderr", "exact"],
            [[r.lag, r.estimate, r.stderr, r.exact] for r in report.rows],
            "covariance.csv",
        )
        self.manifest.summary.update({
            "sup_deviation": report.sup_deviation(),
            "num_fields": report.num_fields,
            "warnings": report.warnings,
        })

    def _barrier_run(self):
        c = self.config
        logger.info("--- Pipeline Step 1: Realize %s ---", c.tree)
        realization = BarriersService.realize_tree(c.tree, epsilon=c.epsilon, seed=c.seed)
        logger.info("--- Pipeline Step 2: Render ---")
        grid = BarriersService.verification_grid(realization.barrier, realization.window, realization.cells_per_unit)
        components = Nodal2DService.label_domains(grid)
        curves = Nodal2DService.extract_nodal_curves(grid, components, trace=True)
        logger.info("--- Pipeline Step 3: Load ---")
        BarriersService.export_field_pgm(grid, self.loader.reserve("field.pgm"))
        Nodal2DService.export_labels_pgm(components, self.loader.reserve("labels.pgm"))
        self.loader.write_text(Nodal2DService.export_curves_json(curves), "curves.json")
        self.loader.write_text(realization.canonical_code + "\n", "tree.txt")
        self.loader.write_json(realization.spec.model_dump(), "perturbation.json")
        self.manifest.summary.update({
            "canonical_code": realization.canonical_code,
            "attempts": realization.attempts,
            "epsilon": realization.spec.epsilon,
            "lattice_points": int(realization.spec.K.shape[0]),
            "window": list(realization.window),
        })

    @staticmethod
    def replay(manifest_path: str, output_dir: Optional[str] = None, persist: bool = True) -> Tuple[RunManifest, bool]:
        """
        Rerun the configuration stored in a manifest.

        The flag is True when the new summary matches and every output file the
        old run left behind (the manifest itself aside) is byte-identical to its
        counterpart in the new run.
        """
        with open(manifest_path) as fh:
            previous = RunManifest.model_validate_json(fh.read())
        config = previous.config.model_copy(update={"out": None})
        manifest = ExperimentPipeline(config, output_dir=output_dir, persist=persist).run()
        identical = manifest.summary == previous.summary
        fresh = {os.path.basename(p): p for p in manifest.outputs}
        for old in previous.outputs:
            name = os.path.basename(old)
            if name == "manifest.json" or not os.path.exists(old):
                continue
            if name not in fresh or not filecmp.cmp(old, fresh[name], shallow=False):
                logger.warning("REPLAY: %s differs from the original run", name)
                identical = False
        return manifest, identical
