from typing import Any, Iterable, List, Optional, Sequence
import csv
import json
import logging
import os

from app.services.stats import StatsService, UNRESOLVED
from core.database import ExperimentRun, MeasureAtom, add_atoms, record_run, update_run
from models.experiment import RunManifest, SampleRecord
from models.measures import EmpiricalMeasure

logger = logging.getLogger(__name__)


class RunLoader:
    """Writes a run's files under its output directory and mirrors the run into the database."""

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        os.makedirs(output_dir, exist_ok=True)
        self.outputs: List[str] = []

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _track(self, path: str) -> str:
        if path not in self.outputs:
            self.outputs.append(path)
        return path

    def reserve(self, name: str) -> str:
        """Path for a file some other writer produces; listed in the manifest outputs."""
        return self._track(self.path(name))

    def write_measure_csv(self, measure: EmpiricalMeasure, name: str = "measure.csv") -> str:
        """atom,mass,stderr with the unresolved bucket as the last row."""
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom", "mass", "stderr"])
            for atom, mass, stderr in StatsService.measure_rows(measure):
                writer.writerow([atom, f"{mass:.10g}", f"{stderr:.6g}"])
        return self._track(path)

    def write_rows_csv(self, header: Sequence[str], rows: Iterable[Sequence[Any]], name: str) -> str:
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(header))
            writer.writerows(rows)
        return self._track(path)

    def spool(self, records: Iterable[SampleRecord], name: str = "samples.jsonl") -> str:
        path = self.path(name)
        with open(path, "a") as fh:
            for record in records:
                fh.write(record.model_dump_json() + "\n")
        return self._track(path)

    def write_json(self, payload: Any, name: str) -> str:
        path = self.path(name)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        return self._track(path)

    def write_text(self, text: str, name: str) -> str:
        path = self.path(name)
        with open(path, "w") as fh:
            fh.write(text)
        return self._track(path)

    def write_manifest(self, manifest: RunManifest, name: str = "manifest.json") -> str:
        path = self.path(name)
        self._track(path)
        manifest.outputs = list(self.outputs)
        with open(path, "w") as fh:
            fh.write(manifest.model_dump_json(indent=2))
        return path

    # --- Database ---

    @staticmethod
    def record(manifest: RunManifest, output_dir: Optional[str] = None) -> ExperimentRun:
        run = ExperimentRun(
            id=manifest.run_id,
            experiment=manifest.config.experiment,
            params=manifest.config.model_dump_json(),
            seed=manifest.config.seed,
            status=manifest.status,
            created_at=manifest.created_at,
            output_dir=output_dir,
        )
        return record_run(run)

    @staticmethod
    def finish(manifest: RunManifest, measure: Optional[EmpiricalMeasure] = None) -> int:
        """Store the final status, the summary and, when there is one, every atom of the measure."""
        update_run(manifest.run_id, manifest.status, summary=json.dumps(manifest.summary, default=str))
        if measure is None:
            return 0
        rows = [
            MeasureAtom(run_id=manifest.run_id, atom=atom, mass=mass, stderr=stderr,
                        is_unresolved=(atom == UNRESOLVED))
            for atom, mass, stderr in StatsService.measure_rows(measure)
        ]
        added = add_atoms(rows)
        logger.info("LOAD: stored %d atoms for run %s", added, manifest.run_id)
        return added
