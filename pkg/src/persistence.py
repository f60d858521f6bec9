from pathlib import Path
from typing import Generic, List, TypeVar

from .assembly import PrimitiveAssembly
from .exceptions import DataIntegrityError, NotFoundError, ValidationError
from .fitting import FitReport
from .utils import read_json, write_json

Entity = TypeVar("Entity")


class Repository(Generic[Entity]):
    """
    Base repository class: storing each document in a separate one .json file.
    """

    kind = "document"

    def __init__(self, dir: Path):
        self.dir = dir
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, id_obj: str) -> Path:
        if not id_obj or "/" in id_obj or "\\" in id_obj:
            raise ValidationError(f"invalid {self.kind} id {id_obj!r}")
        return self.dir / f"{id_obj}.json"

    def _read(self, id_obj: str) -> dict:
        path = self._path(id_obj)
        if not path.exists():
            raise NotFoundError(f"{self.kind} {id_obj} not found")
        try:
            return read_json(path)
        except ValueError as e:
            raise DataIntegrityError(f"{self.kind} {id_obj} is not valid JSON: {e}") from None

    def ids(self) -> List[str]:
        return sorted(p.stem for p in self.dir.iterdir() if p.is_file() and p.suffix == ".json")

    def exists(self, id_obj: str) -> bool:
        return self._path(id_obj).exists()

    def delete(self, id_obj: str) -> None:
        path = self._path(id_obj)
        if not path.exists():
            raise NotFoundError(f"{self.kind} {id_obj} not found")
        path.unlink()


class CheckpointRepository(Repository[PrimitiveAssembly]):
    """
    Fitted assemblies as versioned JSON checkpoints, stamped with the hash of the config that produced them
    """

    kind = "checkpoint"

    def create(self, id_obj: str, assembly: PrimitiveAssembly, config_hash: str = "") -> Path:
        path = self._path(id_obj)
        write_json(path, {**assembly.to_dict(), "config_hash": config_hash})
        return path

    def get(self, id_obj: str) -> PrimitiveAssembly:
        data = self._read(id_obj)
        try:
            return PrimitiveAssembly.from_dict(data)
        except (KeyError, TypeError) as e:
            raise DataIntegrityError(f"checkpoint {id_obj} is missing field {e}") from None

    def config_hash(self, id_obj: str) -> str:
        return self._read(id_obj).get("config_hash", "")

    def update(self, id_obj: str, assembly: PrimitiveAssembly, config_hash: str = "") -> Path:
        if not self.exists(id_obj):
            raise NotFoundError(f"checkpoint {id_obj} not found")
        return self.create(id_obj, assembly, config_hash)

    def list_all(self) -> List[PrimitiveAssembly]:
        return [self.get(id_obj) for id_obj in self.ids()]


class ReportRepository(Repository[FitReport]):
    """
    CRUD for FitReport documents, keyed by config hash and target fingerprint
    """

    kind = "report"

    def create(self, report: FitReport) -> FitReport:
        write_json(self._path(report.id), report.to_dict())
        return report

    def get(self, id_obj: str) -> FitReport:
        data = self._read(id_obj)
        try:
            return FitReport.from_dict(data)
        except (KeyError, TypeError) as e:
            raise DataIntegrityError(f"report {id_obj} is missing field {e}") from None

    def update(self, report: FitReport) -> FitReport:
        if not self.exists(report.id):
            raise NotFoundError(f"report {report.id} not found")
        return self.create(report)

    def list_all(self) -> List[FitReport]:
        return [self.get(id_obj) for id_obj in self.ids()]
