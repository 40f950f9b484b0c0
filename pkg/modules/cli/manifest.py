"""
Manifiesto de un run: qué configuración, qué semillas y qué archivos produjo
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .. import __version__
from ..errores import ConfigurationError

MANIFEST_NAME = 'manifest.json'


def make_run_id(name: str, config_hash: str, seeds: List[int]) -> str:
    """Identificador determinista: nombre, prefijo del hash y semillas"""
    semillas = '-'.join(str(s) for s in seeds) if len(seeds) <= 4 else f"{seeds[0]}..{seeds[-1]}x{len(seeds)}"
    return f"{name}-{config_hash[:12]}-s{semillas}"


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    seeds: List[int]
    stage_checkpoints: Dict[str, List[str]] = field(default_factory=dict)
    report_paths: Dict[str, List[str]] = field(default_factory=dict)
    tool_version: str = __version__
    status: str = 'pending'
    error: Optional[str] = None

    def register_stage(self, stage: str, report_path: str, checkpoints: List[str]):
        self.report_paths.setdefault(stage, []).append(report_path)
        self.stage_checkpoints.setdefault(stage, []).extend(checkpoints)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, out_dir) -> str:
        ruta = Path(out_dir) / MANIFEST_NAME
        ruta.parent.mkdir(parents=True, exist_ok=True)
        with open(ruta, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        return str(ruta)

    @classmethod
    def load(cls, out_dir) -> 'RunManifest':
        ruta = Path(out_dir) / MANIFEST_NAME
        if not ruta.exists():
            raise ConfigurationError(f"No existe el manifiesto: {ruta}")
        with open(ruta, 'r', encoding='utf-8') as f:
            return cls(**json.load(f))
