from pathlib import Path
from typing import Dict, List

from gwcl.config import PRESETS_DIR, read_key_values
from gwcl.errors import ConfigError

# Used when the preset file is missing: Indian Pines settings
DEFAULT_PRESET: Dict[str, str] = {
    "name": "indian_pines",
    "cube": "indian_pines/indian_pines_corrected",
    "labels": "indian_pines/indian_pines_gt",
    "beta": "20",
    "lambda": "8",
    "eta1": "0.001",
    "eta2": "0.001",
    "sigma_m": "0.04",
    "sigma_n": "0.001",
    "k": "10",
}


def available_presets(directory: Path = PRESETS_DIR) -> List[str]:
    return sorted(p.stem for p in Path(directory).glob("*.conf"))


def load_preset(name: str, directory: Path = PRESETS_DIR) -> Dict[str, str]:
    p = Path(directory) / f"{name}.conf"
    if p.exists():
        return read_key_values(p)
    if name == DEFAULT_PRESET["name"]:
        return dict(DEFAULT_PRESET)
    raise ConfigError(f"Unknown preset '{name}' (available: {', '.join(available_presets(directory)) or 'none'})")
