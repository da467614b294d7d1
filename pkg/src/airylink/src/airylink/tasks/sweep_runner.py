import io
import os

import structlog

from airylink.config import Config
from airylink.errors import ConfigurationError
from airylink.evaluation import sweep, write_sweep_csv

SLOG = structlog.get_logger(__name__)


def main_sweep_runner(config: Config, jobs: int = 1) -> str:
    """Run the configured sweep family and write sweep.csv."""
    if config.sweep is None:
        raise ConfigurationError("The sweep command needs a 'sweep' section in the config")
    if config.eval.cache_dir:
        os.makedirs(config.eval.cache_dir, exist_ok=True)
    rows = sweep(config.scenario, config.sweep, config.design, config.eval, jobs=jobs)

    buffer = io.StringIO()
    write_sweep_csv(buffer, rows)
    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "sweep.csv")
    with open(path, "w") as handle:
        handle.write(buffer.getvalue())
    failed = sum(1 for row in rows if row.status != "ok")
    SLOG.info("Wrote sweep", path=path, rows=len(rows), failed=failed)
    return buffer.getvalue()
