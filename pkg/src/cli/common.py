import json
import logging
from pathlib import Path
from typing import Any, NoReturn, Optional

import click

from ..assembly import PrimitiveAssembly
from ..config import RunConfig, load_config, validate
from ..exceptions import NotFoundError
from ..persistence import CheckpointRepository

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_DATA_INTEGRITY = 2
EXIT_NUMERICAL = 3


def fail(error: Exception, code: int) -> NoReturn:
    click.echo(f"error: {error}", err=True)
    raise click.exceptions.Exit(code)


def config_option(f):
    return click.option("--config", "config_path", type=click.Path(path_type=Path), default=None,
                        help="JSON run configuration (see --print-config)")(f)


def seed_option(f):
    return click.option("--seed", type=int, default=None, help="Override the configured seed")(f)


def print_config_option(f):
    def dump_defaults(ctx: click.Context, _param: click.Parameter, value: bool) -> None:
        if value and not ctx.resilient_parsing:
            click.echo(json.dumps(RunConfig().model_dump(mode="json"), indent=4))
            ctx.exit()

    return click.option("--print-config", is_flag=True, expose_value=False, is_eager=True, callback=dump_defaults,
                        help="Print the default configuration and exit")(f)


def read_run_config(config_path: Optional[Path]) -> RunConfig:
    return RunConfig() if config_path is None else load_config(config_path)


def override(model: Any, **changes: Any) -> Any:
    """Copy of a config section with the non-None changes applied and re-validated."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return model
    return validate(type(model), {**model.model_dump(), **changes})


def load_checkpoint(path: Path) -> tuple[PrimitiveAssembly, str]:
    """Assembly and config hash stored in a checkpoint file."""
    if not path.is_file():
        raise NotFoundError(f"checkpoint {path} not found")
    repository = CheckpointRepository(path.parent)
    return repository.get(path.stem), repository.config_hash(path.stem)
