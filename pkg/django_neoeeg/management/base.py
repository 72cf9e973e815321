import logging
import sys
from typing import Any, Mapping, Optional

from django.core.management.base import BaseCommand, CommandError, CommandParser

from ..conf import AppSettings
from ..detector import BandPowerOracle, Detector, WeightContainer
from ..exceptions import ConfigurationError, ExitCode, NeoEEGError
from ..montage import MontageGraph, load_montage

logger = logging.getLogger(__name__)


class UsageParser(CommandParser):
    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(ExitCode.USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=ExitCode.USAGE)


class NeoEEGCommand(BaseCommand):
    """Shared plumbing: config flags, exit codes and montage/settings lookup."""

    requires_system_checks: list = []
    config_flags: Mapping[str, str] = {}

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Usage errors exit with 1 instead of argparse's 2, which means I/O here.
        parser.__class__ = UsageParser
        parser.add_argument(
            "--config",
            help="YAML config file (defaults to $NEOEEG_CONFIG).",
        )
        return parser

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except NeoEEGError as exc:
            logger.debug("command failed", exc_info=True)
            raise CommandError(str(exc), returncode=int(exc.exit_code)) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=int(ExitCode.IO)) from exc

    def app_settings(self, options: Mapping[str, Any]) -> AppSettings:
        """Resolve settings, letting flags named in `config_flags` override keys."""
        overrides = {key: options.get(flag) for flag, key in self.config_flags.items()}
        return AppSettings.load(options.get("config"), overrides)

    def montage(self, conf: AppSettings) -> MontageGraph:
        if conf.montage_file is None:
            return MontageGraph()
        return load_montage(conf.montage_file)

    def require(self, value: Optional[Any], name: str) -> Any:
        if value is None:
            raise ConfigurationError(f"{name} is required")
        return value

    def handle(self, *args, **options):
        self.verbosity = options.get("verbosity", 1)
        return self.run(**options)

    def run(self, **options):
        raise NotImplementedError("subclasses of NeoEEGCommand must provide a run() method")

    def scorer(self, conf: AppSettings, montage: MontageGraph, oracle: bool):
        """The trained detector from `weights`, or the band-power test oracle."""
        if oracle:
            return BandPowerOracle(montage.labels)
        if conf.weights is None:
            raise ConfigurationError("no weights configured; pass --weights or --oracle")
        return Detector.from_container(WeightContainer.read(conf.weights), montage)
