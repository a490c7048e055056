"""Configuration management for the benchmark runtime."""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass
class RuntimeConfig:
    """Worker pool and numerical safety limits."""

    threads: int = 1
    hessian_cap: int = 2000  # largest K for which dense Hessians are assembled


@dataclass
class LoggingConfig:
    """Structured logging configuration."""

    level: str = "INFO"
    file_path: str | None = None


@dataclass
class OutputConfig:
    """Where command outputs land when --out is not given."""

    output_dir: str = "results"


class Config:
    """Main application configuration."""

    def __init__(self):
        self.runtime = RuntimeConfig(
            threads=int(os.getenv("REGVAR_THREADS", "1")),
            hessian_cap=int(os.getenv("REGVAR_HESSIAN_CAP", "2000")),
        )

        self.logging = LoggingConfig(
            level=os.getenv("REGVAR_LOG_LEVEL", "INFO").upper(),
            file_path=os.getenv("REGVAR_LOG_FILE"),
        )

        self.output = OutputConfig(
            output_dir=os.getenv("REGVAR_OUTPUT_DIR", "results"),
        )

    def validate(self) -> bool:
        """
        Validate configuration.

        Returns:
            True if configuration is valid

        Raises:
            ValueError if configuration is invalid
        """
        if self.runtime.threads < 1:
            raise ValueError("REGVAR_THREADS must be a positive integer")
        if self.runtime.hessian_cap < 1:
            raise ValueError("REGVAR_HESSIAN_CAP must be a positive integer")
        if self.logging.level not in LOG_LEVELS:
            raise ValueError(
                f"REGVAR_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, "
                f"got {self.logging.level}"
            )
        if not self.output.output_dir:
            raise ValueError("REGVAR_OUTPUT_DIR cannot be empty")

        return True


# Global config instance
config = Config()
