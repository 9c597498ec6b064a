"""Audit trail embedded in every run summary."""

from importlib import metadata

from pydantic import BaseModel

from app.schemas.artifacts import AuditRecord
from app.utils.logging import get_logger

logger = get_logger("audit")

TOOL_NAME = "conformal-verify"


def tool_version() -> str:
    try:
        return metadata.version(TOOL_NAME)
    except metadata.PackageNotFoundError:
        return "0.0.0+local"


def audit_record(command: str, seed: int, config: BaseModel, tolerances: BaseModel) -> AuditRecord:
    """Record of what produced a summary: the resolved config and tolerances, not the raw file."""
    record = AuditRecord(
        tool=TOOL_NAME,
        version=tool_version(),
        command=command,
        seed=seed,
        config=config.model_dump(mode="json"),
        tolerances=tolerances.model_dump(mode="json"),
    )
    logger.info("AUDIT command=%s seed=%d version=%s", command, seed, record.version)
    return record
