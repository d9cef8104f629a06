from .app import create_app
from .journal import JournalWriter, replay
from .store import ServiceConfig, SubmissionRecord, SubmissionStore

__all__ = ["create_app", "JournalWriter", "replay", "ServiceConfig",
           "SubmissionRecord", "SubmissionStore"]
