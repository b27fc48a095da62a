"""Error hierarchy with stable machine codes shared by the API and CLI."""

from __future__ import annotations


class PlurinetError(Exception):
    """Base domain error; carries a stable machine code and an HTTP status."""

    code = "INTERNAL"
    http_status = 500

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self)}


class NotFound(PlurinetError):
    code = "NOT_FOUND"
    http_status = 404


class ValidationRejected(PlurinetError):
    code = "VALIDATION_REJECTED"
    http_status = 422


class Refused(PlurinetError):
    code = "REFUSED"
    http_status = 403


class BadDigest(PlurinetError):
    code = "BAD_DIGEST"
    http_status = 400


class ForkedStream(PlurinetError):
    code = "FORKED_STREAM"
    http_status = 409


class UnauthorizedWriter(PlurinetError):
    code = "UNAUTHORIZED_WRITER"
    http_status = 403


class IntegrityFailure(PlurinetError):
    code = "INTEGRITY_FAILURE"
    http_status = 500


class PeerUnreachable(PlurinetError):
    code = "PEER_UNREACHABLE"
    http_status = 502


class ConfigError(PlurinetError):
    code = "CONFIG_ERROR"
    http_status = 400


class SnapshotMismatch(PlurinetError):
    code = "SNAPSHOT_MISMATCH"
    http_status = 409
