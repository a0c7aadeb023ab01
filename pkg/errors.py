#!/usr/bin/env python
"""
Exception hierarchy for the Pseudo-Stereo toolkit
Library code raises these; the CLI and API server translate them to exit
codes and HTTP status codes.
"""
from typing import Optional


class PseudoStereoError(Exception):
    """Base class for every error raised by the toolkit"""


class DimensionError(PseudoStereoError, ValueError):
    """Shapes disagree, or a dimension is zero / too small"""


class DomainError(PseudoStereoError, ValueError):
    """A scalar argument is outside the domain of the operation"""


class DepthIndexError(PseudoStereoError, IndexError):
    """Depth level index outside 0..N_d-1"""


class EmptyStatisticsError(PseudoStereoError, ValueError):
    """Statistics requested over zero valid entries"""


class FormatError(PseudoStereoError):
    """
    Malformed or truncated file

    Carries the path, and either the byte offset or the key that failed, so
    the CLI can name it on stderr.
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        offset: Optional[int] = None,
        key: Optional[str] = None
    ):
        self.path = path
        self.offset = offset
        self.key = key

        details = []
        if path is not None:
            details.append(f"file={path}")
        if offset is not None:
            details.append(f"offset={offset}")
        if key is not None:
            details.append(f"key={key}")

        full = f"{message} ({', '.join(details)})" if details else message
        super().__init__(full)


class UnsupportedFormatError(FormatError):
    """Well-formed file using a variant this toolkit does not read"""


class UsageError(PseudoStereoError):
    """Bad command-line usage: missing or unreadable paths, unparsable flags"""
