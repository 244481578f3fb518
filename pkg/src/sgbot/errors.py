"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class SgbotError(Exception):
    """Base class for all toolkit errors."""

    code = "error"


class DegenerateCloud(SgbotError):
    """Point cloud too small or too flat in xy to bound."""

    code = "degenerate_cloud"


class EmptyCloud(SgbotError):
    """Operation requires a non-empty point cloud."""

    code = "empty_cloud"


class EmptyMask(SgbotError):
    """No masked pixel carries a valid (positive) depth."""

    code = "empty_mask"


class ShapeMismatch(SgbotError):
    """Raster dimensions disagree with each other or the intrinsics."""

    code = "shape_mismatch"


class ParseError(SgbotError):
    """Input document is not syntactically valid."""

    code = "parse_error"


class SchemaError(SgbotError):
    """Input document is well-formed but violates a schema invariant."""

    code = "schema_error"


class NoPlaceableObjects(SgbotError):
    """Every observed object was classified as an obstacle."""

    code = "no_placeable_objects"


class UnknownReference(SgbotError):
    """A graph edit referenced a node or edge that does not exist."""

    code = "unknown_reference"

    def __init__(self, edit_index: int, detail: str):
        super().__init__(f"edit {edit_index}: {detail}")
        self.edit_index = edit_index


class InvariantViolation(SgbotError):
    """A graph edit would break a scene-graph invariant."""

    code = "invariant_violation"

    def __init__(self, edit_index: int, detail: str):
        super().__init__(f"edit {edit_index}: {detail}")
        self.edit_index = edit_index


class MissingPrior(SgbotError):
    """Layout solving needs a shape prior for every graph node."""

    code = "missing_prior"

    def __init__(self, node_id: int):
        super().__init__(f"no shape prior for node {node_id}")
        self.node_id = node_id


class LayoutInfeasible(SgbotError):
    """Relation constraints contradict or separation failed to converge."""

    code = "layout_infeasible"


class KeyMismatch(SgbotError):
    """Layout and prior maps must share the same id set."""

    code = "key_mismatch"


class BufferExhausted(SgbotError):
    """No free parking pose remains along the table edge."""

    code = "buffer_exhausted"


class PlacementFailure(SgbotError):
    """Rejection sampling could not place all objects without overlap."""

    code = "placement_failure"


class IdMismatch(SgbotError):
    """Two scene states must cover the same object ids to compare."""

    code = "id_mismatch"
