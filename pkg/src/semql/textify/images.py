"""Image tagging responses to relational rows.

A visual recognition service labels an image with class entries; each
entry may carry a type_hierarchy path ("/animal/mammal/.../cheetah")
or name a color ("coal black color"). Those entries collapse into a
fixed six-column row: imagename, classA..classD, color.

classA is the hierarchy root, classD the leaf, classB the level next
to the root, classC everything in between. Multiple hierarchies merge
per class in first-seen order without duplicates.
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, MalformedHierarchy, SchemaError
from ..tables import ColumnSchema, RelationalTable
from .text import _clean_fragment

IMAGE_COLUMNS = ("imagename", "classA", "classB", "classC", "classD", "color")
_CLASS_MARKERS = {
    "classA": "classa_empty",
    "classB": "classb_empty",
    "classC": "classc_empty",
    "classD": "classd_empty",
    "color": "color_empty",
}
_COLOR_SUFFIX = " color"
_LIVE_SIZE_LIMIT = 2 * 1024 * 1024


def _hierarchy_token(part: str) -> str:
    return _clean_fragment(part).replace(" ", "_")


def parse_type_hierarchy(hierarchy: str):
    """Split one "/"-separated path into the four class token groups."""
    parts = [
        token
        for piece in str(hierarchy).split("/")
        if (token := _hierarchy_token(piece))
    ]
    if len(parts) < 2:
        raise MalformedHierarchy(
            f"type hierarchy {hierarchy!r} has fewer than two parts"
        )
    class_a = [parts[0]]
    class_d = [parts[-1]]
    class_b = [parts[1]] if len(parts) >= 3 else []
    class_c = parts[2:-1] if len(parts) >= 4 else []
    return class_a, class_b, class_c, class_d


@dataclass
class ImageTagRecord:
    imagename: str
    classA: str
    classB: str
    classC: str
    classD: str
    color: str

    def as_row(self) -> dict:
        return {
            "imagename": self.imagename,
            "classA": self.classA,
            "classB": self.classB,
            "classC": self.classC,
            "classD": self.classD,
            "color": self.color,
        }


def _merge_unique(groups) -> list[str]:
    seen = []
    for group in groups:
        for token in group:
            if token not in seen:
                seen.append(token)
    return seen


def _class_entries(payload: dict) -> list[dict]:
    if not isinstance(payload, dict):
        raise SchemaError("image response must be a JSON object")
    if isinstance(payload.get("classes"), list):
        return payload["classes"]
    entries = []
    for image in payload.get("images", []):
        for classifier in image.get("classifiers", []):
            entries.extend(classifier.get("classes", []))
    if not entries:
        raise SchemaError("image response carries no class entries")
    return entries


def textify_image_response(imagename: str, payload: dict) -> ImageTagRecord:
    """Collapse one tagging response into a six-column record."""
    hierarchies = []
    colors = []
    for entry in _class_entries(payload):
        label = entry.get("class")
        if not label:
            continue
        if label.lower().endswith(_COLOR_SUFFIX):
            token = _hierarchy_token(label[: -len(_COLOR_SUFFIX)])
            if token and token not in colors:
                colors.append(token)
        elif entry.get("type_hierarchy"):
            hierarchies.append(parse_type_hierarchy(entry["type_hierarchy"]))
        # plain class labels without a hierarchy carry no level info
        # and are dropped

    merged = {
        "classA": _merge_unique(h[0] for h in hierarchies),
        "classB": _merge_unique(h[1] for h in hierarchies),
        "classC": _merge_unique(h[2] for h in hierarchies),
        "classD": _merge_unique(h[3] for h in hierarchies),
        "color": colors,
    }
    fields = {
        name: " ".join(tokens) if tokens else _CLASS_MARKERS[name]
        for name, tokens in merged.items()
    }
    return ImageTagRecord(imagename=_hierarchy_token(imagename), **fields)


class FixtureTransport:
    """Reads <imagename>.json tagging responses from a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigError(f"image fixture directory {directory} not found")

    def names(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def fetch(self, imagename: str) -> dict:
        path = self.directory / f"{imagename}.json"
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)


class LiveTransport:
    """Calls a tagging endpoint over HTTP.

    The API key comes from an environment variable so configs stay
    shareable. Images larger than the service limit are skipped (fetch
    returns None) instead of failing the whole run.
    """

    def __init__(self, endpoint: str, api_key_env: str = "SEMQL_VISION_API_KEY"):
        self.endpoint = endpoint
        key = os.environ.get(api_key_env)
        if not key:
            raise ConfigError(f"environment variable {api_key_env} is not set")
        self.api_key = key

    def fetch_bytes(self, imagename: str, data: bytes) -> dict | None:
        if len(data) > _LIVE_SIZE_LIMIT:
            return None
        request = urllib.request.Request(
            f"{self.endpoint}?api_key={self.api_key}&name={imagename}",
            data=data,
            method="POST",
        )
        with urllib.request.urlopen(request) as response:
            return json.loads(response.read().decode("utf-8"))


def image_table_schema() -> list[ColumnSchema]:
    return [
        ColumnSchema(name="imagename", kind="primary_key"),
        ColumnSchema(name="classA"),
        ColumnSchema(name="classB"),
        ColumnSchema(name="classC"),
        ColumnSchema(name="classD"),
        ColumnSchema(name="color"),
    ]


def build_image_table(records, name: str = "images") -> RelationalTable:
    table = RelationalTable(name=name, columns=image_table_schema())
    table.rows.extend(record.as_row() for record in records)
    table.check_keys()
    return table


def load_image_table(directory, name: str = "images") -> RelationalTable:
    transport = FixtureTransport(directory)
    records = [
        textify_image_response(image, transport.fetch(image))
        for image in transport.names()
    ]
    return build_image_table(records, name=name)
