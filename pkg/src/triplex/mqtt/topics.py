"""Topic name and filter rules: '/' levels, '+' single level, trailing '#'."""

from __future__ import annotations


def validate_topic_name(name: str):
    """Return an error string if name is not a publishable topic, else None."""
    if not name:
        return "topic name must not be empty"
    if len(name.encode("utf-8")) > 0xFFFF:
        return "topic name too long"
    if "\x00" in name:
        return "topic name must not contain NUL"
    if "+" in name or "#" in name:
        return f"topic name {name!r} must not contain wildcards"
    return None


def validate_topic_filter(topic_filter: str):
    """Return an error string if the filter is malformed, else None."""
    if not topic_filter:
        return "topic filter must not be empty"
    if len(topic_filter.encode("utf-8")) > 0xFFFF:
        return "topic filter too long"
    if "\x00" in topic_filter:
        return "topic filter must not contain NUL"
    levels = topic_filter.split("/")
    for i, level in enumerate(levels):
        if "#" in level:
            if level != "#" or i != len(levels) - 1:
                return f"'#' must be the final, entire level: {topic_filter!r}"
        elif "+" in level and level != "+":
            return f"'+' must occupy an entire level: {topic_filter!r}"
    return None


def topic_matches(topic_filter: str, name: str) -> bool:
    """True iff name matches the filter under the wildcard rules.

    A trailing '#' also matches its parent: "a/#" matches "a".
    """
    flevels = topic_filter.split("/")
    nlevels = name.split("/")
    for i, flevel in enumerate(flevels):
        if flevel == "#":
            # also matches the parent itself, so no name-level needed here
            return True
        if i >= len(nlevels):
            return False
        if flevel == "+" or flevel == nlevels[i]:
            continue
        return False
    return len(nlevels) == len(flevels)
