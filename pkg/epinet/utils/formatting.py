"""Terminal output for epinet.

Everything a user sees goes through here: debug lines for ``--verbose`` runs,
success and warning notes, error panels and result tables.
"""

import json
from collections.abc import Sequence

from rich import print as rprint
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.status import Status
from rich.table import Table

from epinet.config import COLORS, MAX_DEBUG_VALUE_CHARS, TERMINAL_WIDTH

console = Console(width=TERMINAL_WIDTH)


def debug_header(message: str) -> None:
    """Print a debug section header.

    Args:
        message: Section title.
    """
    rprint(f"[{COLORS['debug_header']}]Debug - {message}[/{COLORS['debug_header']}]")


def debug_item(label: str, value: str | None = None) -> None:
    """Print one debug line, truncating long values.

    Args:
        label: Item label.
        value: Optional value; markup in it is escaped.
    """
    if value is None:
        rprint(f"[{COLORS['debug_header']}]  • {label}[/{COLORS['debug_header']}]")
        return
    total_len = len(value)
    if total_len > MAX_DEBUG_VALUE_CHARS:
        value = (
            f"{value[:MAX_DEBUG_VALUE_CHARS]}\n"
            f"... [truncated {total_len - MAX_DEBUG_VALUE_CHARS} chars; "
            f"total {total_len}]"
        )
    rprint(
        f"[{COLORS['debug_header']}]  • {label}:[/{COLORS['debug_header']}] "
        f"[{COLORS['debug_value']}]{escape(value)}[/{COLORS['debug_value']}]"
    )


def debug_json(data: dict, indent: int = 4) -> None:
    """Print a dictionary as indented JSON in the debug color."""
    json_data = escape(json.dumps(data, indent=indent, default=str))
    rprint(f"[{COLORS['debug_value']}]{json_data}[/{COLORS['debug_value']}]")


def success(message: str) -> None:
    """Print a success line with a checkmark."""
    rprint(f"[{COLORS['success']}]✓[/{COLORS['success']}] {escape(message)}")


def warning(message: str) -> None:
    """Print a warning line."""
    rprint(f"[{COLORS['warning']}]Warning: {escape(message)}[/{COLORS['warning']}]")


def status(message: str) -> Status:
    """Return a spinner context showing ``message``."""
    return console.status(f"[{COLORS['status']}]{message}")


def print_error(error_msg: str, suggestion: str, title: str) -> None:
    """Print a red error panel with a suggestion line.

    Args:
        error_msg: What went wrong.
        suggestion: What the user can do about it.
        title: Panel title.
    """
    err = COLORS["error"]
    content = f"[{err}]{escape(error_msg)}[/{err}]\n\nSuggestion: {escape(suggestion)}"
    rprint(Panel(content, title=title, border_style="red"))


def print_table(
    title: str, columns: Sequence[str], rows: Sequence[Sequence[str]]
) -> None:
    """Print rows as a rich table.

    Args:
        title: Table title.
        columns: Column headers.
        rows: Cell text per row; cells may carry rich markup.
    """
    table = Table(title=title, header_style=COLORS["info"])
    for column in columns:
        table.add_column(column)
    for row in rows:
        table.add_row(*row)
    console.print(table)
