from __future__ import annotations

import logging

from colorama import Fore, Style, just_fix_windows_console


_COLORS = {
    logging.DEBUG: Style.DIM,
    logging.INFO: Fore.CYAN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED + Style.BRIGHT,
}


class ColorFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        color = _COLORS.get(record.levelno, "")
        return f"{color}{text}{Style.RESET_ALL}" if color else text


def configure_logging(level: str | int = "INFO") -> None:
    """One colored stream handler on the root logger; safe to call twice."""
    just_fix_windows_console()
    root = logging.getLogger()
    for h in list(root.handlers):
        if getattr(h, "_fblab", False):
            root.removeHandler(h)
    handler = logging.StreamHandler()
    handler.setFormatter(ColorFormatter("%(asctime)s %(levelname)-7s %(name)s: %(message)s", "%H:%M:%S"))
    handler._fblab = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(level.upper() if isinstance(level, str) else level)
