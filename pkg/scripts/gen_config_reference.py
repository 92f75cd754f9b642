"""Regenerate docs/config.md from the configuration dataclasses."""
from pathlib import Path

from closurelab.config import reference

HEADER = """# Configuration reference

Run configurations are TOML documents.  Top-level keys set the run; the
`[grid]`, `[time]`, `[initial_spectrum]`, `[oscillator]`, `[sweeping]` and
`[output]` tables group the rest.  Every key is optional except `mode`,
which the subcommand fills in when absent.  Unknown keys, duplicate keys,
wrong types and out-of-range values are rejected with the key path and
line number.

`initial_spectrum.kind` selects which of the two spectrum tables applies:
`peaked` takes `amplitude` and `k_peak`, `power_exp` takes `c`, `exponent`
and `cutoff`.

"""


def main():
    path = Path(__file__).resolve().parents[1] / "docs" / "config.md"
    path.parent.mkdir(exist_ok=True)
    path.write_text(HEADER + reference(), encoding="utf-8")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
