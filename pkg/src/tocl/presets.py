"""Built-in systems available through ``--preset``."""

from __future__ import annotations

PRESETS: dict[str, dict] = {
    # Polynomial system with indicial roots {0, 1, 3}.  The radii cover the
    # longer maneuver of the x0 = (-0.4, 0.2, 0.1) case (theta ~ 2.08, |x| ~ 2.7);
    # det R first vanishes near t ~ 2.19, beyond the time window.
    "gap013": {
        "n": 3,
        "a": ["0", "0", "-2*t*x1"],
        "b": ["1",
              "t - 1/3*t^4 - 2*x1*x3 - (2*t^2 + t^3 + 1/5*t^5)*x1^2",
              "t^3 + 1/5*t^5 - t^2"],
        "t_radius": 2.1,
        "x_radius": 3.0,
    },
    "chain2": {
        "n": 2,
        "a": ["0", "x1"],
        "b": ["1", "0"],
        "t_radius": 1.0,
        "x_radius": 1.0,
    },
    "chain3": {
        "n": 3,
        "a": ["0", "x1", "x2"],
        "b": ["1", "0", "0"],
        "t_radius": 1.0,
        "x_radius": 1.0,
    },
}


def preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
