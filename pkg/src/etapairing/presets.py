"""Named configuration presets for the bundled study datasets.

Each preset is a partial configuration merged onto the defaults; the names
identify the standard figure-ready outputs this package generates.
"""

from __future__ import annotations

PRESETS: dict[str, dict] = {
    # Field-free spectrum scatter data (pairs with the default system).
    "fig1a": {},
    # Resonant pump, no control: steady-state pairing plateau.
    "fig1b": {
        "pulse": {"phi0": 0.2, "omega_p": 19.1, "n_p": 54, "t_l": 5.0, "t_r": 5.0},
        "outputs": {"decompose_final": True},
    },
    # Pump-parameter grids: uncontrolled max/final and controlled final.
    "fig2": {
        "scan": {
            "omega_min": 15.0,
            "omega_max": 25.0,
            "omega_step": 0.1,
            "phi0_min": 0.05,
            "phi0_max": 0.60,
            "phi0_step": 0.05,
            "modes": ["lyapunov_up"],
        },
    },
    # Off-resonant seed with feedback enhancement; field ready for STFT.
    "fig3": {
        "pulse": {"phi0": 0.2, "omega_p": 18.0, "n_p": 54, "t_l": 5.0, "t_r": 5.0},
        "control": {"mode": "lyapunov_up", "policy": "windowed_average"},
        "outputs": {"decompose_final": True},
        "stft": {},
    },
    # Enhancement versus activation time for a weakly excited pump.
    "fig4": {
        "pulse": {"phi0": 0.4, "omega_p": 17.0, "n_p": 54, "t_l": 5.0, "t_r": 5.0},
        "sweep": {
            "t_act_min": 5.0,
            "t_act_max": 30.0,
            "t_act_step": 0.25,
            "direction": "max",
            "mode": "lyapunov_up",
        },
    },
    # Double pulse followed by the suppressing feedback law.
    "fig5": {
        "pulse": {"phi0": 0.2, "omega_p": 19.1, "n_p": 54, "t_l": 5.0, "t_r": 5.0, "double": True},
        "control": {"mode": "lyapunov_down", "policy": "post_delay_positive_integral"},
    },
    # Suppression versus activation time (minimum marks the optimum).
    "fig5b": {
        "pulse": {"phi0": 0.2, "omega_p": 19.1, "n_p": 54, "t_l": 5.0, "t_r": 5.0, "double": True},
        "sweep": {
            "t_act_min": 28.0,
            "t_act_max": 55.0,
            "t_act_step": 0.25,
            "direction": "min",
            "mode": "lyapunov_down",
        },
    },
    # Robustness to smoothing the field around activation.
    "fig6": {
        "pulse": {"phi0": 0.2, "omega_p": 18.0, "n_p": 54, "t_l": 5.0, "t_r": 5.0},
        "control": {"mode": "lyapunov_up", "policy": "windowed_average"},
        "evolve": {"smooth_sigmas_periods": [0.05, 0.1, 0.2]},
    },
    # Robustness to the switch-off interval on the extended horizon.
    "fig7": {
        "pulse": {"phi0": 0.2, "omega_p": 18.0, "n_p": 54, "t_l": 5.0, "t_r": 5.0},
        "control": {"mode": "lyapunov_up", "policy": "windowed_average"},
        "evolve": {
            "extended_horizon": 20.0,
            "switch_off_intervals": [[-5.0, 0.0], [0.0, 5.0], [5.0, 10.0]],
        },
    },
}


def get_preset(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None
