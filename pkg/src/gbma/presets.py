"""Named scenario presets, sized to finish in minutes on a workstation.

Each preset is plain config text that ``gbma preset --show`` prints and
``gbma run`` accepts.  Inline comments explain values that are a modelling
choice rather than an obvious setting.
"""

from __future__ import annotations

from .config import from_text

_RIDGE = """\
[data]
source = synthetic  # set data.source=msd and GBMA_DATA_DIR for the song-year data
d = 10
seed = 1
[loss]
kind = ridge
lambda = 0.5
[run]
k_max = 300
reps = 200
seed = 0
theta0 = zeros
"""

PRESETS = {
    "fig2a": """\
name = fig2a
figure = equal gains, E_N = 1, several N (logspace)
notes = empirical excess risk with the strongly convex and equal-gain convex bounds
""" + _RIDGE + """\
beta = auto:convex_equal  # keeps both bounds feasible
[channel]
kind = unit
[energy]
kind = const
value = 1.0
[noise]
sigma_w_sq = 100.0
[sweep]
param = nodes.N
values = 100,316,1000  # log-spaced
""",
    "fig2b": """\
name = fig2b
figure = equal gains, N = 500, E_N = N^(eps-2) for several eps
""" + _RIDGE + """\
beta = auto:convex_equal
[nodes]
N = 500
[channel]
kind = unit
[energy]
kind = powerlaw
[noise]
sigma_w_sq = 1.0
[sweep]
param = energy.epsilon
values = 0.25,0.5,1.0
""",
    "fig3a": """\
name = fig3a
figure = Rayleigh fading, E_N = 1, several N (logspace)
""" + _RIDGE + """\
beta = auto:strong  # safety 0.9 of the strongly convex limit
[channel]
kind = rayleigh
scale = 1.0
[energy]
kind = const
value = 1.0
[noise]
sigma_w_sq = 100.0
[bounds]
B_N = auto  # sampled envelope of the local gradient norms
[sweep]
param = nodes.N
values = 100,316,1000
""",
    "fig3b": """\
name = fig3b
figure = Rayleigh fading, N = 500, E_N = N^(eps-2) for several eps
""" + _RIDGE + """\
beta = auto:strong
[nodes]
N = 500
[channel]
kind = rayleigh
scale = 1.0
[energy]
kind = powerlaw
[noise]
sigma_w_sq = 1.0
[bounds]
B_N = auto
[sweep]
param = energy.epsilon
values = 0.25,0.5,1.0
""",
    "fig4": """\
name = fig4
figure = source localization, GBMA vs FDM-GD vs centralized GD
[data]
source = localization
seed = 0
[loss]
kind = localization
[field]
size = 100.0
source = 60.0,60.0
exclusion_radius = 8.0
A = 300.0
snr_db = -10.0  # measurement SNR
per_rep = true  # a fresh field per replication
[nodes]
N = 200
[channel]
kind = rayleigh
scale = 1.0
[energy]
kind = powerlaw
epsilon = 0.5
[fdm]
energy = 1.0
[noise]
sigma_w_sq = 0.01
[run]
beta = 1.6  # no certified designer for this loss
k_max = 600
theta0 = offset:2.4,-1.8  # start 3 m from the source, inside the exclusion zone
reps = 200
[sweep]
param = run.algorithm
values = gbma,fdm,centralized
""",
    "fig5": """\
name = fig5
figure = GBMA vs FDM-GD vs centralized GD, N = 800
""" + _RIDGE + """\
beta = auto:strong  # one stepsize (the GBMA designer) shared by all three runs
[nodes]
N = 800
[channel]
kind = rayleigh
scale = 1.0
[energy]
kind = exponent
p = -1.5  # GBMA at E_N = N^-1.5
[fdm]
energy = 1.0  # FDM-GD at E = 1
[noise]
snr_db = -50.0  # GBMA operating point, SNR computed at theta0
[sweep]
param = run.algorithm
values = gbma,fdm,centralized
""",
    "fig6": """\
name = fig6
figure = total transmit energy to reach excess risk 1e-2 versus N, E_N = N^-1.5
[data]
source = localization
seed = 0
[loss]
kind = localization
[field]
size = 100.0
source = 60.0,60.0
exclusion_radius = 8.0
A = 300.0
snr_db = -10.0
per_rep = true
[channel]
kind = rayleigh
scale = 1.0
[energy]
kind = powerlaw  # E_N = N^-1.5
epsilon = 0.5
[noise]
sigma_w_sq = 0.01
[run]
beta = 1.6
k_max = 600
theta0 = offset:2.4,-1.8
reps = 50
[study]
kind = energy
target = 0.01
[sweep]
param = nodes.N
values = 100,300,1000
""",
}


def preset_text(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]


def load_preset(name):
    return from_text(preset_text(name), f"preset:{name}")
