"""Fit one random-utility agent per occupant and replay the energy game.

Agents choose each resource's status minute by minute; usage, switches and
points are rebuilt from their own choices, and each day is scored against
the occupant's baseline.

Run: python demos/game_simulation.py
"""
import numpy as np

from seqchoice.data import Memoryless, ResourceKind, Scenario, SynthConfig, synth_generate
from seqchoice.game_sim import ProfileSettings, fit_agent_profiles, simulate_game
from seqchoice.points import compute_baselines

fan = ResourceKind.CEILING_FAN
ds = synth_generate(SynthConfig(occupants=2, days=8, planted_signal=Memoryless("ext_humidity_pct", 70.0),
                                noise_flip_prob=0.02, seed=5))
days = np.unique(ds.timestamps.astype("datetime64[D]")).astype(object)
# a full pre-game week gives weekday and weekend baselines; the game runs on day eight
pre, game = ds.between(days[0], days[6]), ds.between(days[7], days[7])

agents = fit_agent_profiles(pre, ProfileSettings(scenario=Scenario.SENSOR_FREE), [fan])
trace = simulate_game(agents, game, 1440, compute_baselines(pre), installed=[fan])
for a in trace.agents:
    on = np.nanmean(a.actions[:, fan.index])
    day, pts = a.daily_points[-1]
    print(f"{a.occupant_id} on {day}: fan on {on:.0%} of the day, {pts[fan]:+.1f} points")
