import math

import pytest

from heralded.montecarlo import (ChannelSpec, DetectorSpec, ExperimentConfig, PairStatistics,
                                 PumpSpec)


def make_config(p=1e-3, t_signal=0.39, t_idler=0.45, eta_signal=0.5, eta_idler=0.1,
                topology="triggered", duration=0.05, seed=1, modes=math.inf, dead_time=0.0,
                dark_rate=0.0, dark_prob=0.0, jitter=150e-12, mode="pulsed", **kw):
    idler_kind = "free-running" if topology == "free" else "gated"
    return ExperimentConfig(
        PumpSpec(mode=mode),
        ChannelSpec("signal", t_signal),
        ChannelSpec("idler", t_idler),
        DetectorSpec("free-running", eta_signal, dark_rate=dark_rate, dead_time=dead_time,
                     jitter=jitter),
        DetectorSpec(idler_kind, eta_idler, dark_prob_per_ns=dark_prob, jitter=jitter),
        PairStatistics(p, modes), topology=topology, duration=duration, seed=seed, **kw)


@pytest.fixture
def config_factory():
    return make_config
