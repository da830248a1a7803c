"""Shared fixtures: packaged networks/scenarios and small toy systems."""

from importlib import resources

import pytest

from transogf import fileio, power
from transogf.model import (GasFiredUnit, GasLoad, GasNetwork, Junction, Pipe,
                            Scenario, Supplier)

FIXDIR = resources.files("transogf") / "fixtures"


@pytest.fixture(scope="session")
def net6():
    return fileio.load_network(FIXDIR / "net6.json")


@pytest.fixture(scope="session")
def net6_scenario():
    return fileio.load_scenario(FIXDIR / "net6_scenario.json")


@pytest.fixture(scope="session")
def net6_fuel(net6, net6_scenario):
    gas, pw = net6
    return power.fuel_series(gas, net6_scenario, pw)


@pytest.fixture(scope="session")
def net10():
    return fileio.load_network(FIXDIR / "net10.json")


@pytest.fixture(scope="session")
def net10_scenario():
    return fileio.load_scenario(FIXDIR / "net10_scenario.json")


@pytest.fixture(scope="session")
def net10_fuel(net10, net10_scenario):
    gas, pw = net10
    return power.fuel_series(gas, net10_scenario, pw)


def toy_gas(load_kcfhr=400.0, n_pipes=1, length=10000.0, with_unit=False,
            fuel_kcfhr=0.0):
    """Chain network J0 -> J1 (-> J2): supplier at the head, draw at the tail."""
    junctions = [Junction(id=f"J{k}", pr_min=3.0e6, pr_max=6.0e6)
                 for k in range(n_pipes + 1)]
    pipes = [Pipe(id=f"P{k}", from_junction=f"J{k}", to_junction=f"J{k + 1}",
                  length=length, diameter=0.5) for k in range(n_pipes)]
    tail = f"J{n_pipes}"
    loads = [GasLoad(id="L", junction=tail, profile=((0.0, load_kcfhr),))] \
        if load_kcfhr else []
    units = [GasFiredUnit(id="U", bus="B", junction=tail, heat_rate=10.0)] \
        if with_unit else []
    suppliers = [Supplier(id="S", junction="J0", v_min=0.0, v_max=5000.0,
                          cost=1.0)]
    return GasNetwork(junctions=tuple(junctions), pipes=tuple(pipes),
                      suppliers=tuple(suppliers), loads=tuple(loads),
                      units=tuple(units))


def toy_scenario(hours=1, dt_s=900.0, **kw):
    return Scenario(horizon_hours=hours, dt_s=dt_s, dx_m=5000.0, **kw)
