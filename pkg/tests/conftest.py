"""Shared fixtures: a small chip specimen so most tests stay fast."""

import pytest

from mramtrng.device import ChipConfig, EnvCoeffs, MarginalAddressPopulation, TauComponent, create_chip


def small_config(num_addresses: int = 2048) -> ChipConfig:
    """A scaled-down copy of the default recipe (same mixture shape)."""
    return ChipConfig(
        chip_id="unit-test",
        num_addresses=num_addresses,
        tau_components=(
            TauComponent(0.3457, 0.9, 0.3),
            TauComponent(0.3221, 1.78, 0.03),
            TauComponent(0.3322, 4.3, 0.5),
        ),
        metastable_frac=0.1,
        bias_alpha=4.0,
        bias_beta=4.0,
        marginal=MarginalAddressPopulation(weight=0.0065),
        env=EnvCoeffs(),
    )


@pytest.fixture(scope="session")
def small_chip():
    return create_chip(small_config(), seed=7)


@pytest.fixture()
def fresh_small_chip():
    return create_chip(small_config(), seed=7)
