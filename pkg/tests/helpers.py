"""Shared test fixtures that are plain objects rather than pytest fixtures."""

from nomafd.channel import (ScenarioConfig, budgets_from_config, fairness_weights,
                            generate_channels, generate_scenario)


class Instance:
    def __init__(self, seed=0, **overrides):
        self.config = ScenarioConfig(**overrides)
        self.scenario = generate_scenario(self.config, seed)
        self.channels = generate_channels(self.scenario)
        self.alpha = fairness_weights(self.scenario).alpha
        self.budgets = budgets_from_config(self.config)

    @property
    def m(self):
        return self.config.num_uplink

    @property
    def n(self):
        return self.config.num_downlink

    @property
    def f(self):
        return self.config.num_subcarriers
