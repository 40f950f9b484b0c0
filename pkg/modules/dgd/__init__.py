from .dropout import (DeterministicDGD, DomainGuidedDropout, DropoutPolicy, Mask, NoDropout,
                      StandardDropout, StochasticDGD, apply_test_scaling,
                      cumulative_keep_histogram, deterministic_mask, keep_probability,
                      policy_from_config, select_temperature, stochastic_mask)
