from .generator import (PROTOCOL_PROFILES, DomainSpec, Sample, WorldBases, domain_attributes,
                        domain_transform, generate_domain, generate_heldout, identity_prototypes,
                        spec_from_profile, world_bases, world_basis)
from .dataset import MergedDataset, merge_single_task, split_probe_gallery, split_train_val
from .experiment_data import (DomainProtocol, ExperimentData, build_experiment_data,
                              dump_dataset, load_dataset, summarize_domains)
