"""Perturbed particle-in-a-box energy spectra for VAE latent spaces."""

from .assign import AssignConfig, EnergyAssignment, assign_energies, energy_loss, quantum_number, train_assigner
from .boxspectrum import BoxSpec, SpectrumTable, build_table, coupling, e0, e1_closed, e1_quad, phi
from .datagen import Dataset, DatasetSpec, generate, standardize
from .degeneracy import embedding_alignment, report, run_replicas, spectrum_distance
from .vae import VAE, LatentEmbedding, VaeConfig, covariance_rank, encode_dataset, train_vae

__version__ = "0.1.0"
