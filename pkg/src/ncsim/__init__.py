"""ncsim: a desk-scale emulator of subthreshold neuromorphic circuits.

Log-domain filters, adaptive integrate-and-fire neurons, dynamic synapses,
bi-stable stochastic plasticity, and an address-event routing fabric, glued
together by a deterministic fixed-step/event-queue hybrid engine.
"""

__version__ = "0.1.0"

from .logdomain import FilterParams, FilterState, FilterVariant
from .neuron import NeuronParams, NeuronState
from .synapse import SynapseParams, SynapseState
from .plasticity import PlasticityParams, PlasticSynapseState
from .aer import AddressEvent, ArbiterConfig, RoutingTable
from .network import ConnectionSpec, NetworkSpec, PopulationSpec, SlotSpec
from .engine import SimConfig, SpikeRecord

__all__ = [
    "FilterParams",
    "FilterState",
    "FilterVariant",
    "NeuronParams",
    "NeuronState",
    "SynapseParams",
    "SynapseState",
    "PlasticityParams",
    "PlasticSynapseState",
    "AddressEvent",
    "ArbiterConfig",
    "RoutingTable",
    "ConnectionSpec",
    "NetworkSpec",
    "PopulationSpec",
    "SlotSpec",
    "SimConfig",
    "SpikeRecord",
]
