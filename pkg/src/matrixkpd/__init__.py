"""Matrix-based pairwise key pre-distribution for sensor networks."""

from .galois import Matrix, Modulus, MulCounter, Rng, gauss_solve
from .schemes import (
    Deployment,
    InvalidParams,
    NodeShare,
    PublicMatrix,
    Scheme,
    SchemeParams,
    derive_key,
    oracle_key_matrix,
    reconstruct_column,
    setup,
    validate_params,
)
from .protocol import decode_message, encode_message, handshake, run_all_pairs
from .attack import ambiguity_witness, assemble_system, capture, predict_key, recover, security_experiment

__version__ = "0.1.0"
