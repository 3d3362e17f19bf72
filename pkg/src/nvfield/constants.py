"""Ground-state spin constants of the NV center.

All frequencies are in MHz and all field-coupling rates in MHz/Gauss, so
Hamiltonians built from these constants are in MHz for fields in Gauss.
Only the zero-field splitting is fixed by the measurement context (2870 MHz);
the remaining parameters are configuration values with literature defaults
and are never hard-coded inside operations.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

# Literature defaults for 14N NV- in diamond.
ZFS_D_MHZ = 2870.0            # zero-field splitting of |0> -> |+-1>
GAMMA_E_MHZ_PER_G = 2.8025    # electron Zeeman rate, g_e mu_B / h
HYPERFINE_A_MHZ = -2.16       # isotropic 14N hyperfine coupling
QUADRUPOLE_Q_MHZ = -4.96      # 14N quadrupole splitting
GAMMA_N_MHZ_PER_G = 3.077e-4  # 14N nuclear Zeeman rate (opaque configurable rate)


@dataclass(frozen=True)
class PhysicalConstants:
    """Spin-Hamiltonian parameter set (MHz, MHz/Gauss)."""

    zfs_d_mhz: float = ZFS_D_MHZ
    gamma_e_mhz_per_g: float = GAMMA_E_MHZ_PER_G
    hyperfine_a_mhz: float = HYPERFINE_A_MHZ
    quadrupole_q_mhz: float = QUADRUPOLE_Q_MHZ
    gamma_n_mhz_per_g: float = GAMMA_N_MHZ_PER_G

    def __post_init__(self):
        if not self.zfs_d_mhz > 0:
            raise ValueError(f"zfs_d_mhz must be positive, got {self.zfs_d_mhz}")
        if not self.gamma_e_mhz_per_g > 0:
            raise ValueError(
                f"gamma_e_mhz_per_g must be positive, got {self.gamma_e_mhz_per_g}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalConstants":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown constants: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
