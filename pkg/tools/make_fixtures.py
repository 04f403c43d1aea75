"""Regenerate the hydrogen-chain FCIDUMP fixtures shipped in src/rqkd/data.

Linear H_n chains, 1.0 Angstrom spacing, STO-6G, RHF orbitals, no frozen core.
Requires pyscf (not a runtime dependency of the package).
"""

from pathlib import Path

from pyscf import gto, scf
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "src" / "rqkd" / "data"


def main() -> None:
    for n in (2, 4, 6, 8):
        atoms = "; ".join(f"H 0 0 {i * 1.0:.1f}" for i in range(n))
        mol = gto.M(atom=atoms, basis="sto-6g", unit="Angstrom", verbose=0)
        mf = scf.RHF(mol)
        mf.conv_tol = 1e-12
        mf.kernel()
        path = OUT / f"h{n}.fcidump"
        fcidump.from_scf(mf, str(path), tol=1e-15, float_format=" %.16e")
        print(path.name, mf.e_tot)


if __name__ == "__main__":
    main()
