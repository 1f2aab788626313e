"""Rebuild tests/data/lp_sc105.mtx from the SC105 LP shipped in scipy's sdist.

The scipy source tarball carries SC105 as ``benchmarks/benchmarks/
linprog_benchmark_files/SC105.npz`` with equality rows ``A_eq`` (45 x 103) and
inequality rows ``A_ub x <= b_ub`` (60 x 103). The standard-form matrix adds
one slack column per inequality row:

    [[A_eq, 0], [A_ub, I]]   ->   105 x 163, 340 nonzeros

Usage: python scripts/build_lpsc105.py SC105.npz tests/data/lp_sc105.mtx
"""
import sys

import numpy as np
import scipy.sparse as sp

from clustermg import FeatureMatrix, write_matrix_market


def main(src, dst):
    d = np.load(src, allow_pickle=True)
    A_eq, A_ub = sp.csr_matrix(d["A_eq"]), sp.csr_matrix(d["A_ub"])
    n_ub = A_ub.shape[0]
    X = sp.bmat([[A_eq, None], [A_ub, sp.identity(n_ub)]], format="csr")
    X.eliminate_zeros()
    write_matrix_market(dst, FeatureMatrix(X),
                        comment="SC105 in standard form: [[A_eq, 0], [A_ub, I]]")
    print(f"{dst}: {X.shape[0]} x {X.shape[1]}, {X.nnz} nonzeros")


if __name__ == "__main__":
    main(*sys.argv[1:3])
