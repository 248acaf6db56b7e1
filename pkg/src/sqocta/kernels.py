"""Numba inner loops for the Metropolis and path-integral samplers.

All kernels use a fixed sequential proposal order (site order within a
sweep, slice-major for worldlines) and consume exactly one pre-drawn
uniform per proposal, so trajectories are bit-reproducible functions of
(initial state, control arrays, uniforms).

The classical kernel uses the Metropolis rule min(1, exp(-dE/T)) and
maintains exact integer accumulators (sum_sigma, sum_AFM, sum_FM) so the
energy can be reconstructed for any couplings without floating-point
drift.

The worldline kernels use heat-bath acceptance 1/(1 + exp(dS)), which
satisfies detailed balance with respect to the same action.  The bare
Metropolis rule always accepts zero-cost moves, and under a fixed
sequential slice order that drags imaginary-time kinks deterministically
around the periodic ring, stalling equilibration of the kink density
(verified against exact enumeration on a single-site ring); heat-bath
randomizes those moves and removes the pathology.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "metropolis_run",
    "greedy_pass",
    "pimc_single_run",
    "pimc_chain_run",
]


@njit(cache=True)
def metropolis_run(spins, fm_ptr, fm_idx, afm_ptr, afm_idx, beta_b, beta_j1, beta_j0, u, sums):
    """Run len(beta_b) sequential-order Metropolis sweeps.

    beta_* are per-sweep coefficients (already multiplied by 1/T);
    u has shape (n_sweeps, n_spins); sums is the int64[3] accumulator
    (sum_sigma, sum_AFM, sum_FM), updated in place.
    """
    n_sweeps = beta_b.shape[0]
    n = spins.shape[0]
    for t in range(n_sweeps):
        bb = beta_b[t]
        b1 = beta_j1[t]
        b0 = beta_j0[t]
        for i in range(n):
            h_fm = 0
            for k in range(fm_ptr[i], fm_ptr[i + 1]):
                h_fm += spins[fm_idx[k]]
            h_afm = 0
            for k in range(afm_ptr[i], afm_ptr[i + 1]):
                h_afm += spins[afm_idx[k]]
            s = spins[i]
            d = -2.0 * s * (bb + b1 * h_afm - b0 * h_fm)
            if d <= 0.0 or u[t, i] < np.exp(-d):
                spins[i] = -s
                sums[0] -= 2 * s
                sums[1] -= 2 * s * h_afm
                sums[2] -= 2 * s * h_fm


@njit(cache=True)
def greedy_pass(spins, fm_ptr, fm_idx, afm_ptr, afm_idx, b, j1, j0, sums):
    """One deterministic pass flipping only strictly energy-lowering spins
    (T -> 0 readout relaxation).  Returns the number of flips."""
    n = spins.shape[0]
    flips = 0
    for i in range(n):
        h_fm = 0
        for k in range(fm_ptr[i], fm_ptr[i + 1]):
            h_fm += spins[fm_idx[k]]
        h_afm = 0
        for k in range(afm_ptr[i], afm_ptr[i + 1]):
            h_afm += spins[afm_idx[k]]
        s = spins[i]
        d = -2.0 * s * (b + j1 * h_afm - j0 * h_fm)
        if d < 0.0:
            spins[i] = -s
            sums[0] -= 2 * s
            sums[1] -= 2 * s * h_afm
            sums[2] -= 2 * s * h_fm
            flips += 1
    return flips


@njit(cache=True)
def pimc_single_run(wl, fm_ptr, fm_idx, afm_ptr, afm_idx, a_b, a_j1, a_j0, k_tau, u):
    """Run len(a_b) single-spin worldline sweeps.

    One sweep proposes one flip per (slice, site).  a_* are per-sweep
    spatial action coefficients (beta/L_tau times the couplings), k_tau
    the per-sweep imaginary-time coupling; u has shape
    (n_sweeps, L_tau, n_spins).
    """
    n_sweeps = a_b.shape[0]
    n_slices, n = wl.shape
    for t in range(n_sweeps):
        ab = a_b[t]
        a1 = a_j1[t]
        a0 = a_j0[t]
        kt = k_tau[t]
        for k in range(n_slices):
            up = k + 1 if k + 1 < n_slices else 0
            dn = k - 1 if k >= 1 else n_slices - 1
            for i in range(n):
                h_fm = 0
                for m in range(fm_ptr[i], fm_ptr[i + 1]):
                    h_fm += wl[k, fm_idx[m]]
                h_afm = 0
                for m in range(afm_ptr[i], afm_ptr[i + 1]):
                    h_afm += wl[k, afm_idx[m]]
                s = wl[k, i]
                d = -2.0 * s * (ab + a1 * h_afm - a0 * h_fm) + 2.0 * kt * s * (
                    wl[up, i] + wl[dn, i]
                )
                if u[t, k, i] * (1.0 + np.exp(d)) < 1.0:
                    wl[k, i] = -s


@njit(cache=True)
def pimc_chain_run(wl, chain_spins, ext_ptr, ext_src, ext_dst, a_b, a_j1, k_tau, u):
    """Run len(a_b) collective-chain worldline sweeps.

    One sweep proposes, per (slice, chain), flipping all spins of that
    chain within that slice.  Intra-chain FM bonds never enter the move
    cost; only the field, external AFM bonds and time links do.
    u has shape (n_sweeps, L_tau, n_chains).
    """
    n_sweeps = a_b.shape[0]
    n_slices = wl.shape[0]
    n_chains, chain_len = chain_spins.shape
    for t in range(n_sweeps):
        ab = a_b[t]
        a1 = a_j1[t]
        kt = k_tau[t]
        for k in range(n_slices):
            up = k + 1 if k + 1 < n_slices else 0
            dn = k - 1 if k >= 1 else n_slices - 1
            for c in range(n_chains):
                dz = 0
                dt = 0
                for l in range(chain_len):
                    i = chain_spins[c, l]
                    s = wl[k, i]
                    dz += s
                    dt += s * (wl[up, i] + wl[dn, i])
                hx = 0
                for m in range(ext_ptr[c], ext_ptr[c + 1]):
                    hx += wl[k, ext_src[m]] * wl[k, ext_dst[m]]
                d = -2.0 * (ab * dz + a1 * hx) + 2.0 * kt * dt
                if u[t, k, c] * (1.0 + np.exp(d)) < 1.0:
                    for l in range(chain_len):
                        i = chain_spins[c, l]
                        wl[k, i] = -wl[k, i]
