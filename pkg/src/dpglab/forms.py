"""Element matrices for the ultra-weak first-order system.

For the system

    grad u - beta u + C sigma = C fvec,   div sigma + gamma u = f,   u|_bnd = 0

the broken (per-element) bilinear form is

    b(u, v) = (u, -div tau - beta . tau + gamma v)_T + (sigma, C tau - grad v)_T
              + <uhat, tau . n_T>_dT + <sighat, v>_dT

with test pair v = (v, tau) in P^{k1}(T) x P^{k2}(T)^2 and load
F(v) = (f, v) + (fvec, C tau).  Three test inner products are supported:

* quasi-optimal:  |(-div tau - beta.tau + gamma v)|^2
                  + |C^{1/2} tau - C^{-1/2} grad v|^2 + |C^{1/2} tau|^2 + |v|^2
* standard:       |C^{-1/2} grad v|^2 + |v|^2 + |div tau|^2 + |C^{1/2} tau|^2
* simple:         |grad v|^2 + |v|^2 + |div tau|^2 + |tau|^2

The mixed C^{+-1/2} term is expanded, so no matrix square roots are needed.
Only the quasi-optimal product sees the convection term.

All bases are scaled by 1 / sqrt(det J) per element, which cancels the
Jacobian factor in every volume pairing of two scaled functions.  Test rows
are ordered [v block | tau_x block | tau_y block]; trial columns follow
:class:`dpglab.spaces.TrialLayout`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .mesh import LOCAL_EDGES, Mesh
from .refelem import (REF_VERTICES, edge_quadrature, lagrange_1d,
                      legendre_orthonormal_1d, scalar_basis, triangle_quadrature)
from .spaces import TrialLayout, trial_layout


class TestNorm(Enum):
    __test__ = False  # not a pytest collection target

    QUASI_OPTIMAL = "qopt"
    STANDARD = "std"
    SIMPLE = "simple"

    @classmethod
    def from_name(cls, name: str) -> "TestNorm":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown test norm {name!r}; expected qopt|std|simple")


@dataclass(frozen=True)
class Coefficients:
    """Pointwise-evaluable coefficients C (SPD matrix), beta, gamma.

    Discontinuities must be aligned with the mesh so that volume quadrature
    points never straddle a jump.
    """

    matrix: Callable[[np.ndarray], np.ndarray]  # (n,2,2)
    advection: Callable[[np.ndarray], np.ndarray]  # (n,2)
    reaction: Callable[[np.ndarray], np.ndarray]  # (n,)

    @staticmethod
    def constant(C=None, beta=(0.0, 0.0), gamma=0.0) -> "Coefficients":
        Cm = np.eye(2) if C is None else np.asarray(C, dtype=float)
        bv = np.asarray(beta, dtype=float)
        g = float(gamma)
        return Coefficients(
            matrix=lambda x: np.broadcast_to(Cm, (len(x), 2, 2)).copy(),
            advection=lambda x: np.broadcast_to(bv, (len(x), 2)).copy(),
            reaction=lambda x: np.full(len(x), g),
        )


@dataclass
class ElementSystem:
    """Per-element trial-to-test matrix, test Gram matrix and load."""

    B: np.ndarray
    G: np.ndarray
    F: np.ndarray
    gather: np.ndarray | None = None


def _inv2x2(C: np.ndarray) -> np.ndarray:
    det = C[..., 0, 0] * C[..., 1, 1] - C[..., 0, 1] * C[..., 1, 0]
    inv = np.empty_like(C)
    inv[..., 0, 0] = C[..., 1, 1]
    inv[..., 0, 1] = -C[..., 0, 1]
    inv[..., 1, 0] = -C[..., 1, 0]
    inv[..., 1, 1] = C[..., 0, 0]
    inv /= det[..., None, None]
    return inv


class ElementAssembler:
    """Batched assembly of B, G and F over (a subset of) the elements.

    Reference basis/quadrature tables are computed once; geometry and
    coefficient values are evaluated per call for the requested elements,
    which keeps peak memory proportional to the chunk size.
    """

    def __init__(self, mesh: Mesh, coeffs: Coefficients, p: int,
                 variant: str = "standard", k1: int | None = None,
                 k2: int | None = None, volume_exactness: int | None = None,
                 edge_exactness: int | None = None):
        if p < 0:
            raise ValueError("trial degree must be >= 0")
        self.mesh = mesh
        self.coeffs = coeffs
        self.p = p
        self.variant = variant
        self.k1 = p + 2 if k1 is None else int(k1)
        self.k2 = p + 2 if k2 is None else int(k2)
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError("test degrees must be >= 1")
        self.layout: TrialLayout = trial_layout(p, variant)
        kmax = max(self.k1, self.k2)
        pu = p + 1 if variant == "augmented" else p

        vol_ex = 2 * kmax + 4 if volume_exactness is None else volume_exactness
        edge_ex = 2 * kmax + 2 if edge_exactness is None else edge_exactness
        if vol_ex < max(2 * kmax, pu + kmax):
            raise ValueError(
                f"volume quadrature exactness {vol_ex} insufficient for trial degree "
                f"{pu} with test degrees ({self.k1},{self.k2})")
        if edge_ex < (p + 1) + kmax:
            raise ValueError(
                f"edge quadrature exactness {edge_ex} insufficient for trace degree "
                f"{p + 1} with test degrees ({self.k1},{self.k2})")
        self.rule = triangle_quadrature(vol_ex)
        self.erule = edge_quadrature(edge_ex)

        # reference tables at volume quadrature points
        self.U = scalar_basis(pu).eval(self.rule.points)
        self.S = self.U if pu == p else scalar_basis(p).eval(self.rule.points)
        self.V1, self.dV1 = scalar_basis(self.k1).tables(self.rule.points)
        if self.k2 == self.k1:
            self.V2, self.dV2 = self.V1, self.dV1
        else:
            self.V2, self.dV2 = scalar_basis(self.k2).tables(self.rule.points)
        self.n1 = self.V1.shape[1]
        self.n2 = self.V2.shape[1]
        self.n_test = self.n1 + 2 * self.n2

        # reference tables on the three local edges
        s = self.erule.points
        self.V1E, self.V2E = [], []
        for j, (va, vb) in enumerate(LOCAL_EDGES):
            pts = (1 - s)[:, None] * REF_VERTICES[va] + s[:, None] * REF_VERTICES[vb]
            self.V1E.append(scalar_basis(self.k1).eval(pts))
            self.V2E.append(scalar_basis(self.k2).eval(pts)
                            if self.k2 != self.k1 else self.V1E[-1])
        q = p + 1
        self.lag_fwd = lagrange_1d(q, s)          # trace nodal values, lo->hi param
        self.lag_rev = lagrange_1d(q, 1.0 - s)
        self.leg_fwd = legendre_orthonormal_1d(p, s)
        self.leg_rev = legendre_orthonormal_1d(p, 1.0 - s)

        # local uhat column of 1D node z (t-order) on local edge j
        nt = mesh.n_triangles
        lay = self.layout
        cols = np.empty((nt, 3, q + 1), dtype=np.int64)
        for j, (a, b) in enumerate(LOCAL_EDGES):
            flip = mesh.tri_edge_flip[:, j]
            cols[:, j, 0] = lay.uh0 + np.where(flip, b, a)
            cols[:, j, q] = lay.uh0 + np.where(flip, a, b)
            if p > 0:
                cols[:, j, 1:q] = lay.uh0 + 3 + j * p + np.arange(p)
        self._uhat_cols = cols

    # -- helpers -----------------------------------------------------------
    def _geom(self, els: np.ndarray):
        m = self.mesh
        X = np.einsum("ecd,qd->eqc", m.jacobians[els], self.rule.points)
        X += m.shifts[els][:, None, :]
        return m.dets[els], m.inv_ts[els], X

    def _coeff_values(self, X: np.ndarray):
        flat = X.reshape(-1, 2)
        shape = X.shape[:2]
        gam = np.asarray(self.coeffs.reaction(flat)).reshape(shape)
        beta = np.asarray(self.coeffs.advection(flat)).reshape(shape + (2,))
        C = np.asarray(self.coeffs.matrix(flat)).reshape(shape + (2, 2))
        return gam, beta, C

    def _edge_data(self, els: np.ndarray, j: int):
        m = self.mesh
        return (m.tri_edge_lengths[els, j], m.tri_edge_normals[els, j],
                m.tri_edge_signs[els, j].astype(float), m.tri_edge_flip[els, j])

    def _all(self, elements) -> np.ndarray:
        if elements is None:
            return np.arange(self.mesh.n_triangles)
        return np.asarray(elements)

    # -- B -----------------------------------------------------------------
    def b_matrices(self, elements=None) -> np.ndarray:
        els = self._all(elements)
        lay = self.layout
        det, inv_t, X = self._geom(els)
        gam, beta, C = self._coeff_values(X)
        w = self.rule.weights
        sdet = np.sqrt(det)

        Gv = np.einsum("ecd,qid->eqic", inv_t, self.dV1)
        Gt = Gv if self.dV2 is self.dV1 else np.einsum("ecd,qid->eqic", inv_t, self.dV2)

        B = np.zeros((len(els), self.n_test, lay.total))
        rv = slice(0, self.n1)
        rt = [slice(self.n1, self.n1 + self.n2),
              slice(self.n1 + self.n2, self.n1 + 2 * self.n2)]
        cu = slice(lay.u0, lay.u0 + lay.nu)
        cs = [slice(lay.sx0, lay.sx0 + lay.ns), slice(lay.sy0, lay.sy0 + lay.ns)]

        B[:, rv, cu] = np.einsum("q,eq,qi,qj->eij", w, gam, self.V1, self.U)
        for c in range(2):
            adj = -Gt[:, :, :, c] - beta[:, :, c, None] * self.V2[None]
            B[:, rt[c], cu] = np.einsum("q,eqi,qj->eij", w, adj, self.U)
        for d in range(2):
            B[:, rv, cs[d]] = -np.einsum("q,eqi,qj->eij", w, Gv[:, :, :, d], self.S)
            for c in range(2):
                B[:, rt[c], cs[d]] = np.einsum("q,eq,qi,qj->eij", w, C[:, :, c, d],
                                               self.V2, self.S)

        we = self.erule.weights
        for j in range(3):
            length, nrm, sgn, flip = self._edge_data(els, j)
            lag = np.where(flip[:, None, None], self.lag_rev[None], self.lag_fwd[None])
            leg = np.where(flip[:, None, None], self.leg_rev[None], self.leg_fwd[None])
            # <uhat, tau . n_T>: scatter into vertex/edge-node columns
            cols = self._uhat_cols[els, j]  # (m, p+2) columns within the trial block
            for c in range(2):
                contrib = np.einsum("k,e,ekz,ki->eiz", we, length * nrm[:, c] / sdet,
                                    lag, self.V2E[j])
                np.add.at(B, (np.arange(len(els))[:, None, None],
                              np.arange(*rt[c].indices(self.n_test))[None, :, None],
                              cols[:, None, :]), contrib)
            # <sighat, v> with orientation sign against the global edge normal
            fac = sgn * np.sqrt(length) / sdet
            contrib = np.einsum("k,e,ekm,ki->eim", we, fac, leg, self.V1E[j])
            c0 = lay.sh0 + j * (self.p + 1)
            B[:, rv, c0:c0 + self.p + 1] += contrib
        return B

    # -- G -----------------------------------------------------------------
    def gram(self, kind: TestNorm, elements=None) -> np.ndarray:
        els = self._all(elements)
        det, inv_t, X = self._geom(els)
        gam, beta, C = self._coeff_values(X)
        w = self.rule.weights

        Gv = np.einsum("ecd,qid->eqic", inv_t, self.dV1)
        Gt = Gv if self.dV2 is self.dV1 else np.einsum("ecd,qid->eqic", inv_t, self.dV2)

        G = np.zeros((len(els), self.n_test, self.n_test))
        rv = slice(0, self.n1)
        rt = [slice(self.n1, self.n1 + self.n2),
              slice(self.n1 + self.n2, self.n1 + 2 * self.n2)]

        if kind is TestNorm.SIMPLE:
            G[:, rv, rv] = (np.einsum("q,eqic,eqjc->eij", w, Gv, Gv)
                            + np.einsum("q,qi,qj->ij", w, self.V1, self.V1)[None])
            mass2 = np.einsum("q,qi,qj->ij", w, self.V2, self.V2)
            for c in range(2):
                for d in range(2):
                    blk = np.einsum("q,eqi,eqj->eij", w, Gt[:, :, :, c], Gt[:, :, :, d])
                    if c == d:
                        blk = blk + mass2[None]
                    G[:, rt[c], rt[d]] = blk
            return G

        Cinv = _inv2x2(C)
        if kind is TestNorm.STANDARD:
            CiGv = np.einsum("eqdc,eqic->eqid", Cinv, Gv)
            G[:, rv, rv] = (np.einsum("q,eqic,eqjc->eij", w, CiGv, Gv)
                            + np.einsum("q,qi,qj->ij", w, self.V1, self.V1)[None])
            for c in range(2):
                for d in range(2):
                    G[:, rt[c], rt[d]] = (
                        np.einsum("q,eqi,eqj->eij", w, Gt[:, :, :, c], Gt[:, :, :, d])
                        + np.einsum("q,eq,qi,qj->eij", w, C[:, :, c, d], self.V2, self.V2))
            return G

        if kind is not TestNorm.QUASI_OPTIMAL:
            raise ValueError(f"unknown test norm kind {kind!r}")
        # adjoint part: A(v,tau) = -div tau - beta . tau + gamma v
        CiGv = np.einsum("eqdc,eqic->eqid", Cinv, Gv)
        G[:, rv, rv] = (np.einsum("q,eq,qi,qj->eij", w, gam * gam, self.V1, self.V1)
                        + np.einsum("q,qi,qj->ij", w, self.V1, self.V1)[None]
                        + np.einsum("q,eqic,eqjc->eij", w, CiGv, Gv))
        adj = [-Gt[:, :, :, c] - beta[:, :, c, None] * self.V2[None] for c in range(2)]
        for c in range(2):
            blk = (np.einsum("q,eq,qi,eqj->eij", w, gam, self.V1, adj[c])
                   - np.einsum("q,eqi,qj->eij", w, Gv[:, :, :, c], self.V2))
            G[:, rv, rt[c]] = blk
            G[:, rt[c], rv] = np.swapaxes(blk, 1, 2)
        for c in range(2):
            for d in range(2):
                G[:, rt[c], rt[d]] = (
                    np.einsum("q,eqi,eqj->eij", w, adj[c], adj[d])
                    + 2.0 * np.einsum("q,eq,qi,qj->eij", w, C[:, :, c, d],
                                      self.V2, self.V2))
        return G

    # -- F -----------------------------------------------------------------
    def loads(self, f, fvec, elements=None) -> np.ndarray:
        els = self._all(elements)
        det, _, X = self._geom(els)
        sdet = np.sqrt(det)
        w = self.rule.weights
        F = np.zeros((len(els), self.n_test))
        flat = X.reshape(-1, 2)
        if f is not None:
            fv = np.asarray(f(flat)).reshape(X.shape[:2])
            F[:, :self.n1] = sdet[:, None] * np.einsum("q,eq,qi->ei", w, fv, self.V1)
        if fvec is not None:
            C = np.asarray(self.coeffs.matrix(flat)).reshape(X.shape[:2] + (2, 2))
            gv = np.asarray(fvec(flat)).reshape(X.shape[:2] + (2,))
            Cg = np.einsum("eqcd,eqd->eqc", C, gv)
            for c in range(2):
                sl = slice(self.n1 + c * self.n2, self.n1 + (c + 1) * self.n2)
                F[:, sl] = sdet[:, None] * np.einsum("q,eq,qi->ei", w, Cg[:, :, c], self.V2)
        return F

    # -- consistency residual ----------------------------------------------
    def residual_of_fields(self, u, sigma, f, fvec, elements=None) -> np.ndarray:
        """Per-element residual b((u, sigma, traces of u/sigma), test_i) - F_i
        for exact callables; vanishes to quadrature accuracy when (u, sigma)
        solves the system with data (f, fvec)."""
        els = self._all(elements)
        det, inv_t, X = self._geom(els)
        gam, beta, C = self._coeff_values(X)
        w = self.rule.weights
        sdet = np.sqrt(det)
        Gv = np.einsum("ecd,qid->eqic", inv_t, self.dV1)
        Gt = Gv if self.dV2 is self.dV1 else np.einsum("ecd,qid->eqic", inv_t, self.dV2)

        flat = X.reshape(-1, 2)
        uv = np.asarray(u(flat)).reshape(X.shape[:2])
        sv = np.asarray(sigma(flat)).reshape(X.shape[:2] + (2,))

        R = np.zeros((len(els), self.n_test))
        R[:, :self.n1] = sdet[:, None] * (
            np.einsum("q,eq,qi->ei", w, gam * uv, self.V1)
            - np.einsum("q,eqc,eqic->ei", w, sv, Gv))
        Cs = np.einsum("eqcd,eqd->eqc", C, sv)
        for c in range(2):
            sl = slice(self.n1 + c * self.n2, self.n1 + (c + 1) * self.n2)
            R[:, sl] = sdet[:, None] * (
                -np.einsum("q,eq,eqi->ei", w, uv, Gt[:, :, :, c])
                - np.einsum("q,eq,qi->ei", w, uv * beta[:, :, c], self.V2)
                + np.einsum("q,eq,qi->ei", w, Cs[:, :, c], self.V2))

        s = self.erule.points
        we = self.erule.weights
        for j, (va, vb) in enumerate(LOCAL_EDGES):
            pts = (1 - s)[:, None] * REF_VERTICES[va] + s[:, None] * REF_VERTICES[vb]
            XE = np.einsum("ecd,qd->eqc", self.mesh.jacobians[els], pts)
            XE += self.mesh.shifts[els][:, None, :]
            length, nrm, _, _ = self._edge_data(els, j)
            ue = np.asarray(u(XE.reshape(-1, 2))).reshape(XE.shape[:2])
            se = np.asarray(sigma(XE.reshape(-1, 2))).reshape(XE.shape[:2] + (2,))
            sn = np.einsum("eqc,ec->eq", se, nrm)
            R[:, :self.n1] += (length / sdet)[:, None] * \
                np.einsum("k,ek,ki->ei", we, sn, self.V1E[j])
            for c in range(2):
                sl = slice(self.n1 + c * self.n2, self.n1 + (c + 1) * self.n2)
                R[:, sl] += (length * nrm[:, c] / sdet)[:, None] * \
                    np.einsum("k,ek,ki->ei", we, ue, self.V2E[j])
        return R - self.loads(f, fvec, els)


def element_b_matrix(mesh: Mesh, t: int, p: int, coeffs: Coefficients,
                     variant: str = "standard", k1: int | None = None,
                     k2: int | None = None, **kw) -> np.ndarray:
    asm = ElementAssembler(mesh, coeffs, p, variant, k1, k2, **kw)
    return asm.b_matrices(np.array([t]))[0]


def element_gram(mesh: Mesh, t: int, k: int, kind: TestNorm,
                 coeffs: Coefficients, **kw) -> np.ndarray:
    asm = ElementAssembler(mesh, coeffs, p=max(k - 2, 0), k1=k, k2=k, **kw)
    return asm.gram(kind, np.array([t]))[0]


def element_load(mesh: Mesh, t: int, k: int, f, fvec,
                 coeffs: Coefficients, **kw) -> np.ndarray:
    asm = ElementAssembler(mesh, coeffs, p=max(k - 2, 0), k1=k, k2=k, **kw)
    return asm.loads(f, fvec, np.array([t]))[0]
