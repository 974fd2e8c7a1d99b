//! Index forms of the energy with endpoint conditions: Hermite finite
//! elements in frame coordinates, broken Jacobi reduction, the endpoint form
//! on P-Jacobi fields, descent directions and the index lemma.

use nalgebra::{DMatrix, DVector};

use crate::band::SymBand;
use crate::error::{Error, Result};
use crate::jacobi::{FocalPoint, JacobiMatrix, ReducedJacobiSystem, RANK_TOL};
use crate::submanifold::{normality_residual, shape_operator, Submanifold};

/// Default number of interior mesh nodes.
pub const DEFAULT_MESH: usize = 256;
/// Generalized-eigenvalue threshold for index and nullity.
pub const EIG_TOL: f64 = 1e-7;
/// Number of smallest eigenvalues reported.
pub const HEAD: usize = 10;

const GAUSS_X: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_9,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GAUSS_W: [f64; 4] = [
    0.173_927_422_568_726_9,
    0.326_072_577_431_273_1,
    0.326_072_577_431_273_1,
    0.173_927_422_568_726_9,
];

#[derive(Debug, Clone, PartialEq)]
pub struct IndexResult {
    pub index: usize,
    pub nullity: usize,
    pub head: Vec<f64>,
}

impl IndexResult {
    /// Counts from a list of eigenvalues with a threshold relative to the
    /// largest one (at least `tol`).
    pub fn from_eigenvalues(mut eig: Vec<f64>, tol: f64) -> Self {
        eig.sort_by(f64::total_cmp);
        let scale = eig.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let cut = tol * scale;
        let index = eig.iter().filter(|&&x| x < -cut).count();
        let nullity = eig.iter().filter(|&&x| x.abs() <= cut).count();
        eig.truncate(HEAD);
        IndexResult {
            index,
            nullity,
            head: eig,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.index, self.nullity)
    }
}

/// Condition at `t = τ`.
#[derive(Debug, Clone)]
pub enum EndCondition {
    /// `V(τ) = 0`.
    Fixed,
    /// `V(τ) = C w` for `w ∈ ℝ^{k_Q}`, boundary block `−B`.
    Submanifold {
        coords: DMatrix<f64>,
        bilinear: DMatrix<f64>,
    },
    /// `V(τ)` free, no boundary term.
    Free,
}

/// Frame coordinates of `T_{γ(τ)}Q` and the Q boundary block
/// `B_ab = g(S̃^Q t_a, t_b)`.
pub fn end_condition(sys: &ReducedJacobiSystem, q: &Submanifold) -> Result<EndCondition> {
    let g = sys.geodesic();
    let end = g.end();
    let m = g.metric();
    let emb = q.local(&end.x)?;
    let gm = m.fundamental_tensor(&end)?.g;
    let r = normality_residual(&gm, &end.y, &emb.tangents);
    if r > 1e-8 {
        return Err(Error::NotPerpendicular { residual: r });
    }
    let shape = shape_operator(m, q, &end)?;
    let n = sys.dim();
    let kq = emb.k();
    let mut coords = DMatrix::zeros(n, kq);
    for a in 0..kq {
        let t: Vec<f64> = emb.tangents.column(a).iter().copied().collect();
        coords.set_column(a, &sys.frame().coordinates(sys.tau(), &t)?);
    }
    if kq > 0 {
        let sv = coords.clone().singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            return Err(Error::DegenerateSplitting);
        }
    }
    let bilinear = (&shape.bilinear + shape.bilinear.transpose()) * 0.5;
    Ok(EndCondition::Submanifold { coords, bilinear })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofLabel {
    pub node: usize,
    pub derivative: bool,
    /// Column of the node map this dof multiplies.
    pub column: usize,
}

/// Hermite cubic discretization of an index form on `[0, τ]`.
#[derive(Debug, Clone)]
pub struct DiscretizedForm {
    n: usize,
    interior: usize,
    h: f64,
    restricted: bool,
    value_maps: Vec<DMatrix<f64>>,
    deriv_maps: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    labels: Vec<DofLabel>,
    stiffness: SymBand,
    mass: SymBand,
}

fn hermite(s: f64, h: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let (s2, s3) = (s * s, s * s * s);
    let v = [
        1.0 - 3.0 * s2 + 2.0 * s3,
        h * (s - 2.0 * s2 + s3),
        3.0 * s2 - 2.0 * s3,
        h * (s3 - s2),
    ];
    let d = [
        (-6.0 * s + 6.0 * s2) / h,
        1.0 - 4.0 * s + 3.0 * s2,
        (6.0 * s - 6.0 * s2) / h,
        3.0 * s2 - 2.0 * s,
    ];
    let dd = [
        (-6.0 + 12.0 * s) / (h * h),
        (-4.0 + 6.0 * s) / h,
        (6.0 - 12.0 * s) / (h * h),
        (6.0 * s - 2.0) / h,
    ];
    (v, d, dd)
}

fn columns_of_identity(n: usize, cols: impl Iterator<Item = usize>) -> DMatrix<f64> {
    let cols: Vec<usize> = cols.collect();
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        m[(c, j)] = 1.0;
    }
    m
}

/// Assembles the index form with `N` interior nodes. With `restricted`,
/// fields have vanishing last frame coordinate (`g(V, γ̇) = 0`).
pub fn assemble(
    sys: &ReducedJacobiSystem,
    end: &EndCondition,
    interior: usize,
    restricted: bool,
) -> Result<DiscretizedForm> {
    if interior < 8 {
        return Err(Error::MeshTooSmall(interior));
    }
    let n = sys.dim();
    let k = sys.k();
    let nodes = interior + 2;
    let h = sys.tau() / (interior + 1) as f64;
    let comps = if restricted { n - 1 } else { n };
    let full = columns_of_identity(n, 0..comps);
    let mut value_maps = vec![full.clone(); nodes];
    let deriv_maps = vec![full.clone(); nodes];
    value_maps[0] = columns_of_identity(n, 0..k);
    value_maps[nodes - 1] = match end {
        EndCondition::Fixed => DMatrix::zeros(n, 0),
        EndCondition::Submanifold { coords, .. } => {
            if restricted && coords.row(n - 1).amax() > 1e-8 {
                return Err(Error::InvalidInput(
                    "end block not orthogonal to the geodesic".into(),
                ));
            }
            coords.clone()
        }
        EndCondition::Free => full.clone(),
    };
    let mut offsets = Vec::with_capacity(nodes + 1);
    let mut labels = Vec::new();
    let mut off = 0;
    for i in 0..nodes {
        offsets.push(off);
        for c in 0..value_maps[i].ncols() {
            labels.push(DofLabel {
                node: i,
                derivative: false,
                column: c,
            });
        }
        for c in 0..deriv_maps[i].ncols() {
            labels.push(DofLabel {
                node: i,
                derivative: true,
                column: c,
            });
        }
        off += value_maps[i].ncols() + deriv_maps[i].ncols();
    }
    offsets.push(off);
    let dofs = off;
    let bw = (0..nodes - 1)
        .map(|i| offsets[i + 2] - offsets[i] - 1)
        .max()
        .unwrap_or(0);
    let mut stiffness = SymBand::zeros(dofs, bw);
    let mut mass = SymBand::zeros(dofs, bw);

    for e in 0..nodes - 1 {
        let t0 = e as f64 * h;
        // slot maps: value_e, deriv_e, value_{e+1}, deriv_{e+1}
        let maps = [
            &value_maps[e],
            &deriv_maps[e],
            &value_maps[e + 1],
            &deriv_maps[e + 1],
        ];
        let mut starts = [0usize; 4];
        starts[0] = offsets[e];
        starts[1] = offsets[e] + maps[0].ncols();
        starts[2] = offsets[e + 1];
        starts[3] = offsets[e + 1] + maps[2].ncols();
        let mut ke = DMatrix::zeros(4 * n, 4 * n);
        let mut me = DMatrix::zeros(4 * n, 4 * n);
        for q in 0..4 {
            let s = GAUSS_X[q];
            let w = GAUSS_W[q] * h;
            let (phi, dphi, _) = hermite(s, h);
            let r = sys.r_at(t0 + s * h);
            for a in 0..4 {
                for b in 0..4 {
                    let st = w * dphi[a] * dphi[b];
                    let ms = w * phi[a] * phi[b];
                    for i in 0..n {
                        ke[(a * n + i, b * n + i)] += st;
                        me[(a * n + i, b * n + i)] += ms;
                        for j in 0..n {
                            ke[(a * n + i, b * n + j)] -= ms * r[(i, j)];
                        }
                    }
                }
            }
        }
        let total: usize = maps.iter().map(|m| m.ncols()).sum();
        let mut g = DMatrix::zeros(4 * n, total);
        let mut index = Vec::with_capacity(total);
        let mut col = 0;
        for (a, m) in maps.iter().enumerate() {
            g.view_mut((a * n, col), (n, m.ncols())).copy_from(m);
            index.extend((0..m.ncols()).map(|c| starts[a] + c));
            col += m.ncols();
        }
        let kd = g.transpose() * &ke * &g;
        let md = g.transpose() * &me * &g;
        for a in 0..total {
            for b in 0..=a {
                let (i, j) = (index[a], index[b]);
                let ks = 0.5 * (kd[(a, b)] + kd[(b, a)]);
                let ms = 0.5 * (md[(a, b)] + md[(b, a)]);
                stiffness.add(i, j, ks);
                mass.add(i, j, ms);
            }
        }
    }
    let qf = sys.q_form();
    for a in 0..k {
        for b in 0..=a {
            stiffness.add(a, b, -qf[(a, b)]);
        }
    }
    if let EndCondition::Submanifold { bilinear, .. } = end {
        let base = offsets[nodes - 1];
        for a in 0..bilinear.nrows() {
            for b in 0..=a {
                stiffness.add(base + a, base + b, -bilinear[(a, b)]);
            }
        }
    }
    Ok(DiscretizedForm {
        n,
        interior,
        h,
        restricted,
        value_maps,
        deriv_maps,
        offsets,
        labels,
        stiffness,
        mass,
    })
}

/// `I_{P,q}` (fixed end).
pub fn assemble_pq(sys: &ReducedJacobiSystem, interior: usize) -> Result<DiscretizedForm> {
    assemble(sys, &EndCondition::Fixed, interior, false)
}

/// `I_{P,Q}` with the end constrained to `T_{γ(τ)}Q`.
pub fn assemble_pq_sub(
    sys: &ReducedJacobiSystem,
    q: &Submanifold,
    interior: usize,
) -> Result<DiscretizedForm> {
    assemble(sys, &end_condition(sys, q)?, interior, false)
}

impl DiscretizedForm {
    pub fn dofs(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn interior_nodes(&self) -> usize {
        self.interior
    }

    pub fn is_restricted(&self) -> bool {
        self.restricted
    }

    pub fn stiffness(&self) -> &SymBand {
        &self.stiffness
    }

    pub fn mass(&self) -> &SymBand {
        &self.mass
    }

    pub fn labels(&self) -> &[DofLabel] {
        &self.labels
    }

    pub fn form(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        u.dot(&self.stiffness.mul_vec(w))
    }

    fn element(&self, t: f64) -> (usize, f64) {
        let e = ((t / self.h).floor() as usize).min(self.interior);
        (e, (t - e as f64 * self.h) / self.h)
    }

    /// Value, first and second derivative of the field at `t`.
    pub fn field(&self, u: &DVector<f64>, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (e, s) = self.element(t);
        let (phi, dphi, ddphi) = hermite(s, self.h);
        let mut out = (
            DVector::zeros(self.n),
            DVector::zeros(self.n),
            DVector::zeros(self.n),
        );
        let slots = [
            (&self.value_maps[e], self.offsets[e]),
            (
                &self.deriv_maps[e],
                self.offsets[e] + self.value_maps[e].ncols(),
            ),
            (&self.value_maps[e + 1], self.offsets[e + 1]),
            (
                &self.deriv_maps[e + 1],
                self.offsets[e + 1] + self.value_maps[e + 1].ncols(),
            ),
        ];
        for (a, (map, start)) in slots.iter().enumerate() {
            if map.ncols() == 0 {
                continue;
            }
            let c = *map * u.rows(*start, map.ncols());
            out.0 += &c * phi[a];
            out.1 += &c * dphi[a];
            out.2 += &c * ddphi[a];
        }
        out
    }

    /// Mask of dofs carrying the last frame coordinate.
    pub fn radial_mask(&self) -> Vec<bool> {
        let n = self.n;
        self.labels
            .iter()
            .map(|l| {
                let map = if l.derivative {
                    &self.deriv_maps[l.node]
                } else {
                    &self.value_maps[l.node]
                };
                let col = map.column(l.column);
                col[n - 1] != 0.0 && col.rows(0, n - 1).amax() == 0.0
            })
            .collect()
    }

    /// Embeds a vector of a restricted form into this (unrestricted) one
    /// assembled with the same data.
    pub fn embed(&self, restricted: &DiscretizedForm, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dofs());
        for (i, l) in restricted.labels.iter().enumerate() {
            let j = self
                .labels
                .iter()
                .position(|m| m == l)
                .expect("label present");
            out[j] = u[i];
        }
        out
    }

    /// Relative residual of `v̈ + 𝔯 v = 0` and of the natural boundary
    /// conditions for a kernel vector.
    pub fn kernel_residual(
        &self,
        sys: &ReducedJacobiSystem,
        end: &EndCondition,
        u: &DVector<f64>,
    ) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for e in 0..=self.interior {
            for q in 0..4 {
                let t = (e as f64 + GAUSS_X[q]) * self.h;
                let (v, _, dd) = self.field(u, t);
                let r = dd + sys.r_at(t) * &v;
                num += GAUSS_W[q] * self.h * r.norm_squared();
                den += GAUSS_W[q] * self.h * v.norm_squared();
            }
        }
        let scale = den.sqrt().max(f64::MIN_POSITIVE);
        let mut worst = num.sqrt() / scale;
        let k = sys.k();
        let (v0, dv0, _) = self.field(u, 0.0);
        let q = sys.q_form();
        for i in 0..k {
            let mut b = dv0[i];
            for j in 0..k {
                b += q[(i, j)] * v0[j];
            }
            worst = worst.max(b.abs() / scale);
        }
        if let EndCondition::Submanifold { coords, bilinear } = end {
            let (_, dv1, _) = self.field(u, sys.tau());
            let w = u
                .rows(self.offsets[self.interior + 1], coords.ncols())
                .into_owned();
            let b = coords.transpose() * dv1 - bilinear * w;
            worst = worst.max(b.amax() / scale);
        }
        worst
    }
}

/// Index and nullity of a discretized form at the eigenvalue threshold.
pub fn spectral_index(form: &DiscretizedForm) -> Result<IndexResult> {
    spectral_index_tol(form, EIG_TOL)
}

/// Counts from two inertia evaluations, without the eigenvalue head.
pub fn spectral_counts(form: &DiscretizedForm) -> IndexResult {
    let (k, m) = (&form.stiffness, &form.mass);
    let count = |sigma: f64| k.shifted(m, sigma).inertia().negative;
    let below_neg = count(-EIG_TOL);
    IndexResult {
        index: below_neg,
        nullity: count(EIG_TOL) - below_neg,
        head: Vec::new(),
    }
}

pub fn spectral_index_tol(form: &DiscretizedForm, tol: f64) -> Result<IndexResult> {
    let (k, m) = (&form.stiffness, &form.mass);
    let count = |sigma: f64| k.shifted(m, sigma).inertia().negative;
    let below_neg = count(-tol);
    let below_pos = count(tol);
    let want = HEAD.min(form.dofs());
    let mut lo = -1.0;
    while count(lo) > 0 {
        lo *= 2.0;
        if lo < -1e15 {
            return Err(Error::Eigen("no lower spectral bound".into()));
        }
    }
    let mut hi = 1.0;
    while count(hi) < want {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Eigen("no upper spectral bound".into()));
        }
    }
    let mut head = Vec::with_capacity(want);
    for j in 0..want {
        let (mut a, mut b) = (head.last().copied().unwrap_or(lo), hi);
        for _ in 0..200 {
            if b - a <= 1e-11 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            let mid = 0.5 * (a + b);
            if count(mid) > j {
                b = mid;
            } else {
                a = mid;
            }
        }
        head.push(0.5 * (a + b));
    }
    Ok(IndexResult {
        index: below_neg,
        nullity: below_pos - below_neg,
        head,
    })
}

/// Result at `N` and at `2N` with a stability flag.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshCheck {
    pub coarse: IndexResult,
    pub fine: IndexResult,
    pub stable: bool,
}

pub fn spectral_index_checked(
    sys: &ReducedJacobiSystem,
    end: &EndCondition,
    interior: usize,
    restricted: bool,
) -> Result<MeshCheck> {
    let coarse = spectral_index(&assemble(sys, end, interior, restricted)?)?;
    let fine = spectral_counts(&assemble(sys, end, 2 * interior, restricted)?);
    let stable = coarse.pair() == fine.pair();
    Ok(MeshCheck {
        coarse,
        fine,
        stable,
    })
}

/// M-orthonormal basis of the generalized kernel by inverse iteration.
pub fn kernel_vectors(form: &DiscretizedForm, count: usize) -> Vec<DVector<f64>> {
    if count == 0 {
        return Vec::new();
    }
    let d = form.dofs();
    let shift = -1e-6;
    let fact = form.stiffness.shifted(&form.mass, shift).ldlt();
    let mut x: Vec<DVector<f64>> = (0..count)
        .map(|c| DVector::from_fn(d, |i, _| ((i * (c + 3) + 7 * c) as f64 * 0.618_034).sin()))
        .collect();
    for _ in 0..12 {
        let mut next: Vec<DVector<f64>> = x
            .iter()
            .map(|v| fact.solve(&form.mass.mul_vec(v)))
            .collect();
        for i in 0..next.len() {
            for j in 0..i {
                let mj = form.mass.mul_vec(&next[j]);
                let c = next[i].dot(&mj);
                let nj = next[j].clone();
                next[i] -= nj * c;
            }
            let nrm = next[i].dot(&form.mass.mul_vec(&next[i])).sqrt();
            next[i] /= nrm;
        }
        x = next;
    }
    x
}

fn add_block(s: &mut DMatrix<f64>, r: usize, c: usize, b: &DMatrix<f64>) {
    let mut v = s.view_mut((r, c), b.shape());
    v += b;
}

/// Symmetric jump-pairing matrix of the broken Jacobi reduction.
pub fn broken_jacobi_matrix(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    nodes: &[f64],
) -> Result<DMatrix<f64>> {
    let n = sys.dim();
    let m = nodes.len() - 1;
    if m < 1 || nodes[0] != 0.0 {
        return Err(Error::Partition("partition must start at 0".into()));
    }
    let dim = n * (m - 1);
    let mut s = DMatrix::zeros(dim, dim);
    if dim == 0 {
        return Ok(s);
    }
    let singular = |a: &DMatrix<f64>| {
        let sv = a.clone().singular_values();
        sv.min() <= 1e-10 * sv.max()
    };
    let (m1, dm1) = basis.both(nodes[1]);
    if singular(&m1) {
        return Err(Error::Partition(format!(
            "P-focal instant in (0, {}]",
            nodes[1]
        )));
    }
    let f = &dm1
        * m1.clone()
            .try_inverse()
            .ok_or(Error::Partition("singular first piece".into()))?;
    add_block(&mut s, 0, 0, &f);
    let mut fund0 = DMatrix::zeros(n, 2 * n);
    let mut fund1 = DMatrix::zeros(n, 2 * n);
    fund0.view_mut((0, 0), (n, n)).fill_with_identity();
    fund1.view_mut((0, n), (n, n)).fill_with_identity();
    for p in 1..m {
        let (a, b) = (nodes[p], nodes[p + 1]);
        let fm = sys.propagate(a, b, &fund0, &fund1)?;
        let (x, dx) = fm.both(b);
        let (u, v) = (x.columns(0, n).into_owned(), x.columns(n, n).into_owned());
        let (du, dv) = (dx.columns(0, n).into_owned(), dx.columns(n, n).into_owned());
        if singular(&v) {
            return Err(Error::Partition(format!(
                "[{a}, {b}] contains a conjugate pair"
            )));
        }
        let vi = v
            .try_inverse()
            .ok_or(Error::Partition("singular piece".into()))?;
        // jump at the left node p: −v̇(a⁺) = V⁻¹U w_p − V⁻¹ w_{p+1}
        let i = p - 1;
        add_block(&mut s, i * n, i * n, &(&vi * &u));
        if p + 1 < m {
            add_block(&mut s, i * n, (i + 1) * n, &(-&vi));
            // v̇(b⁻) = (U̇ − V̇V⁻¹U) w_p + V̇V⁻¹ w_{p+1}
            let j = p;
            add_block(&mut s, j * n, i * n, &(&du - &dv * &vi * &u));
            add_block(&mut s, j * n, j * n, &(&dv * &vi));
        }
    }
    Ok(s)
}

/// Index and nullity of the broken Jacobi reduction on a disconjugate
/// partition, plus the asymmetry of the jump pairing.
pub fn broken_jacobi_index(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    nodes: &[f64],
) -> Result<(IndexResult, f64)> {
    let s = broken_jacobi_matrix(sys, basis, nodes)?;
    let asym = (&s - s.transpose()).abs().max();
    let sym = (&s + s.transpose()) * 0.5;
    if sym.nrows() == 0 {
        return Ok((
            IndexResult {
                index: 0,
                nullity: 0,
                head: vec![],
            },
            0.0,
        ));
    }
    let eig: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    Ok((IndexResult::from_eigenvalues(eig, EIG_TOL), asym))
}

#[derive(Debug, Clone)]
pub struct EndpointForm {
    pub matrix: DMatrix<f64>,
    pub result: IndexResult,
    /// Relative residual of `M(τ) a = c` for the chosen P-Jacobi fields.
    pub span_residual: f64,
    pub asymmetry: f64,
}

/// `A_γ(J₁, J₂) = g(DJ₁(τ) − S̃^Q J₁(τ), J₂(τ))` on P-Jacobi fields whose end
/// values run over a basis of `T_{γ(τ)}Q`.
pub fn endpoint_form(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    q: &Submanifold,
) -> Result<EndpointForm> {
    let (coords, bilinear) = match end_condition(sys, q)? {
        EndCondition::Submanifold { coords, bilinear } => (coords, bilinear),
        _ => unreachable!(),
    };
    let (mt, dmt) = basis.both(sys.tau());
    let kq = coords.ncols();
    let svd = mt.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let a = svd
        .solve(&coords, RANK_TOL * smax)
        .map_err(|e| Error::Eigen(e.to_string()))?;
    let resid = (&mt * &a - &coords).abs().max() / coords.abs().max().max(1.0);
    if resid > 1e-6 {
        return Err(Error::Hypothesis(format!(
            "end values of P-Jacobi fields miss T_γ(τ)Q (residual {resid:.2e})"
        )));
    }
    let raw = coords.transpose() * &dmt * &a - &bilinear;
    let asymmetry = (&raw - raw.transpose()).abs().max();
    let matrix = (&raw + raw.transpose()) * 0.5;
    let eig: Vec<f64> = if kq == 0 {
        vec![]
    } else {
        matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    };
    Ok(EndpointForm {
        matrix,
        result: IndexResult::from_eigenvalues(eig, EIG_TOL),
        span_residual: resid,
        asymmetry,
    })
}

/// Index and nullity on fields with vanishing last frame coordinate.
pub fn normal_restricted_index(
    sys: &ReducedJacobiSystem,
    end: &EndCondition,
    interior: usize,
) -> Result<IndexResult> {
    if !sys.frame().aligned() {
        return Err(Error::InvalidInput(
            "frame is not aligned with the geodesic".into(),
        ));
    }
    spectral_index(&assemble(sys, end, interior, true)?)
}

fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, pieces: usize, mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / pieces as f64;
    let mut acc = 0.0;
    for p in 0..pieces {
        for q in 0..4 {
            acc += GAUSS_W[q] * h * f(a + (p as f64 + GAUSS_X[q]) * h);
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub s: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// `|ż(s)|²`
    pub jump: f64,
    /// Form value of the bump field `φY`.
    pub bump: f64,
    /// `−2ε|ż|² + ε² bump`
    pub predicted: f64,
    /// Form value of `X_ε` by direct quadrature.
    pub value: f64,
}

/// Energy-decreasing field `X_ε = Z + εφY` at an interior focal instant.
pub fn descent_direction(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    focal: &FocalPoint,
) -> Result<Descent> {
    let tau = sys.tau();
    let s = focal.t;
    if focal.at_end || !(s > 0.0 && s < tau) {
        return Err(Error::NoInteriorFocal);
    }
    let k = sys.k();
    let (ms, dms) = basis.both(s);
    let svd = ms.svd(false, true);
    let vt = svd.v_t.ok_or(Error::Eigen("svd".into()))?;
    let imin = svd.singular_values.imin();
    let a = vt.row(imin).transpose();
    let zdot = &dms * &a;
    let y = -&zdot;
    let jump = zdot.norm_squared();
    let delta = 0.5 * s.min(tau - s);
    let phi = |t: f64| {
        let u = (t - s) / delta;
        if u.abs() >= 1.0 {
            (0.0, 0.0)
        } else {
            let w = 1.0 - u * u;
            (w * w * w, -6.0 * u * w * w / delta)
        }
    };
    let ry = |t: f64| y.dot(&(sys.r_at(t) * &y));
    let bump = composite(s - delta, s + delta, 128, |t| {
        let (p, dp) = phi(t);
        dp * dp * jump - p * p * ry(t)
    });
    let epsilon = if bump > 0.0 { jump / bump } else { 1.0 };
    let predicted = -2.0 * epsilon * jump + epsilon * epsilon * bump;

    let x = |t: f64| {
        let (p, dp) = phi(t);
        let (mut v, mut dv) = (&y * (epsilon * p), &y * (epsilon * dp));
        if t <= s {
            let (m, dm) = basis.both(t);
            v += &m * &a;
            dv += &dm * &a;
        }
        (v, dv)
    };
    let integrand = |t: f64| {
        let (v, dv) = x(t);
        dv.norm_squared() - v.dot(&(sys.r_at(t) * &v))
    };
    let mut value = composite(0.0, s - delta, 256, integrand)
        + composite(s - delta, s, 256, integrand)
        + composite(s, s + delta, 256, integrand)
        + composite(s + delta, tau, 64, integrand);
    let x0 = a.rows(0, k).into_owned();
    value -= x0.dot(&(sys.q_form() * &x0));
    Ok(Descent {
        s,
        delta,
        epsilon,
        jump,
        bump,
        predicted,
        value,
    })
}

/// `I_P(X, X) = ∫ |ẋ|² − ⟨𝔯x, x⟩ − 𝔔(x(0), x(0))` for a piecewise-linear
/// field through `knots` at equally spaced instants.
pub fn free_end_form_linear(sys: &ReducedJacobiSystem, knots: &[DVector<f64>]) -> f64 {
    let tau = sys.tau();
    let segs = knots.len() - 1;
    let h = tau / segs as f64;
    let k = sys.k();
    let mut acc = 0.0;
    for j in 0..segs {
        let slope = (&knots[j + 1] - &knots[j]) / h;
        let t0 = j as f64 * h;
        acc += composite(t0, t0 + h, 8, |t| {
            let x = &knots[j] + &slope * (t - t0);
            slope.norm_squared() - x.dot(&(sys.r_at(t) * &x))
        });
    }
    let x0 = knots[0].rows(0, k).into_owned();
    acc - x0.dot(&(sys.q_form() * &x0))
}

/// Same form on a P-Jacobi field `M(t) a`, by quadrature.
pub fn free_end_form_jacobi(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    a: &DVector<f64>,
) -> f64 {
    let k = sys.k();
    let mut acc = composite(0.0, sys.tau(), 512, |t| {
        let (m, dm) = basis.both(t);
        let (v, dv) = (&m * a, &dm * a);
        dv.norm_squared() - v.dot(&(sys.r_at(t) * &v))
    });
    let x0 = (basis.value(0.0) * a).rows(0, k).into_owned();
    acc -= x0.dot(&(sys.q_form() * &x0));
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaTrial {
    /// `I_P(X, X)`
    pub field: f64,
    /// `I_P(Y, Y) = ⟨Ẏ(τ), Y(τ)⟩`
    pub jacobi: f64,
    /// Sup distance between X and Y on the knot grid and midpoints.
    pub distance: f64,
}

impl LemmaTrial {
    pub fn holds(&self, margin: f64) -> bool {
        if self.distance <= 1e-6 {
            (self.field - self.jacobi).abs() <= margin.max(1e-8)
        } else {
            self.jacobi < self.field - margin
        }
    }
}

/// Compares a piecewise-linear admissible X with the P-Jacobi field Y that
/// has the same end value. Knot 0 is projected onto `ℝ^k`.
pub fn index_lemma_trial(
    sys: &ReducedJacobiSystem,
    basis: &JacobiMatrix,
    focal: &[FocalPoint],
    knots: &[DVector<f64>],
) -> Result<LemmaTrial> {
    if let Some(p) = focal.first() {
        return Err(Error::FocalPresent(p.t));
    }
    let n = sys.dim();
    let k = sys.k();
    let mut knots = knots.to_vec();
    for i in k..n {
        knots[0][i] = 0.0;
    }
    let tau = sys.tau();
    let (mt, dmt) = basis.both(tau);
    let xt = knots.last().unwrap().clone();
    let a = mt.lu().solve(&xt).ok_or(Error::FocalPresent(tau))?;
    let yt = basis.value(tau) * &a;
    let jacobi = (&dmt * &a).dot(&yt);
    let field = free_end_form_linear(sys, &knots);
    let segs = knots.len() - 1;
    let h = tau / segs as f64;
    let mut distance: f64 = 0.0;
    for j in 0..=2 * segs {
        let t = 0.5 * j as f64 * h;
        let x = if j % 2 == 0 {
            knots[j / 2].clone()
        } else {
            (&knots[j / 2] + &knots[j / 2 + 1]) * 0.5
        };
        distance = distance.max((x - basis.value(t) * &a).amax());
    }
    Ok(LemmaTrial {
        field,
        jacobi,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::geodesic_ivp;
    use crate::jacobi::{disconjugate_partition, focal_points, p_jacobi_basis, ScanOptions};
    use crate::metric::MetricSpec;
    use crate::ode::Tolerances;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sphere(tau: f64) -> ReducedJacobiSystem {
        let m = Arc::new(MetricSpec::unit_sphere_chart());
        let g = geodesic_ivp(
            &m,
            &[PI / 2.0, 0.0],
            &[0.0, 1.0],
            tau,
            Tolerances::default(),
        )
        .unwrap();
        ReducedJacobiSystem::reduce(&g, &Submanifold::point(&[PI / 2.0, 0.0])).unwrap()
    }

    fn circle(tau: f64) -> ReducedJacobiSystem {
        let m = Arc::new(MetricSpec::euclidean(2));
        let g = geodesic_ivp(&m, &[1.0, 0.0], &[-1.0, 0.0], tau, Tolerances::default()).unwrap();
        ReducedJacobiSystem::reduce(&g, &Submanifold::planar_circle(2, &[0.0, 0.0], 1.0)).unwrap()
    }

    #[test]
    fn sphere_spectral_counts() {
        assert_eq!(
            spectral_index(&assemble_pq(&sphere(4.0), 64).unwrap())
                .unwrap()
                .pair(),
            (1, 0)
        );
        assert_eq!(
            spectral_index(&assemble_pq(&sphere(PI), 64).unwrap())
                .unwrap()
                .pair(),
            (0, 1)
        );
        assert_eq!(
            spectral_index(&assemble_pq(&sphere(2.5), 64).unwrap())
                .unwrap()
                .pair(),
            (0, 0)
        );
    }

    #[test]
    fn circle_counts_and_kernel() {
        assert_eq!(
            spectral_index(&assemble_pq(&circle(0.5), 64).unwrap())
                .unwrap()
                .pair(),
            (0, 0)
        );
        let s = circle(1.0);
        let f = assemble_pq(&s, 64).unwrap();
        let r = spectral_index(&f).unwrap();
        assert_eq!(r.pair(), (0, 1));
        let ker = kernel_vectors(&f, 1);
        assert!(f.kernel_residual(&s, &EndCondition::Fixed, &ker[0]) < 1e-5);
        let (v0, _, _) = f.field(&ker[0], 0.0);
        let (vh, _, _) = f.field(&ker[0], 0.5);
        assert!((vh[0] / v0[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn mesh_too_small() {
        assert!(matches!(
            assemble_pq(&circle(0.5), 7),
            Err(Error::MeshTooSmall(7))
        ));
    }

    #[test]
    fn broken_jacobi_on_sphere_and_circle() {
        for (s, want) in [(sphere(4.0), 1), (circle(1.5), 1), (sphere(2.5), 0)] {
            let b = p_jacobi_basis(&s).unwrap();
            let f = focal_points(&s, &b, ScanOptions::default());
            let nodes = disconjugate_partition(&s, &f, ScanOptions::default()).unwrap();
            let (r, asym) = broken_jacobi_index(&s, &b, &nodes).unwrap();
            assert_eq!(r.index, want);
            assert!(asym < 1e-7);
        }
    }

    #[test]
    fn endpoint_form_hand_values() {
        let m = Arc::new(MetricSpec::euclidean(2));
        let q = Submanifold::planar_circle(2, &[0.0, 0.0], 1.0);
        let p = Submanifold::point(&[-3.0, 0.0]);
        // J(τ) = w: DJ(τ) = w/τ, S̃^Q = ±1
        for (tau, want) in [(4.0, 0.25 - 1.0), (2.0, 0.5 + 1.0)] {
            let g =
                geodesic_ivp(&m, &[-3.0, 0.0], &[1.0, 0.0], tau, Tolerances::default()).unwrap();
            let s = ReducedJacobiSystem::reduce(&g, &p).unwrap();
            let a = endpoint_form(&s, &p_jacobi_basis(&s).unwrap(), &q).unwrap();
            assert!((a.matrix[(0, 0)] - want).abs() < 1e-8, "{}", a.matrix);
        }
    }

    #[test]
    fn descent_negative_on_circle() {
        let s = circle(1.5);
        let b = p_jacobi_basis(&s).unwrap();
        let f = focal_points(&s, &b, ScanOptions::default());
        let d = descent_direction(&s, &b, &f[0]).unwrap();
        assert!(d.value < 0.0);
        assert!((d.value - d.predicted).abs() < 1e-6);
    }
}
