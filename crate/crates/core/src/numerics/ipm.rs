//! Infeasible-start primal-dual path-following method for real block-diagonal
//! semidefinite programs in standard form:
//!
//! ```text
//! (P)  min <C, X>   s.t. <A_i, X> = b_i,  X ⪰ 0
//! (D)  max b^T y    s.t. C - Σ_i y_i A_i = S ⪰ 0
//! ```
//!
//! Directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector.
//! Data are rescaled internally (per block, per row, and globally for `b` and `C`)
//! and all outputs are mapped back to the caller's units.

use nalgebra::{Cholesky, Dyn};

use super::hermitian::{max_abs_r, symmetric_eigenvalues, RMatrix, RVector};

/// Standard-form problem. `a[i][j]` is the coefficient of constraint `i` in block `j`
/// (`None` for a zero block).
#[derive(Clone, Debug)]
pub(crate) struct ConeProgram {
    pub dims: Vec<usize>,
    pub c: Vec<RMatrix>,
    pub a: Vec<Vec<Option<RMatrix>>>,
    pub b: RVector,
}

impl ConeProgram {
    pub fn new(dims: Vec<usize>, num_constraints: usize) -> Self {
        let c = dims.iter().map(|&n| RMatrix::zeros(n, n)).collect();
        let a = (0..num_constraints).map(|_| vec![None; dims.len()]).collect();
        Self {
            dims,
            c,
            a,
            b: RVector::zeros(num_constraints),
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    /// Accumulates `scale * mat` into `a[i][j]`.
    pub fn add_a(&mut self, i: usize, j: usize, mat: &RMatrix, scale: f64) {
        match &mut self.a[i][j] {
            Some(existing) => *existing += mat * scale,
            slot @ None => *slot = Some(mat * scale),
        }
    }

    /// Accumulates `scale` into the single entry of 1x1 block `j` for constraint `i`.
    pub fn add_a_scalar(&mut self, i: usize, j: usize, scale: f64) {
        self.add_a(i, j, &RMatrix::from_element(1, 1, 1.0), scale);
    }

    fn apply_a(&self, x: &[RMatrix]) -> RVector {
        RVector::from_iterator(
            self.num_constraints(),
            self.a.iter().map(|row| {
                row.iter()
                    .zip(x)
                    .map(|(aij, xj)| aij.as_ref().map_or(0.0, |m| m.dot(xj)))
                    .sum::<f64>()
            }),
        )
    }

    fn apply_at(&self, y: &RVector) -> Vec<RMatrix> {
        let mut out: Vec<RMatrix> = self.dims.iter().map(|&n| RMatrix::zeros(n, n)).collect();
        for (i, row) in self.a.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for (j, aij) in row.iter().enumerate() {
                if let Some(m) = aij {
                    out[j] += m * y[i];
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ConeStatus {
    Converged,
    MaxIter,
    /// Progress stopped (tiny steps, loss of positive definiteness, or divergence).
    Stalled,
}

#[derive(Clone, Debug)]
pub(crate) struct ConeSolution {
    pub status: ConeStatus,
    pub x: Vec<RMatrix>,
    pub y: RVector,
    #[cfg_attr(not(test), allow(dead_code))]
    pub s: Vec<RMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Max of relative primal infeasibility, dual infeasibility and gap, in scaled units.
    pub residual: f64,
    pub iterations: usize,
}

struct Scaling {
    block: Vec<f64>,
    row: Vec<f64>,
    b: f64,
    c: f64,
}

fn rescale(prog: &ConeProgram) -> (ConeProgram, Scaling) {
    let mut p = prog.clone();
    let nb = p.dims.len();
    let m = p.num_constraints();

    let mut block = vec![1.0; nb];
    for (j, bs) in block.iter_mut().enumerate() {
        let mut s = max_abs_r(&p.c[j]);
        for row in &p.a {
            if let Some(a) = &row[j] {
                s = s.max(max_abs_r(a));
            }
        }
        if s > 0.0 {
            *bs = s;
            p.c[j] /= s;
            for row in p.a.iter_mut() {
                if let Some(a) = &mut row[j] {
                    *a /= s;
                }
            }
        }
    }

    let mut row = vec![1.0; m];
    for (i, rs) in row.iter_mut().enumerate() {
        let s = p.a[i]
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, a| acc.max(max_abs_r(a)));
        if s > 0.0 {
            *rs = s;
            for a in p.a[i].iter_mut().flatten() {
                *a /= s;
            }
            p.b[i] /= s;
        }
    }

    let bmax = p.b.amax();
    let b = if bmax > 0.0 { bmax } else { 1.0 };
    p.b /= b;
    let cmax = p.c.iter().fold(0.0_f64, |acc, c| acc.max(max_abs_r(c)));
    let c = if cmax > 0.0 { cmax } else { 1.0 };
    for cj in p.c.iter_mut() {
        *cj /= c;
    }
    (p, Scaling { block, row, b, c })
}

/// Nesterov-Todd scaling data for one block: `W = G G^T` with `W S W = X` and
/// `G^{-1} X G^{-T} = G^T S G = diag(lam)`.
struct NtBlock {
    w: RMatrix,
    g: RMatrix,
    g_inv: RMatrix,
    lam: RVector,
    lx: RMatrix,
    ls: RMatrix,
}

fn nt_block(x: &RMatrix, s: &RMatrix) -> Option<NtBlock> {
    let n = x.nrows();
    let lx = Cholesky::new(x.clone())?.l();
    let ls = Cholesky::new(s.clone())?.l();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(true, true);
    let v = svd.v_t?.transpose();
    let lam = svd.singular_values;
    if lam.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return None;
    }
    let mut g = &lx * &v;
    for k in 0..n {
        let f = 1.0 / lam[k].sqrt();
        g.column_mut(k).scale_mut(f);
    }
    let lx_inv = lx.solve_lower_triangular(&RMatrix::identity(n, n))?;
    let mut g_inv = v.transpose() * lx_inv;
    for k in 0..n {
        let f = lam[k].sqrt();
        g_inv.row_mut(k).scale_mut(f);
    }
    let w = &g * g.transpose();
    Some(NtBlock {
        w,
        g,
        g_inv,
        lam,
        lx,
        ls,
    })
}

fn symmetrize(m: &mut RMatrix) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Largest `alpha` with `L L^T + alpha D ⪰ 0`, or infinity.
fn max_step(l: &RMatrix, d: &RMatrix) -> f64 {
    let Some(y) = l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(mut p) = l.solve_lower_triangular(&y.transpose()) else {
        return 0.0;
    };
    symmetrize(&mut p);
    let lmin = symmetric_eigenvalues(&p)[0];
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct SchurSystem {
    chol: Option<Cholesky<f64, Dyn>>,
    lu: nalgebra::LU<f64, Dyn, Dyn>,
}

impl SchurSystem {
    fn new(mut m: RMatrix) -> Self {
        let n = m.nrows();
        symmetrize(&mut m);
        let lu = m.clone().lu();
        let mut chol = Cholesky::new(m.clone());
        if chol.is_none() {
            let maxdiag = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, i)].abs()));
            let mut reg = m.clone();
            for i in 0..n {
                reg[(i, i)] += 1e-13 * maxdiag.max(1e-300);
            }
            chol = Cholesky::new(reg);
        }
        Self { chol, lu }
    }

    fn solve(&self, rhs: &RVector) -> Option<RVector> {
        if let Some(c) = &self.chol {
            let mut x = c.solve(rhs);
            // One step of refinement against the unregularized factorization.
            if let Some(r) = self.lu.solve(rhs) {
                if r.iter().all(|v| v.is_finite()) {
                    x = r;
                }
            }
            return Some(x);
        }
        self.lu.solve(rhs)
    }
}

struct Direction {
    dx: Vec<RMatrix>,
    dy: RVector,
    ds: Vec<RMatrix>,
}

fn direction(
    p: &ConeProgram,
    schur: &SchurSystem,
    nt: &[NtBlock],
    rp: &RVector,
    rd: &[RMatrix],
    rc: &[RMatrix],
) -> Option<Direction> {
    let t: Vec<RMatrix> = rc
        .iter()
        .zip(rd)
        .zip(nt)
        .map(|((rcj, rdj), ntj)| rcj - &ntj.w * rdj * &ntj.w)
        .collect();
    let rhs = rp - p.apply_a(&t);
    let dy = schur.solve(&rhs)?;
    let aty = p.apply_at(&dy);
    let mut ds = Vec::with_capacity(nt.len());
    let mut dx = Vec::with_capacity(nt.len());
    for j in 0..nt.len() {
        let mut dsj = &rd[j] - &aty[j];
        symmetrize(&mut dsj);
        let mut dxj = &rc[j] - &nt[j].w * &dsj * &nt[j].w;
        symmetrize(&mut dxj);
        ds.push(dsj);
        dx.push(dxj);
    }
    if dy.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Direction { dx, dy, ds })
}

fn frob_sq(ms: &[RMatrix]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum()
}

pub(crate) fn solve(prog: &ConeProgram, settings: &IpmSettings) -> ConeSolution {
    let (p, sc) = rescale(prog);
    let nb = p.dims.len();
    let m = p.num_constraints();
    let n_tot: usize = p.dims.iter().sum();

    let active: Vec<Vec<usize>> = (0..nb)
        .map(|j| (0..m).filter(|&i| p.a[i][j].is_some()).collect())
        .collect();

    // Starting point in the style of SDPT3.
    let mut x = Vec::with_capacity(nb);
    let mut s = Vec::with_capacity(nb);
    for j in 0..nb {
        let n = p.dims[j] as f64;
        let mut xi = 10.0_f64.max(n.sqrt());
        let mut eta = 10.0_f64.max(n.sqrt()).max(p.c[j].norm());
        for &i in &active[j] {
            let an = p.a[i][j].as_ref().unwrap().norm();
            xi = xi.max(n * (1.0 + p.b[i].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        x.push(RMatrix::identity(p.dims[j], p.dims[j]) * xi);
        s.push(RMatrix::identity(p.dims[j], p.dims[j]) * eta);
    }
    let mut y = RVector::zeros(m);

    let b_norm = p.b.norm();
    let c_norm = frob_sq(&p.c).sqrt();

    let mut best: Option<(f64, Vec<RMatrix>, RVector, Vec<RMatrix>, f64, f64)> = None;
    let mut status = ConeStatus::MaxIter;
    let mut iterations = 0;
    let mut small_steps = 0;

    for iter in 0..=settings.max_iter {
        iterations = iter;
        let ax = p.apply_a(&x);
        let rp = &p.b - &ax;
        let aty = p.apply_at(&y);
        let rd: Vec<RMatrix> = (0..nb).map(|j| &p.c[j] - &aty[j] - &s[j]).collect();
        let pobj: f64 = (0..nb).map(|j| p.c[j].dot(&x[j])).sum();
        let dobj = p.b.dot(&y);
        let xs: f64 = (0..nb).map(|j| x[j].dot(&s[j])).sum();
        let mu = xs / n_tot as f64;

        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = frob_sq(&rd).sqrt() / (1.0 + c_norm);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = (pobj - dobj).abs().max(xs.abs()) / denom;
        let resid = pinf.max(dinf).max(gap);
        if !resid.is_finite() {
            status = ConeStatus::Stalled;
            break;
        }
        if best.as_ref().map_or(true, |b| resid < b.0) {
            best = Some((resid, x.clone(), y.clone(), s.clone(), pobj, dobj));
        }
        if resid <= settings.tol {
            status = ConeStatus::Converged;
            break;
        }
        if iter == settings.max_iter {
            break;
        }
        let ynorm = y.amax();
        let xnorm = x.iter().fold(0.0_f64, |a, m| a.max(max_abs_r(m)));
        if ynorm > 1e14 || xnorm > 1e14 {
            status = ConeStatus::Stalled;
            break;
        }

        let Some(nt) = (0..nb).map(|j| nt_block(&x[j], &s[j])).collect::<Option<Vec<_>>>() else {
            status = ConeStatus::Stalled;
            break;
        };

        // Schur complement M_ik = sum_j <A_ij, W_j A_kj W_j>.
        let mut schur = RMatrix::zeros(m, m);
        for j in 0..nb {
            let w = &nt[j].w;
            for (pos, &i) in active[j].iter().enumerate() {
                let ai = p.a[i][j].as_ref().unwrap();
                let tij = w * ai * w;
                for &k in &active[j][pos..] {
                    let v = p.a[k][j].as_ref().unwrap().dot(&tij);
                    schur[(i, k)] += v;
                    if k != i {
                        schur[(k, i)] += v;
                    }
                }
            }
        }
        let schur = SchurSystem::new(schur);

        // Predictor.
        let rc_aff: Vec<RMatrix> = x.iter().map(|xj| -xj).collect();
        let Some(aff) = direction(&p, &schur, &nt, &rp, &rd, &rc_aff) else {
            status = ConeStatus::Stalled;
            break;
        };
        let mut ap = 1.0_f64;
        let mut ad = 1.0_f64;
        for j in 0..nb {
            ap = ap.min(max_step(&nt[j].lx, &aff.dx[j]));
            ad = ad.min(max_step(&nt[j].ls, &aff.ds[j]));
        }
        let mu_aff: f64 = (0..nb)
            .map(|j| (&x[j] + &aff.dx[j] * ap).dot(&(&s[j] + &aff.ds[j] * ad)))
            .sum::<f64>()
            / n_tot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let mut rc = Vec::with_capacity(nb);
        for j in 0..nb {
            let ntj = &nt[j];
            let dxt = &ntj.g_inv * &aff.dx[j] * ntj.g_inv.transpose();
            let dst = ntj.g.transpose() * &aff.ds[j] * &ntj.g;
            let mut prod = &dxt * &dst;
            symmetrize(&mut prod);
            let n = p.dims[j];
            let mut h = RMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    let target = if a == b { sigma * mu } else { 0.0 } - prod[(a, b)];
                    h[(a, b)] = 2.0 * target / (ntj.lam[a] + ntj.lam[b]);
                }
            }
            let mut rcj = &ntj.g * h * ntj.g.transpose() - &x[j];
            symmetrize(&mut rcj);
            rc.push(rcj);
        }
        let Some(dir) = direction(&p, &schur, &nt, &rp, &rd, &rc) else {
            status = ConeStatus::Stalled;
            break;
        };
        let mut ap_max = f64::INFINITY;
        let mut ad_max = f64::INFINITY;
        for j in 0..nb {
            ap_max = ap_max.min(max_step(&nt[j].lx, &dir.dx[j]));
            ad_max = ad_max.min(max_step(&nt[j].ls, &dir.ds[j]));
        }
        let tau = 0.9 + 0.09 * ap.min(ad);
        let ap = (tau * ap_max).min(1.0);
        let ad = (tau * ad_max).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            small_steps += 1;
            if small_steps >= 3 {
                status = ConeStatus::Stalled;
                break;
            }
        } else {
            small_steps = 0;
        }
        for j in 0..nb {
            x[j] += &dir.dx[j] * ap;
            symmetrize(&mut x[j]);
            s[j] += &dir.ds[j] * ad;
            symmetrize(&mut s[j]);
        }
        y += &dir.dy * ad;
    }

    let (residual, xb, yb, sb, pobj, dobj) = match status {
        ConeStatus::Converged => {
            let b = best.expect("converged iterate recorded");
            (b.0, x, y, s, b.4, b.5)
        }
        _ => best.unwrap_or((f64::INFINITY, x, y, s, f64::NAN, f64::NAN)),
    };

    // Undo scaling: X_j = X''_j * b / s_j, y_i = y''_i * c / r_i, S_j = S''_j * c * s_j.
    let xs_out: Vec<RMatrix> = xb
        .iter()
        .enumerate()
        .map(|(j, xj)| xj * (sc.b / sc.block[j]))
        .collect();
    let ss_out: Vec<RMatrix> = sb
        .iter()
        .enumerate()
        .map(|(j, sj)| sj * (sc.c * sc.block[j]))
        .collect();
    let y_out = RVector::from_iterator(m, (0..m).map(|i| yb[i] * sc.c / sc.row[i]));
    ConeSolution {
        status,
        x: xs_out,
        y: y_out,
        s: ss_out,
        primal_objective: pobj * sc.b * sc.c,
        dual_objective: dobj * sc.b * sc.c,
        residual,
        iterations,
    }
}
