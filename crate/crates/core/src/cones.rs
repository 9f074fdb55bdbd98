//! Exact polyhedral cones: double description, duals, membership
//! certificates, self-duality and order-isomorphisms.

use std::collections::HashSet;

use nalgebra::DVector;
use num::bigint::BigInt;
use num::{Integer, One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lp::{self, LinearProgram, Relation};
use crate::model::quantum::{sample_pure_states, HilbertField, OperatorBasis};
use crate::scalar::{render_rational, Q, FLOAT_TOL};
use crate::verdict::Tri;

/// Default ray cap for the weak self-duality search.
pub const WEAK_RAY_CAP: usize = 12;

/// Scales a non-zero rational vector to the primitive integer vector on its ray.
pub fn primitive(v: &[Q]) -> Vec<Q> {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * Q::from_integer(lcm.clone())).to_integer()).collect();
    let gcd = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if gcd.is_zero() {
        return v.to_vec();
    }
    ints.into_iter().map(|x| Q::from_integer(x / &gcd)).collect()
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finitely generated cone in `ℚ^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyhedralCone {
    pub dim: usize,
    /// Non-zero primitive integer vectors, distinct.
    pub generators: Vec<Vec<Q>>,
}

impl PolyhedralCone {
    pub fn new(dim: usize, generators: impl IntoIterator<Item = Vec<Q>>) -> Result<Self> {
        let mut out: Vec<Vec<Q>> = Vec::new();
        for g in generators {
            if g.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: g.len() });
            }
            if g.iter().all(|x| x.is_zero()) {
                continue;
            }
            let p = primitive(&g);
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(PolyhedralCone { dim, generators: out })
    }

    pub fn from_vectors<F: crate::scalar::Field>(dim: usize, vectors: &[Vector<F>]) -> Result<Self> {
        Self::new(dim, vectors.iter().map(|v| v.iter().map(crate::scalar::Field::to_rational).collect()))
    }

    /// The non-negative orthant.
    pub fn orthant(dim: usize) -> Self {
        let gens = (0..dim).map(|i| (0..dim).map(|j| if i == j { Q::one() } else { Q::zero() }).collect());
        Self::new(dim, gens).expect("shape")
    }

    pub fn membership(&self, v: &[Q]) -> MembershipCertificate {
        match lp::conic_combination(&self.generators, v) {
            Ok(c) => MembershipCertificate::Combination(c),
            Err(z) => MembershipCertificate::Separator(z),
        }
    }

    pub fn contains(&self, v: &[Q]) -> bool {
        lp::conic_combination(&self.generators, v).is_ok()
    }

    /// Generators that are not conic combinations of the others.
    pub fn irredundant(&self) -> PolyhedralCone {
        let mut keep: Vec<Vec<Q>> = self.generators.clone();
        let mut i = 0;
        while i < keep.len() {
            let others: Vec<Vec<Q>> = keep
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, g)| g.clone())
                .collect();
            if !others.is_empty() && lp::conic_combination(&others, &keep[i]).is_ok() {
                keep.remove(i);
            } else {
                i += 1;
            }
        }
        PolyhedralCone {
            dim: self.dim,
            generators: keep,
        }
    }

    pub fn rank(&self) -> usize {
        let m = Mat::from_fn(self.dim, self.generators.len(), |i, j| self.generators[j][i].clone());
        linalg::rank(&m)
    }

    /// No line through the origin lies in the cone.
    pub fn is_pointed(&self) -> bool {
        // pointed iff 0 = Σ λ g with Σ λ = 1, λ ≥ 0 is infeasible
        if self.generators.is_empty() {
            return true;
        }
        let mut lp = LinearProgram::new(self.generators.len());
        for i in 0..self.dim {
            let coeffs = self.generators.iter().enumerate().map(|(j, g)| (j, g[i].clone())).collect();
            lp.add_constraint(coeffs, Relation::Eq, Q::zero());
        }
        lp.add_constraint((0..self.generators.len()).map(|j| (j, Q::one())).collect(), Relation::Eq, Q::one());
        !lp.solve().is_feasible()
    }

    /// Same set of generators (as a set of rays).
    pub fn same_generators(&self, other: &PolyhedralCone) -> bool {
        let a: HashSet<&Vec<Q>> = self.generators.iter().collect();
        let b: HashSet<&Vec<Q>> = other.generators.iter().collect();
        a == b
    }

    /// Equal as sets, by mutual generator containment.
    pub fn equals(&self, other: &PolyhedralCone) -> bool {
        self.dim == other.dim
            && self.generators.iter().all(|g| other.contains(g))
            && other.generators.iter().all(|g| self.contains(g))
    }

    pub fn render(&self) -> Vec<Vec<String>> {
        self.generators.iter().map(|g| g.iter().map(render_rational).collect()).collect()
    }

    /// Inequalities `a · v ≥ 0` describing the cone.
    pub fn facets(&self) -> Vec<Vec<Q>> {
        let id: Mat<Q> = linalg::identity(self.dim);
        double_description(self.dim, &pairing_rows(&self.generators, &id)).generators
    }
}

/// A membership verdict that can be re-checked by substitution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MembershipCertificate {
    /// Non-negative coefficients reproducing the vector.
    Combination(Vec<Q>),
    /// A functional non-negative on every generator and negative on the vector.
    Separator(Vec<Q>),
}

impl MembershipCertificate {
    pub fn is_member(&self) -> bool {
        matches!(self, MembershipCertificate::Combination(_))
    }

    pub fn verify(&self, generators: &[Vec<Q>], v: &[Q]) -> bool {
        match self {
            MembershipCertificate::Combination(c) => {
                c.len() == generators.len()
                    && c.iter().all(|x| !x.is_negative())
                    && (0..v.len()).all(|i| {
                        generators.iter().zip(c).map(|(g, x)| &g[i] * x).sum::<Q>() == v[i]
                    })
            }
            MembershipCertificate::Separator(z) => {
                z.len() == v.len()
                    && generators.iter().all(|g| !dot(z, g).is_negative())
                    && dot(z, v).is_negative()
            }
        }
    }
}

impl Serialize for MembershipCertificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(1))?;
        match self {
            MembershipCertificate::Combination(c) => {
                map.serialize_entry("coefficients", &c.iter().map(render_rational).collect::<Vec<_>>())?
            }
            MembershipCertificate::Separator(z) => {
                map.serialize_entry("separator", &z.iter().map(render_rational).collect::<Vec<_>>())?
            }
        }
        map.end()
    }
}

fn pairing_rows(generators: &[Vec<Q>], b: &Mat<Q>) -> Vec<Vec<Q>> {
    generators
        .iter()
        .map(|g| {
            let bg = linalg::mat_vec(b, &Vector::from_vec(g.clone()));
            bg.iter().cloned().collect()
        })
        .collect()
}

/// Generators of `{v : a · v ≥ 0 for every row a}`; lineality directions
/// appear as opposite pairs.
pub fn double_description(dim: usize, rows: &[Vec<Q>]) -> PolyhedralCone {
    let mut lineality: Vec<Vec<Q>> = (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { Q::one() } else { Q::zero() }).collect())
        .collect();
    let mut rays: Vec<Vec<Q>> = Vec::new();
    let mut processed: Vec<Vec<Q>> = Vec::new();
    for a in rows {
        if a.iter().all(|x| x.is_zero()) {
            continue;
        }
        if let Some(k) = lineality.iter().position(|l| !dot(a, l).is_zero()) {
            let mut l0 = lineality.remove(k);
            if dot(a, &l0).is_negative() {
                l0 = l0.iter().map(|x| -x).collect();
            }
            let al0 = dot(a, &l0);
            let project = |v: &Vec<Q>| -> Vec<Q> {
                let f = dot(a, v) / &al0;
                v.iter().zip(&l0).map(|(x, y)| x - &f * y).collect()
            };
            lineality = lineality.iter().map(project).collect();
            rays = rays.iter().map(|r| primitive(&project(r))).collect();
            rays.push(primitive(&l0));
        } else {
            let vals: Vec<Q> = rays.iter().map(|r| dot(a, r)).collect();
            let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_positive()).collect();
            let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_negative()).collect();
            let zero_sets: Vec<Vec<usize>> = rays
                .iter()
                .map(|r| (0..processed.len()).filter(|&j| dot(&processed[j], r).is_zero()).collect())
                .collect();
            let target_rank = dim.saturating_sub(lineality.len() + 2);
            let mut next: Vec<Vec<Q>> = (0..rays.len())
                .filter(|&i| !vals[i].is_negative())
                .map(|i| rays[i].clone())
                .collect();
            for &p in &pos {
                for &n in &neg {
                    let common: Vec<usize> = zero_sets[p]
                        .iter()
                        .filter(|j| zero_sets[n].contains(j))
                        .copied()
                        .collect();
                    if common.len() < target_rank {
                        continue;
                    }
                    let sub = Mat::from_fn(common.len(), dim, |i, j| processed[common[i]][j].clone());
                    if linalg::rank(&sub) != target_rank {
                        continue;
                    }
                    let new: Vec<Q> = rays[n]
                        .iter()
                        .zip(&rays[p])
                        .map(|(rn, rp)| &vals[p] * rn - &vals[n] * rp)
                        .collect();
                    let new = primitive(&new);
                    if !next.contains(&new) {
                        next.push(new);
                    }
                }
            }
            rays = next;
        }
        processed.push(a.clone());
    }
    let mut gens = rays;
    for l in lineality {
        gens.push(l.iter().map(|x| -x).collect());
        gens.push(l);
    }
    PolyhedralCone::new(dim, gens).expect("shape")
}

/// `{v : B(v, g) ≥ 0 for every generator g}`.
pub fn dual_cone(k: &PolyhedralCone, b: &Mat<Q>) -> Result<PolyhedralCone> {
    if b.shape() != (k.dim, k.dim) {
        return Err(Error::DimensionMismatch { expected: k.dim, got: b.nrows() });
    }
    if linalg::inverse(b).is_none() {
        return Err(Error::Singular("pairing form is degenerate".into()));
    }
    Ok(double_description(k.dim, &pairing_rows(&k.generators, b)))
}

#[derive(Debug, Clone, Serialize)]
pub struct RayCheck {
    /// `cone-in-dual` or `dual-in-cone`.
    pub direction: &'static str,
    pub ray: Vec<String>,
    pub certificate: MembershipCertificate,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityCertificate {
    pub verdict: bool,
    pub method: &'static str,
    pub cone_rays: Vec<Vec<String>>,
    pub dual_rays: Vec<Vec<String>>,
    pub checks: Vec<RayCheck>,
}

/// Checks `K = K*` under `B` ray by ray, with re-verifiable certificates.
pub fn is_self_dual(k: &PolyhedralCone, b: &Mat<Q>) -> Result<(DualityCertificate, PolyhedralCone)> {
    let dual = dual_cone(k, b)?;
    let mut checks = Vec::new();
    let mut verdict = true;
    for g in &k.generators {
        let c = dual.membership(g);
        verdict &= c.is_member();
        checks.push(RayCheck {
            direction: "cone-in-dual",
            ray: g.iter().map(render_rational).collect(),
            certificate: c,
        });
    }
    for g in &dual.generators {
        let c = k.membership(g);
        verdict &= c.is_member();
        checks.push(RayCheck {
            direction: "dual-in-cone",
            ray: g.iter().map(render_rational).collect(),
            certificate: c,
        });
    }
    Ok((
        DualityCertificate {
            verdict,
            method: "exact",
            cone_rays: k.render(),
            dual_rays: dual.render(),
            checks,
        },
        dual,
    ))
}

/// Re-checks every certificate against the two cones.
pub fn verify_duality_certificate(cert: &DualityCertificate, k: &PolyhedralCone, dual: &PolyhedralCone) -> bool {
    let mut idx_k = 0;
    let mut idx_d = 0;
    cert.checks.iter().all(|c| match c.direction {
        "cone-in-dual" => {
            let g = &k.generators[idx_k];
            idx_k += 1;
            c.certificate.verify(&dual.generators, g)
        }
        _ => {
            let g = &dual.generators[idx_d];
            idx_d += 1;
            c.certificate.verify(&k.generators, g)
        }
    }) && cert.verdict == cert.checks.iter().all(|c| c.certificate.is_member())
}

/// Two rays are adjacent when the facets containing both have rank `d - 2`.
fn ray_adjacency(k: &PolyhedralCone) -> Vec<Vec<bool>> {
    let facets = k.facets();
    let d = k.dim;
    let zero: Vec<Vec<usize>> = k
        .generators
        .iter()
        .map(|r| (0..facets.len()).filter(|&j| dot(&facets[j], r).is_zero()).collect())
        .collect();
    let m = k.generators.len();
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let common: Vec<usize> = zero[i].iter().filter(|f| zero[j].contains(f)).copied().collect();
            let sub = Mat::from_fn(common.len(), d, |r, c| facets[common[r]][c].clone());
            let a = common.len() >= d.saturating_sub(2) && linalg::rank(&sub) == d.saturating_sub(2);
            adj[i][j] = a;
            adj[j][i] = a;
        }
    }
    adj
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakSelfDuality {
    pub verdict: Tri,
    /// `T` with `T K = K*`, row-major, when found.
    pub map: Option<Vec<Vec<String>>>,
    /// `pi[i]`: the dual ray hit by cone ray `i`.
    pub ray_bijection: Option<Vec<usize>>,
    pub bijections_tried: usize,
}

/// Searches for an invertible `T` with `T K = K*`: ray bijections that
/// preserve adjacency, each tested by an exact LP for `T rᵢ = λᵢ s_π(i)`,
/// `λ ≥ 1`.
pub fn is_weakly_self_dual(k: &PolyhedralCone, b: &Mat<Q>, cap: usize) -> Result<WeakSelfDuality> {
    let k = k.irredundant();
    let dual = dual_cone(&k, b)?.irredundant();
    let m = k.generators.len();
    let unknown = WeakSelfDuality {
        verdict: Tri::Unknown,
        map: None,
        ray_bijection: None,
        bijections_tried: 0,
    };
    if m > cap || dual.generators.len() > cap || !k.is_pointed() || k.rank() < k.dim {
        return Ok(unknown);
    }
    if dual.generators.len() != m {
        return Ok(WeakSelfDuality { verdict: Tri::No, ..unknown });
    }
    let (adj_k, adj_d) = (ray_adjacency(&k), ray_adjacency(&dual));
    let degree = |a: &Vec<Vec<bool>>, i: usize| a[i].iter().filter(|&&x| x).count();
    let mut deg_k: Vec<usize> = (0..m).map(|i| degree(&adj_k, i)).collect();
    let mut deg_d: Vec<usize> = (0..m).map(|i| degree(&adj_d, i)).collect();
    deg_k.sort_unstable();
    deg_d.sort_unstable();
    if deg_k != deg_d {
        return Ok(WeakSelfDuality { verdict: Tri::No, ..unknown });
    }
    let mut pi = vec![usize::MAX; m];
    let mut used = vec![false; m];
    let mut tried = 0;
    let found = search_bijection(0, &k, &dual, &adj_k, &adj_d, &mut pi, &mut used, &mut tried);
    Ok(match found {
        Some(t) => WeakSelfDuality {
            verdict: Tri::Yes,
            map: Some(
                (0..t.nrows())
                    .map(|i| (0..t.ncols()).map(|j| render_rational(&t[(i, j)])).collect())
                    .collect(),
            ),
            ray_bijection: Some(pi),
            bijections_tried: tried,
        },
        None => WeakSelfDuality {
            verdict: Tri::No,
            map: None,
            ray_bijection: None,
            bijections_tried: tried,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn search_bijection(
    i: usize,
    k: &PolyhedralCone,
    dual: &PolyhedralCone,
    adj_k: &[Vec<bool>],
    adj_d: &[Vec<bool>],
    pi: &mut Vec<usize>,
    used: &mut Vec<bool>,
    tried: &mut usize,
) -> Option<Mat<Q>> {
    let m = pi.len();
    if i == m {
        *tried += 1;
        return ray_map(k, dual, pi);
    }
    for j in 0..m {
        if used[j] || (0..i).any(|p| adj_k[i][p] != adj_d[j][pi[p]]) {
            continue;
        }
        pi[i] = j;
        used[j] = true;
        if let Some(t) = search_bijection(i + 1, k, dual, adj_k, adj_d, pi, used, tried) {
            return Some(t);
        }
        used[j] = false;
    }
    pi[i] = usize::MAX;
    None
}

/// Solves `T rᵢ = λᵢ s_π(i)` with `λ ≥ 1` exactly; `T` entries are free.
fn ray_map(k: &PolyhedralCone, dual: &PolyhedralCone, pi: &[usize]) -> Option<Mat<Q>> {
    let d = k.dim;
    let m = pi.len();
    let t_vars = d * d;
    // variables: T⁺ (d²), T⁻ (d²), λ (m)
    let mut lp = LinearProgram::new(2 * t_vars + m);
    for (i, r) in k.generators.iter().enumerate() {
        let s = &dual.generators[pi[i]];
        for row in 0..d {
            let mut coeffs: Vec<(usize, Q)> = Vec::new();
            for col in 0..d {
                if !r[col].is_zero() {
                    coeffs.push((row * d + col, r[col].clone()));
                    coeffs.push((t_vars + row * d + col, -r[col].clone()));
                }
            }
            if !s[row].is_zero() {
                coeffs.push((2 * t_vars + i, -s[row].clone()));
            }
            lp.add_constraint(coeffs, Relation::Eq, Q::zero());
        }
        lp.add_constraint(vec![(2 * t_vars + i, Q::one())], Relation::Ge, Q::one());
    }
    let sol = lp.solve();
    let x = sol.solution()?;
    let t = Mat::from_fn(d, d, |r, c| x[r * d + c].clone() - x[t_vars + r * d + c].clone());
    linalg::inverse(&t).map(|_| t)
}

/// Every generator of `k1` lands in `k2`.
pub fn is_positive_map(m: &Mat<Q>, k1: &PolyhedralCone, k2: &PolyhedralCone) -> bool {
    k1.generators.iter().all(|g| {
        let img = linalg::mat_vec(m, &Vector::from_vec(g.clone()));
        k2.contains(img.as_slice())
    })
}

/// Invertible, positive, with positive inverse.
pub fn is_order_isomorphism(m: &Mat<Q>, k1: &PolyhedralCone, k2: &PolyhedralCone) -> bool {
    match linalg::inverse(m) {
        Some(inv) => is_positive_map(m, k1, k2) && is_positive_map(&inv, k2, k1),
        None => false,
    }
}

/// Pure states on a deterministic grid: 20 points of a Fibonacci sphere on
/// the complex qubit, equally spaced lines on the real qubit, seeded random
/// states otherwise.
pub fn pure_state_grid(basis: &OperatorBasis, count: usize) -> Vec<DVector<f64>> {
    use crate::model::quantum::{projector, CVec};
    use nalgebra::Complex;
    match (basis.field(), basis.hilbert_dim()) {
        (HilbertField::Complex, 2) => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let theta = z.acos();
                    let phi = golden * i as f64;
                    let v = CVec::from_vec(vec![
                        Complex::new((theta / 2.0).cos(), 0.0),
                        Complex::from_polar((theta / 2.0).sin(), phi),
                    ]);
                    basis.coords(&projector(&v))
                })
                .collect()
        }
        (HilbertField::Real, 2) => (0..count)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / count as f64;
                let v = CVec::from_vec(vec![Complex::new(t.cos(), 0.0), Complex::new(t.sin(), 0.0)]);
                basis.coords(&projector(&v))
            })
            .collect(),
        _ => sample_pure_states(basis, count, 20),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledSelfDuality {
    pub verdict: bool,
    pub method: &'static str,
    pub samples: usize,
    /// Smallest `B(x, y)` over sampled pure-state pairs.
    pub min_pairing: f64,
    /// `B = c · tr` with `c > 0`, which makes the PSD cone its own dual.
    pub proportional_to_trace: bool,
    pub trace_scale: f64,
    /// Sampled non-PSD operators, each separated from the dual by a pure state.
    pub separated_non_members: usize,
}

/// PSD cone self-duality: pairings on a grid of pure states plus the
/// analytic trace-form criterion.
pub fn psd_self_duality(basis: &OperatorBasis, b: &Mat<f64>, count: usize) -> SampledSelfDuality {
    let grid = pure_state_grid(basis, count);
    let mut min_pairing = f64::INFINITY;
    for x in &grid {
        for y in &grid {
            min_pairing = min_pairing.min((x.transpose() * b * y)[0]);
        }
    }
    let gram = basis.trace_gram();
    let c = b[(0, 0)] / gram[(0, 0)];
    let proportional = c > FLOAT_TOL && (b - &gram * c).norm() <= FLOAT_TOL * (1.0 + c);
    // operators with a negative eigenvalue pair negatively with that eigenvector
    let mut separated = 0;
    let probes = sample_pure_states(basis, count, 21);
    for (i, p) in probes.iter().enumerate() {
        let mut v = p.clone() * -1.0;
        v[0] += 0.5 / basis.hilbert_dim() as f64 * (i % 3) as f64;
        let m = basis.matrix(&v);
        let h = (&m + m.adjoint()) * nalgebra::Complex::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        let (k, lowest) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
        if lowest >= -FLOAT_TOL {
            continue;
        }
        let w = crate::model::quantum::projector(&eig.eigenvectors.column(k).into_owned());
        if (v.transpose() * b * basis.coords(&w))[0] < -FLOAT_TOL {
            separated += 1;
        }
    }
    SampledSelfDuality {
        verdict: min_pairing >= -FLOAT_TOL && proportional,
        method: "sampled+analytic",
        samples: grid.len(),
        min_pairing,
        proportional_to_trace: proportional,
        trace_scale: c,
        separated_non_members: separated,
    }
}

/// Positivity of a map on the PSD cone, checked on a pure-state grid.
pub fn is_positive_map_psd(m: &Mat<f64>, source: &OperatorBasis, target: &OperatorBasis, count: usize) -> bool {
    pure_state_grid(source, count)
        .iter()
        .all(|x| target.is_psd(&(m * x), FLOAT_TOL))
}
