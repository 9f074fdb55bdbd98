//! Recovery of a Jordan product on an order-unit space from its inner
//! product, unit, symmetries and extreme rays.
//!
//! The linear stage solves commutativity, unit, `B`-associativity,
//! `G`-equivariance and idempotence of normalized extreme rays. When a
//! family survives, Levenberg–Marquardt on the Jordan identity runs from
//! several seeds over the affine parametrization.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::quantum::OperatorBasis;
use crate::scalar::Field;

use super::spectral::spectral_decomposition;
use super::{random_vector, rng, JordanAlgebra, Kind};

pub const NEWTON_SEEDS: usize = 8;
/// Seed `i` of the Newton runs uses `RECOVERY_SEED + i`.
pub const RECOVERY_SEED: u64 = 7000;
pub const STEP_TOL: f64 = 1e-12;
pub const ACCEPT_RESIDUAL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200;

/// Membership test for the cone the recovered squares must land in.
#[derive(Debug, Clone)]
pub enum ConeOracle {
    /// `a · v ≥ 0` for every facet normal.
    Facets(Vec<DVector<f64>>),
    /// Positive semidefinite operators in these coordinates.
    Psd(OperatorBasis),
    /// `T⁻¹ v` in the cone of squares of `algebra`.
    Squares { algebra: JordanAlgebra<f64>, inverse: DMatrix<f64> },
}

impl ConeOracle {
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        let scale = 1.0 + v.amax();
        Ok(match self {
            ConeOracle::Facets(f) => f.iter().all(|a| a.dot(v) >= -tol * scale * (1.0 + a.amax())),
            ConeOracle::Psd(ops) => ops.is_psd(v, tol * scale),
            ConeOracle::Squares { algebra, inverse } => {
                let tau = linalg::to_float_mat(&algebra.trace_form());
                spectral_decomposition(algebra, &tau, &(inverse * v))?.min() >= -tol * scale
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryProblem<F: Field> {
    /// The inner product `B`, positive definite.
    pub form: Mat<F>,
    pub unit: Vector<F>,
    pub generators: Vec<Mat<F>>,
    /// Extreme rays of the cone; each is rescaled to `B(c,c) = B(c,u)` and
    /// required to be idempotent.
    pub rays: Vec<Vector<F>>,
    pub cone: ConeOracle,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub squares_in_cone: bool,
    pub trace_form_positive_definite: bool,
}

impl SeedRun {
    pub fn admissible(&self) -> bool {
        self.converged && self.squares_in_cone && self.trace_form_positive_definite
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub dim: usize,
    pub imposed: Vec<&'static str>,
    pub linear_solution_dim: usize,
    /// The linear stage alone fixed the product (exact over rationals).
    pub linear_stage_unique: bool,
    pub seeds: Vec<SeedRun>,
    pub max_pairwise_difference: f64,
    pub unique: bool,
    pub residual: f64,
    pub squares_in_cone: bool,
    pub trace_form_positive_definite: bool,
    pub accepted: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Recovery<F: Field> {
    pub algebra: Option<JordanAlgebra<F>>,
    pub report: RecoveryReport,
}

fn param_index(d: usize, k: usize, i: usize, j: usize) -> usize {
    k * linalg::sym_param_count(d) + linalg::sym_index(d, i, j)
}

struct Rows<F: Field> {
    width: usize,
    rows: Vec<Vec<F>>,
    rhs: Vec<F>,
}

impl<F: Field> Rows<F> {
    fn push(&mut self, coeffs: Vec<(usize, F)>, rhs: F) {
        let mut row = vec![F::zero(); self.width];
        for (i, c) in coeffs {
            row[i] = row[i].clone() + c;
        }
        if row.iter().all(|c| *c == F::zero()) && rhs == F::zero() {
            return;
        }
        self.rows.push(row);
        self.rhs.push(rhs);
    }
}

fn linear_system<F: Field>(p: &RecoveryProblem<F>) -> (Mat<F>, Vector<F>) {
    let d = p.unit.len();
    let width = d * linalg::sym_param_count(d);
    let mut rows = Rows { width, rows: Vec::new(), rhs: Vec::new() };
    let zero = F::zero();
    // unit: Σᵢ uᵢ T[k,i,j] = δₖⱼ
    for k in 0..d {
        for j in 0..d {
            let coeffs = (0..d)
                .filter(|&i| p.unit[i] != zero)
                .map(|i| (param_index(d, k, i, j), p.unit[i].clone()))
                .collect();
            rows.push(coeffs, if k == j { F::one() } else { F::zero() });
        }
    }
    // B(bₐ∘b_b, c) = B(b_b, bₐ∘c)
    for a in 0..d {
        for b in 0..d {
            for c in b + 1..d {
                let mut coeffs = Vec::new();
                for k in 0..d {
                    if p.form[(k, c)] != zero {
                        coeffs.push((param_index(d, k, a, b), p.form[(k, c)].clone()));
                    }
                    if p.form[(b, k)] != zero {
                        coeffs.push((param_index(d, k, a, c), -p.form[(b, k)].clone()));
                    }
                }
                rows.push(coeffs, F::zero());
            }
        }
    }
    // M(bₐ∘b_b) = (M bₐ)∘(M b_b)
    for m in &p.generators {
        for l in 0..d {
            for a in 0..d {
                for b in a..d {
                    let mut coeffs = Vec::new();
                    for k in 0..d {
                        if m[(l, k)] != zero {
                            coeffs.push((param_index(d, k, a, b), m[(l, k)].clone()));
                        }
                    }
                    for i in 0..d {
                        if m[(i, a)] == zero {
                            continue;
                        }
                        for j in 0..d {
                            if m[(j, b)] != zero {
                                coeffs.push((param_index(d, l, i, j), -(m[(i, a)].clone() * m[(j, b)].clone())));
                            }
                        }
                    }
                    rows.push(coeffs, F::zero());
                }
            }
        }
    }
    // c∘c = c for normalized rays
    for r in &p.rays {
        let br = linalg::mat_vec(&p.form, r);
        let rr = linalg::dot(&br, r);
        let ru = linalg::dot(&br, &p.unit);
        if rr == zero {
            continue;
        }
        let c = linalg::vec_scale(r, &(ru / rr));
        for k in 0..d {
            let mut coeffs = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    if c[i] != zero && c[j] != zero {
                        coeffs.push((param_index(d, k, i, j), c[i].clone() * c[j].clone()));
                    }
                }
            }
            rows.push(coeffs, c[k].clone());
        }
    }
    let a = Mat::from_fn(rows.rows.len(), width, |i, j| rows.rows[i][j].clone());
    (a, Vector::from_vec(rows.rhs))
}

fn tensor_from_params<F: Field>(d: usize, x: &Vector<F>) -> Vec<F> {
    let mut dense = vec![F::zero(); d * d * d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                dense[k * d * d + i * d + j] = x[param_index(d, k, i, j)].clone();
            }
        }
    }
    dense
}

/// Unit-norm probes: the basis and `d` seeded random directions.
fn probes(d: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut r = rng(seed);
    let mut out: Vec<DVector<f64>> = (0..d)
        .map(|i| DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 }))
        .collect();
    for _ in 0..d {
        let v = random_vector(d, &mut r);
        out.push(&v / v.norm());
    }
    out
}

fn jordan_residuals(j: &JordanAlgebra<f64>, probes: &[DVector<f64>]) -> DVector<f64> {
    let d = j.dim;
    let mut out = Vec::with_capacity(probes.len() * d * d);
    for a in probes {
        for b in 0..d {
            out.extend(j.jordan_defect(a, &j.basis_vector(b)).iter().cloned());
        }
    }
    DVector::from_vec(out)
}

fn algebra_at(d: usize, unit: &DVector<f64>, x0: &DVector<f64>, null: &DMatrix<f64>, z: &DVector<f64>) -> JordanAlgebra<f64> {
    let x = x0 + null * z;
    JordanAlgebra::from_dense(Kind::Recovered, d, &tensor_from_params(d, &x), unit.clone()).expect("shape")
}

/// Levenberg–Marquardt on the Jordan residual over `x₀ + N z`.
fn newton(
    d: usize,
    unit: &DVector<f64>,
    x0: &DVector<f64>,
    null: &DMatrix<f64>,
    probes: &[DVector<f64>],
    mut z: DVector<f64>,
) -> (DVector<f64>, usize, f64) {
    let m = z.len();
    let res = |z: &DVector<f64>| jordan_residuals(&algebra_at(d, unit, x0, null, z), probes);
    let mut r = res(&z);
    let mut mu = 1e-3;
    let h = 1e-5;
    for it in 0..MAX_ITERATIONS {
        if r.amax() <= 1e-14 {
            return (z, it, r.amax());
        }
        let mut jac = DMatrix::zeros(r.len(), m);
        for c in 0..m {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            jac.set_column(c, &((res(&zp) - res(&zm)) / (2.0 * h)));
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let lhs = &jtj + DMatrix::identity(m, m) * mu;
            let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let zn = &z + &step;
            let rn = res(&zn);
            if rn.norm() < r.norm() {
                let small = step.norm() <= STEP_TOL * (1.0 + z.norm());
                z = zn;
                r = rn;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                if small {
                    return (z, it + 1, r.amax());
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            return (z, it + 1, r.amax());
        }
    }
    (z, MAX_ITERATIONS, r.amax())
}

pub fn recover_jordan_product<F: Field>(p: &RecoveryProblem<F>) -> Result<Recovery<F>> {
    let d = p.unit.len();
    if p.form.shape() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, got: p.form.nrows() });
    }
    if !linalg::is_positive_definite(&p.form) {
        return Err(Error::Singular("recovery needs a positive definite inner product".into()));
    }
    let mut imposed = vec!["commutativity", "unit", "B-associativity"];
    if !p.generators.is_empty() {
        imposed.push("G-equivariance");
    }
    if !p.rays.is_empty() {
        imposed.push("idempotent extreme rays");
    }
    let (a, b) = linear_system(p);
    let Some((x0, null)) = linalg::solve_affine(&a, &b) else {
        return Ok(Recovery {
            algebra: None,
            report: RecoveryReport {
                dim: d,
                imposed,
                linear_solution_dim: 0,
                linear_stage_unique: false,
                seeds: Vec::new(),
                max_pairwise_difference: f64::NAN,
                unique: false,
                residual: f64::NAN,
                squares_in_cone: false,
                trace_form_positive_definite: false,
                accepted: false,
                note: Some("linear constraints are inconsistent".into()),
            },
        });
    };
    let k = null.len();
    let probe_set = probes(d, RECOVERY_SEED);
    let unit_f = linalg::to_float_vec(&p.unit);
    let x0f = linalg::to_float_vec(&x0);
    let nullf = DMatrix::from_fn(x0.len(), k, |i, c| null[c][i].to_f64());

    let mut seeds = Vec::with_capacity(NEWTON_SEEDS);
    let mut solutions: Vec<DVector<f64>> = Vec::with_capacity(NEWTON_SEEDS);
    for s in 0..NEWTON_SEEDS {
        let seed = RECOVERY_SEED + s as u64;
        let (z, iterations, residual) = if k == 0 {
            let z = DVector::zeros(0);
            let r = jordan_residuals(&algebra_at(d, &unit_f, &x0f, &nullf, &z), &probe_set).amax();
            (z, 0, r)
        } else {
            let z0 = random_vector(k, &mut rng(seed));
            newton(d, &unit_f, &x0f, &nullf, &probe_set, z0)
        };
        let converged = residual <= ACCEPT_RESIDUAL;
        let (squares_in_cone, trace_pd) = if converged {
            admissible(&algebra_at(d, &unit_f, &x0f, &nullf, &z), &probe_set, &p.cone)?
        } else {
            (false, false)
        };
        seeds.push(SeedRun {
            seed,
            iterations,
            residual,
            converged,
            squares_in_cone,
            trace_form_positive_definite: trace_pd,
        });
        solutions.push(&x0f + &nullf * z);
    }
    let good: Vec<usize> = (0..NEWTON_SEEDS).filter(|&i| seeds[i].admissible()).collect();
    let mut max_diff: f64 = 0.0;
    for (n, &i) in good.iter().enumerate() {
        for &j in &good[n + 1..] {
            max_diff = max_diff.max((&solutions[i] - &solutions[j]).amax());
        }
    }
    let unique = good.len() == NEWTON_SEEDS && max_diff <= ACCEPT_RESIDUAL;
    let best = good.first().copied().or_else(|| (0..NEWTON_SEEDS).find(|&i| seeds[i].converged));
    let residual = match best {
        Some(b) => seeds[b].residual,
        None => seeds.iter().map(|s| s.residual).fold(f64::INFINITY, f64::min),
    };
    let (squares_in_cone, trace_pd) = best
        .map(|b| (seeds[b].squares_in_cone, seeds[b].trace_form_positive_definite))
        .unwrap_or((false, false));
    let accepted = best.is_some_and(|b| seeds[b].admissible());
    let algebra = match best {
        Some(b) if accepted => Some(if k == 0 {
            JordanAlgebra::from_dense(Kind::Recovered, d, &tensor_from_params(d, &x0), p.unit.clone())?
        } else {
            let x = solutions[b].map(F::from_f64_lossy);
            JordanAlgebra::from_dense(Kind::Recovered, d, &tensor_from_params(d, &x), p.unit.clone())?
        }),
        _ => None,
    };
    let converged = seeds.iter().filter(|s| s.converged).count();
    let note = if best.is_none() {
        Some("no seed satisfied the Jordan identity".to_string())
    } else if !accepted {
        Some("no converged product has its squares in the cone and a definite trace form".to_string())
    } else if good.len() < NEWTON_SEEDS {
        Some(format!("{} of {} seeds gave an admissible product ({converged} converged)", good.len(), NEWTON_SEEDS))
    } else if !unique {
        Some("seeds converged to different products".to_string())
    } else {
        None
    };
    Ok(Recovery {
        algebra,
        report: RecoveryReport {
            dim: d,
            imposed,
            linear_solution_dim: k,
            linear_stage_unique: k == 0,
            seeds,
            max_pairwise_difference: max_diff,
            unique,
            residual,
            squares_in_cone,
            trace_form_positive_definite: trace_pd,
            accepted,
            note,
        },
    })
}

/// Squares of the probes lie in the cone; the trace form is definite.
fn admissible(j: &JordanAlgebra<f64>, probes: &[DVector<f64>], cone: &ConeOracle) -> Result<(bool, bool)> {
    let mut in_cone = true;
    for v in probes {
        if !cone.contains(&j.square(v), 1e-9)? {
            in_cone = false;
            break;
        }
    }
    Ok((in_cone, linalg::is_positive_definite(&j.trace_form())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jordan::{real_sym, spin_factor};
    use crate::scalar::{q, qi, Q};

    fn classical_problem(rays: bool) -> RecoveryProblem<Q> {
        let d = 3;
        let form = Mat::from_fn(d, d, |i, j| if i == j { q(1, 3) } else { qi(0) });
        let perms = [[1, 0, 2], [1, 2, 0]];
        let generators = perms
            .iter()
            .map(|p| Mat::from_fn(d, d, |i, j| if p[j] == i { qi(1) } else { qi(0) }))
            .collect();
        let basis: Vec<Vector<Q>> = (0..d)
            .map(|i| Vector::from_fn(d, |k, _| if k == i { qi(1) } else { qi(0) }))
            .collect();
        RecoveryProblem {
            form,
            unit: Vector::from_element(d, qi(1)),
            generators,
            rays: if rays { basis.clone() } else { Vec::new() },
            cone: ConeOracle::Facets(basis.iter().map(linalg::to_float_vec).collect()),
        }
    }

    #[test]
    fn classical_product_from_the_linear_stage() {
        let r = recover_jordan_product(&classical_problem(true)).unwrap();
        assert_eq!(r.report.linear_solution_dim, 0);
        assert!(r.report.accepted && r.report.unique);
        let j = r.algebra.unwrap();
        let a = Vector::from_vec(vec![qi(2), q(1, 2), qi(-3)]);
        let b = Vector::from_vec(vec![qi(5), qi(4), q(1, 3)]);
        assert_eq!(j.product(&a, &b), Vector::from_vec(vec![qi(10), qi(2), qi(-1)]));
    }

    #[test]
    fn without_rays_a_family_survives_the_linear_stage() {
        let r = recover_jordan_product(&classical_problem(false)).unwrap();
        assert!(r.report.linear_solution_dim >= 1);
        assert_eq!(r.report.seeds.len(), NEWTON_SEEDS);
    }

    #[test]
    fn transported_real_symmetric_product() {
        let j = real_sym(2);
        let jf = j.to_float();
        let tau = linalg::to_float_mat(&j.trace_form());
        // a rotation in τ-orthonormal coordinates
        let th: f64 = 0.7;
        let s = tau.clone().cholesky().unwrap().l().transpose();
        let rot = DMatrix::from_row_slice(3, 3, &[th.cos(), -th.sin(), 0.0, th.sin(), th.cos(), 0.0, 0.0, 0.0, 1.0]);
        let t = s.clone().try_inverse().unwrap() * rot * &s;
        let moved = jf.transport(&t).unwrap();
        let t_inv = t.clone().try_inverse().unwrap();
        let form = t_inv.transpose() * &tau * &t_inv;
        let rays: Vec<DVector<f64>> = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.5], [0.5, 0.5, -0.5]]
            .iter()
            .map(|c| &t * DVector::from_row_slice(c))
            .collect();
        let p = RecoveryProblem {
            form,
            unit: moved.unit.clone(),
            generators: Vec::new(),
            rays,
            cone: ConeOracle::Squares { algebra: jf.clone(), inverse: t_inv },
        };
        let r = recover_jordan_product(&p).unwrap();
        assert!(r.report.accepted, "{:?}", r.report);
        let got = r.algebra.unwrap().dense();
        let want = moved.dense();
        let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8);
    }

    #[test]
    fn spin_factor_from_its_trace_form() {
        let j = spin_factor(3);
        let p = RecoveryProblem {
            form: j.trace_form(),
            unit: j.unit.clone(),
            generators: vec![Mat::from_fn(4, 4, |r, c| match (r, c) {
                (0, 0) => qi(-1),
                _ if r == c => qi(1),
                _ => qi(0),
            })],
            rays: vec![
                Vector::from_vec(vec![qi(1), qi(0), qi(0), qi(1)]),
                Vector::from_vec(vec![qi(0), qi(1), qi(0), qi(1)]),
                Vector::from_vec(vec![qi(0), qi(0), qi(1), qi(1)]),
                Vector::from_vec(vec![qi(-1), qi(0), qi(0), qi(1)]),
                Vector::from_vec(vec![qi(0), qi(-1), qi(0), qi(1)]),
                Vector::from_vec(vec![qi(0), qi(0), qi(-1), qi(1)]),
            ],
            cone: ConeOracle::Squares {
                algebra: j.to_float(),
                inverse: DMatrix::identity(4, 4),
            },
        };
        let r = recover_jordan_product(&p).unwrap();
        assert!(r.report.accepted, "{:?}", r.report);
        assert!(r.report.unique, "{:?}", r.report.note);
        let got = r.algebra.unwrap().dense();
        assert!(got.iter().zip(j.dense()).all(|(a, b)| (a.to_f64() - b.to_f64()).abs() < 1e-8));
    }
}
