use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{norm2, SpdSolver};
use crate::assembly::{build_discretization, FracParams, GagliardoDiscretization, MassMatrix, Variant};
use crate::error::{FracError, Result, StalledIterate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerOptions {
    pub max_iters: usize,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    /// Step reduction factor used when the quadratic fit is unusable.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Relative quotient decrease regarded as stagnation.
    pub tol: f64,
    /// Consecutive stagnating iterations required to stop.
    pub patience: usize,
    /// Number of starting vectors: the `p = 2` eigenvector, then seeded random vectors.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            armijo: 1e-4,
            shrink: 0.25,
            max_backtracks: 60,
            tol: 1e-13,
            patience: 8,
            restarts: 2,
            seed: 0x5eed,
        }
    }
}

impl MinimizerOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.restarts == 0 || self.max_iters == 0 {
            return Err(FracError::invalid("minimiser needs tol > 0, restarts >= 1, max_iters >= 1"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(FracError::invalid("line search constants out of range"));
        }
        Ok(())
    }
}

/// `R(u) = (E(u) + N_extra(u)) / N_mass(u)` over the free dofs, optionally restricted to
/// `c^T u = 0`.
pub struct QuotientProblem<'a> {
    pub disc: &'a GagliardoDiscretization,
    pub mass: &'a MassMatrix,
    pub extra: Option<&'a MassMatrix>,
    pub constraint: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub value: f64,
    /// Minimiser, normalised to unit Euclidean length.
    pub vector: Vec<f64>,
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Index of the start that produced the minimum (0 is the warm start).
    pub start: usize,
}

/// First eigenvalue `min R(u)` of the weighted problem at exponent `p`. The Neumann
/// variant adds the unweighted `L^p` term to the numerator.
pub fn min_rayleigh_p(
    disc: &GagliardoDiscretization,
    mass: &MassMatrix,
    params: FracParams,
    opts: &MinimizerOptions,
) -> Result<Minimum> {
    if disc.params() != params || mass.p() != params.p() {
        return Err(FracError::invalid("discretisation, mass and parameters disagree"));
    }
    let extra = match disc.variant() {
        Variant::RegionalNeumann => Some(MassMatrix::unit(disc.grid(), params.p(), Variant::RegionalNeumann)?),
        Variant::DirichletExterior => None,
    };
    let problem = QuotientProblem { disc, mass, extra: extra.as_ref(), constraint: None };
    minimize_quotient(&problem, opts)
}

impl QuotientProblem<'_> {
    fn check(&self) -> Result<()> {
        let dim = self.disc.dim();
        if self.mass.dim() != dim || self.extra.is_some_and(|e| e.dim() != dim) {
            return Err(FracError::invalid("quotient parts have different sizes"));
        }
        if self.constraint.as_ref().is_some_and(|c| c.len() != dim) {
            return Err(FracError::invalid("constraint vector has the wrong length"));
        }
        Ok(())
    }

    fn value(&self, u: &[f64]) -> Result<f64> {
        let mut num = self.disc.energy(u)?;
        if let Some(e) = self.extra {
            num += e.lp_value(u)?;
        }
        Ok(num / self.mass.lp_value(u)?)
    }

    fn value_and_gradient(&self, u: &[f64], eta: f64) -> Result<(f64, Vec<f64>)> {
        let mut num = self.disc.energy(u)?;
        let mut dnum = self.disc.smoothed_gradient(u, eta)?;
        if let Some(e) = self.extra {
            num += e.lp_value(u)?;
            for (g, v) in dnum.iter_mut().zip(e.lp_gradient(u)?) {
                *g += v;
            }
        }
        let den = self.mass.lp_value(u)?;
        let r = num / den;
        let dden = self.mass.lp_gradient(u)?;
        let grad = dnum.iter().zip(&dden).map(|(a, b)| (a - r * b) / den).collect();
        Ok((r, grad))
    }
}

/// `p = 2` operator used to precondition the descent: the quadratic form at the same `s`,
/// plus the unit mass when constants (or a constrained direction) would make it singular.
pub(crate) struct Preconditioner {
    solver: SpdSolver,
    /// `P^{-1} c` and `c^T P^{-1} c` for the linear constraint.
    constraint: Option<(Vec<f64>, Vec<f64>, f64)>,
}

impl Preconditioner {
    fn new(problem: &QuotientProblem<'_>) -> Result<Self> {
        let disc = problem.disc;
        let params = disc.params();
        let owned;
        let quad = if params.is_quadratic() {
            disc
        } else {
            owned = build_discretization(disc.grid(), params.quadratic(), disc.variant(), disc.quad_order())?;
            &owned
        };
        let mut matrix = quad.assemble_form_p2()?.matrix;
        if disc.variant() == Variant::RegionalNeumann {
            matrix += MassMatrix::unit(disc.grid(), 2.0, disc.variant())?.to_dense();
        }
        let solver = SpdSolver::new(matrix.as_ref())?;
        let constraint = problem.constraint.as_ref().map(|c| {
            let pc = solver.solve(c);
            let cpc = dot(c, &pc);
            (c.clone(), pc, cpc)
        });
        Ok(Self { solver, constraint })
    }

    /// `P^{-1} g` projected onto the constraint plane in the `P` metric.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut z = self.solver.solve(g);
        if let Some((c, pc, cpc)) = &self.constraint {
            let beta = dot(c, &z) / cpc;
            for (zi, pi) in z.iter_mut().zip(pc) {
                *zi -= beta * pi;
            }
        }
        z
    }

    fn project(&self, u: &mut [f64]) {
        if let Some((c, pc, cpc)) = &self.constraint {
            let beta = dot(c, u) / cpc;
            for (ui, pi) in u.iter_mut().zip(pc) {
                *ui -= beta * pi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(mut u: Vec<f64>) -> Vec<f64> {
    let n = norm2(&u);
    for x in &mut u {
        *x /= n;
    }
    u
}

fn starts(problem: &QuotientProblem<'_>, pre: &Preconditioner, opts: &MinimizerOptions) -> Vec<Vec<f64>> {
    let dim = problem.disc.dim();
    let mut out = Vec::with_capacity(opts.restarts);
    // Inverse iteration for the p = 2 ground state of the preconditioner.
    let mut v = vec![1.0; dim];
    if problem.constraint.is_some() {
        v = (0..dim).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / dim as f64).cos()).collect();
    }
    pre.project(&mut v);
    for _ in 0..30 {
        v = normalized(pre.apply(&problem.mass.apply(&v)));
    }
    out.push(v);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.restarts {
        let r: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        out.push(normalized(pre.apply(&r)));
    }
    out
}

/// Preconditioned descent on the quotient with Polak-Ribiere conjugate directions and a
/// backtracking line search on the unit sphere. Every accepted step strictly decreases `R`.
pub fn minimize_quotient(problem: &QuotientProblem<'_>, opts: &MinimizerOptions) -> Result<Minimum> {
    opts.validate()?;
    problem.check()?;
    let pre = Preconditioner::new(problem)?;
    let mut best: Option<Minimum> = None;
    let mut failure: Option<FracError> = None;
    for (k, u0) in starts(problem, &pre, opts).into_iter().enumerate() {
        match descend(problem, &pre, u0, opts) {
            Ok(mut m) => {
                m.start = k;
                log::debug!("start {k}: R = {:.15e} after {} iterations", m.value, m.iterations);
                if best.as_ref().is_none_or(|b| m.value < b.value) {
                    best = Some(m);
                }
            }
            Err(e @ FracError::NoConvergence { .. }) => {
                let worse = match (&failure, &e) {
                    (Some(FracError::NoConvergence { last: a, .. }), FracError::NoConvergence { last: b, .. }) => b < a,
                    _ => true,
                };
                if worse {
                    failure = Some(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| failure.expect("at least one start"))
}

fn descend(problem: &QuotientProblem<'_>, pre: &Preconditioner, u0: Vec<f64>, opts: &MinimizerOptions) -> Result<Minimum> {
    let p = problem.disc.params().p();
    let eta_of = |u: &[f64]| if p < 2.0 { 1e-10 * u.iter().fold(0.0f64, |m, x| m.max(x.abs())) } else { 0.0 };
    let mut u = u0;
    let (mut r, mut g) = problem.value_and_gradient(&u, eta_of(&u))?;
    if !r.is_finite() {
        return Err(FracError::Numerical("quotient is not finite at the starting vector".into()));
    }
    let mut z = pre.apply(&g);
    let mut d: Vec<f64> = z.iter().map(|x| -x).collect();
    let mut gz = dot(&g, &z);
    let mut step = 1e-2;
    let mut history = vec![r];
    let mut quiet = 0;

    for it in 0..opts.max_iters {
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = z.iter().map(|x| -x).collect();
            slope = -gz;
        }
        let dn = norm2(&d);
        if slope == 0.0 || dn == 0.0 {
            return Ok(Minimum { value: r, vector: u, history, iterations: it, start: 0 });
        }
        let slope = slope / dn;
        let trial = |t: f64| -> Result<(f64, Vec<f64>)> {
            let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t / dn * b).collect();
            let v = normalized(v);
            Ok((problem.value(&v)?, v))
        };

        let mut t = step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let (rt, vt) = trial(t)?;
            let curv = rt - r - slope * t;
            if rt <= r + opts.armijo * slope * t {
                let mut pick = (rt, vt, t);
                if curv > 0.0 {
                    let tq = -slope * t * t / (2.0 * curv);
                    if tq > 1.1 * t && tq < 20.0 * t {
                        let (rq, vq) = trial(tq)?;
                        if rq < pick.0 {
                            pick = (rq, vq, tq);
                        }
                    }
                }
                accepted = Some(pick);
                break;
            }
            let tq = if curv > 0.0 { -slope * t * t / (2.0 * curv) } else { 0.0 };
            t = if tq > 0.05 * t && tq < 0.9 * t { tq } else { opts.shrink * t };
        }
        let Some((r_new, u_new, t_used)) = accepted else {
            // No decrease representable in floating point along a fresh gradient direction.
            if d.iter().zip(&z).all(|(a, b)| *a == -*b) {
                return Ok(Minimum { value: r, vector: u, history, iterations: it, start: 0 });
            }
            d = z.iter().map(|x| -x).collect();
            continue;
        };
        step = (2.0 * t_used).min(1.0);
        let rel = (r - r_new) / r_new.abs();
        quiet = if rel < opts.tol { quiet + 1 } else { 0 };
        u = u_new;
        r = r_new;
        history.push(r);
        if quiet >= opts.patience {
            return Ok(Minimum { value: r, vector: u, history, iterations: it + 1, start: 0 });
        }
        let (_, g_new) = problem.value_and_gradient(&u, eta_of(&u))?;
        let z_new = pre.apply(&g_new);
        let gz_new = dot(&g_new, &z_new);
        let beta = ((gz_new - dot(&g_new, &z)) / gz).max(0.0);
        d = d.iter().zip(&z_new).map(|(di, zi)| beta * di - zi).collect();
        g = g_new;
        z = z_new;
        gz = gz_new;
    }
    Err(FracError::NoConvergence {
        iters: opts.max_iters,
        last: r,
        state: Box::new(StalledIterate { iterate: u, history }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::DEFAULT_QUAD_ORDER;
    use crate::domain::make_grid;

    fn setup(n: usize, s: f64, p: f64) -> (GagliardoDiscretization, MassMatrix, FracParams) {
        let grid = make_grid(0.0, 1.0, n).unwrap();
        let params = FracParams::new(s, p).unwrap();
        let disc = build_discretization(&grid, params, Variant::DirichletExterior, DEFAULT_QUAD_ORDER).unwrap();
        let mass = MassMatrix::unit(&grid, p, Variant::DirichletExterior).unwrap();
        (disc, mass, params)
    }

    #[test]
    fn doubled_weight_halves_the_minimum() {
        let (disc, mass, params) = setup(48, 0.6, 3.0);
        let opts = MinimizerOptions::default();
        let one = min_rayleigh_p(&disc, &mass, params, &opts).unwrap();
        let two = min_rayleigh_p(&disc, &mass.scaled(2.0), params, &opts).unwrap();
        assert_eq!(two.value, one.value / 2.0);
        assert_eq!(two.vector, one.vector);
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let (disc, mass, _) = setup(32, 0.5, 3.0);
        let problem = QuotientProblem { disc: &disc, mass: &mass, extra: None, constraint: None };
        let u: Vec<f64> = (0..disc.dim()).map(|i| (0.3 * i as f64).sin() + 0.2).collect();
        let r = problem.value(&u).unwrap();
        for t in [2.0, 0.5, -4.0] {
            let tu: Vec<f64> = u.iter().map(|x| t * x).collect();
            assert_eq!(problem.value(&tu).unwrap(), r);
        }
    }

    #[test]
    fn history_is_monotone() {
        let (disc, mass, params) = setup(40, 0.4, 2.5);
        let m = min_rayleigh_p(&disc, &mass, params, &MinimizerOptions::default()).unwrap();
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*m.history.last().unwrap(), m.value);
    }

    #[test]
    fn stops_with_state_when_out_of_iterations() {
        let (disc, mass, params) = setup(32, 0.5, 3.0);
        let opts = MinimizerOptions { max_iters: 2, restarts: 2, ..Default::default() };
        match min_rayleigh_p(&disc, &mass, params, &opts) {
            Err(FracError::NoConvergence { iters, last, state }) => {
                assert_eq!(iters, 2);
                assert_eq!(state.history.len(), 3);
                assert_eq!(*state.history.last().unwrap(), last);
                assert_eq!(state.iterate.len(), disc.dim());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_parameters_rejected() {
        let (disc, mass, _) = setup(16, 0.5, 3.0);
        let other = FracParams::new(0.5, 2.0).unwrap();
        assert!(min_rayleigh_p(&disc, &mass, other, &MinimizerOptions::default()).is_err());
        let bad = MinimizerOptions { restarts: 0, ..Default::default() };
        assert!(min_rayleigh_p(&disc, &mass, disc.params(), &bad).is_err());
    }

    #[test]
    fn constraint_is_respected() {
        let grid = make_grid(0.0, 1.0, 32).unwrap();
        let params = FracParams::new(0.5, 3.0).unwrap();
        let disc = build_discretization(&grid, params, Variant::RegionalNeumann, DEFAULT_QUAD_ORDER).unwrap();
        let mass = MassMatrix::unit(&grid, 3.0, Variant::RegionalNeumann).unwrap();
        let c = mass.apply(&vec![1.0; disc.dim()]);
        let problem = QuotientProblem { disc: &disc, mass: &mass, extra: None, constraint: Some(c.clone()) };
        let m = minimize_quotient(&problem, &MinimizerOptions::default()).unwrap();
        assert!(dot(&c, &m.vector).abs() < 1e-12);
        assert!(m.value > 0.0);
    }
}
