//! Closed-form solutions with hand-derived forcing for every equation.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::AssembledSystem;
use crate::cdr::{assemble_cdr, CdrProblem};
use crate::error::{HdgError, Result};
use crate::fem::{Equation, SpaceLayout};
use crate::fields::{constant_scalar, constant_tensor, constant_vector, identity_tensor, FacetField, ScalarField, TensorField, VectorField};
use crate::mesh::{generate_lshape, generate_structured, FacetTag, Mesh, Point};
use crate::oseen::{assemble_oseen, OseenProblem};
use crate::poisson::{assemble_poisson, PoissonProblem};
use crate::stokes::{assemble_stokes, StokesProblem, TensorStabilization};

use super::norms::NormEvaluator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularity {
    Smooth,
    /// Piecewise smooth across a coefficient jump.
    Interface,
    /// Behaves like `r^exponent` at a reentrant corner.
    CornerSingular { exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    UnitSquare,
    /// `(-1,1)^2` without the quadrant `x > 0, y < 0`.
    LShape,
}

/// Stabilization values used when a case is discretized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stabilization {
    pub tau: f64,
    pub tau_n: f64,
    pub tau_t: f64,
}

impl Default for Stabilization {
    fn default() -> Self {
        Stabilization { tau: 1.0, tau_n: 1.0, tau_t: 1.0 }
    }
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub equation: Equation,
    pub regularity: Regularity,
    pub domain: Domain,
    /// Potential for scalar problems, pressure for flow problems.
    pub p: ScalarField,
    /// Flux `-kappa grad p` for scalar problems, velocity for flow problems.
    pub u: VectorField,
    /// `nu grad u` with `sigma[a][b] = d_b u_a`; flow problems only.
    pub sigma: Option<TensorField>,
    pub kappa: TensorField,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub beta: VectorField,
    pub div_beta: ScalarField,
    pub reaction: ScalarField,
    pub nu: f64,
    /// Scalar forcing.
    pub f: ScalarField,
    /// Vector forcing of flow problems.
    pub f_vec: VectorField,
    /// Boundary facets whose midpoint satisfies this predicate carry Neumann data.
    pub neumann: Option<fn(Point) -> bool>,
    pub p_neumann: ScalarField,
}

fn zero_vec() -> VectorField {
    constant_vector([0.0, 0.0])
}

impl ManufacturedCase {
    fn scalar(name: &'static str, equation: Equation, p: ScalarField, u: VectorField, f: ScalarField) -> Self {
        ManufacturedCase {
            name,
            equation,
            regularity: Regularity::Smooth,
            domain: Domain::UnitSquare,
            p,
            u,
            sigma: None,
            kappa: identity_tensor(),
            kappa_min: 1.0,
            kappa_max: 1.0,
            beta: zero_vec(),
            div_beta: constant_scalar(0.0),
            reaction: constant_scalar(0.0),
            nu: 1.0,
            f,
            f_vec: zero_vec(),
            neumann: None,
            p_neumann: constant_scalar(0.0),
        }
    }

    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        let mut mesh = match self.domain {
            Domain::UnitSquare => generate_structured(n)?,
            Domain::LShape => generate_lshape(n)?,
        };
        if let Some(pred) = self.neumann {
            mesh.retag_boundary(|x| if pred(x) { Some(FacetTag::Neumann) } else { None });
        }
        Ok(mesh)
    }

    pub fn poisson_problem(&self, stab: Stabilization) -> PoissonProblem {
        PoissonProblem {
            kappa: self.kappa.clone(),
            kappa_min: self.kappa_min,
            kappa_max: self.kappa_max,
            f: self.f.clone(),
            p_dirichlet: self.p.clone(),
            p_neumann: self.p_neumann.clone(),
            tau: FacetField::Uniform(stab.tau),
        }
    }

    pub fn cdr_problem(&self, stab: Stabilization) -> CdrProblem {
        CdrProblem {
            kappa: self.kappa.clone(),
            kappa_min: self.kappa_min,
            kappa_max: self.kappa_max,
            beta: self.beta.clone(),
            div_beta: Some(self.div_beta.clone()),
            c: self.reaction.clone(),
            f: self.f.clone(),
            p_dirichlet: self.p.clone(),
            tau: FacetField::Uniform(stab.tau),
        }
    }

    pub fn stokes_problem(&self, stab: Stabilization) -> StokesProblem {
        StokesProblem {
            nu: self.nu,
            f: self.f_vec.clone(),
            stab: TensorStabilization::uniform(stab.tau_n, stab.tau_t),
            g: self.u.clone(),
        }
    }

    pub fn oseen_problem(&self, stab: Stabilization) -> OseenProblem {
        OseenProblem {
            nu: self.nu,
            f: self.f_vec.clone(),
            stab: TensorStabilization::uniform(stab.tau_n, stab.tau_t),
            beta: self.beta.clone(),
            div_beta: Some(self.div_beta.clone()),
            g: self.u.clone(),
        }
    }

    pub fn assemble(&self, mesh: &Mesh, k: usize, stab: Stabilization) -> Result<AssembledSystem> {
        match self.equation {
            Equation::Poisson => assemble_poisson(mesh, &self.poisson_problem(stab), k),
            Equation::Cdr => assemble_cdr(mesh, &self.cdr_problem(stab), k),
            Equation::Stokes => assemble_stokes(mesh, &self.stokes_problem(stab), k),
            Equation::Oseen => assemble_oseen(mesh, &self.oseen_problem(stab), k),
        }
    }

    /// The composite norm that matches this case's equation.
    pub fn norm<'a>(&self, mesh: &'a Mesh, layout: SpaceLayout, stab: Stabilization) -> NormEvaluator<'a> {
        match self.equation {
            Equation::Poisson => NormEvaluator::poisson(mesh, layout, &self.poisson_problem(stab)),
            Equation::Cdr => NormEvaluator::cdr(mesh, layout, &self.cdr_problem(stab)),
            Equation::Stokes => NormEvaluator::stokes(mesh, layout, &self.stokes_problem(stab)),
            Equation::Oseen => NormEvaluator::oseen(mesh, layout, &self.oseen_problem(stab)),
        }
    }

    fn inside(&self, x: Point, margin: f64) -> bool {
        let in_box = |lo: f64, hi: f64| x[0] > lo + margin && x[0] < hi - margin && x[1] > lo + margin && x[1] < hi - margin;
        match self.domain {
            Domain::UnitSquare => in_box(0.0, 1.0),
            Domain::LShape => in_box(-1.0, 1.0) && !(x[0] > -margin && x[1] < margin),
        }
    }

    fn sample_ok(&self, x: Point) -> bool {
        if !self.inside(x, 0.01) {
            return false;
        }
        match self.regularity {
            Regularity::Interface => (x[0] - 0.5).abs() > 0.01,
            Regularity::CornerSingular { .. } => x[0] * x[0] + x[1] * x[1] > 0.01,
            Regularity::Smooth => true,
        }
    }

    /// Largest strong-form residual of the stored forcing at `samples` random interior points,
    /// relative to the largest sampled magnitude of the data (at least one).
    ///
    /// Derivatives are fourth-order central differences with step `1e-3`.
    pub fn strong_residual(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = match self.domain {
            Domain::UnitSquare => (0.0, 1.0),
            Domain::LShape => (-1.0, 1.0),
        };
        let mut worst = 0.0f64;
        let mut scale = 1.0f64;
        let mut taken = 0;
        while taken < samples {
            let x = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
            if !self.sample_ok(x) {
                continue;
            }
            taken += 1;
            let (r, s) = self.residual_at(x);
            worst = worst.max(r);
            scale = scale.max(s);
        }
        worst / scale
    }

    fn residual_at(&self, x: Point) -> (f64, f64) {
        let h = 1e-3;
        let d = |g: &dyn Fn(Point) -> f64, x: Point, a: usize| {
            let e = |t: f64| {
                let mut y = x;
                y[a] += t;
                g(y)
            };
            (-e(2.0 * h) + 8.0 * e(h) - 8.0 * e(-h) + e(-2.0 * h)) / (12.0 * h)
        };
        let d2 = |g: &dyn Fn(Point) -> f64, x: Point, a: usize| {
            let e = |t: f64| {
                let mut y = x;
                y[a] += t;
                g(y)
            };
            (-e(2.0 * h) + 16.0 * e(h) - 30.0 * e(0.0) + 16.0 * e(-h) - e(-2.0 * h)) / (12.0 * h * h)
        };
        let p = &self.p;
        let u = &self.u;
        let beta = (self.beta)(x);
        if !self.equation.is_flow() {
            let flux = |y: Point, a: usize| {
                let k = (self.kappa)(y);
                let g = [d(&|z| p(z), y, 0), d(&|z| p(z), y, 1)];
                k[a][0] * g[0] + k[a][1] * g[1]
            };
            let div_flux = d(&|y| flux(y, 0), x, 0) + d(&|y| flux(y, 1), x, 1);
            let grad = [d(&|z| p(z), x, 0), d(&|z| p(z), x, 1)];
            let uv = u(x);
            let mut r = (uv[0] + flux(x, 0)).abs().max((uv[1] + flux(x, 1)).abs());
            let f = (self.f)(x);
            let pde = match self.equation {
                Equation::Poisson => div_flux - f,
                _ => -div_flux + beta[0] * grad[0] + beta[1] * grad[1] + (self.reaction)(x) * p(x) - f,
            };
            r = r.max(pde.abs());
            let s = f.abs().max(uv[0].abs()).max(uv[1].abs()).max(p(x).abs());
            (r, s)
        } else {
            let sigma = self.sigma.as_ref().expect("flow cases carry sigma");
            let sv = sigma(x);
            let fv = (self.f_vec)(x);
            let mut r = 0.0f64;
            let mut div = 0.0;
            for a in 0..2 {
                let ua = |y: Point| u(y)[a];
                let grad = [d(&ua, x, 0), d(&ua, x, 1)];
                let lap = d2(&ua, x, 0) + d2(&ua, x, 1);
                div += grad[a];
                let conv = grad[0] * beta[0] + grad[1] * beta[1];
                let mom = -self.nu * lap + d(&|z| p(z), x, a) + conv - fv[a];
                r = r.max(mom.abs());
                for b in 0..2 {
                    r = r.max((sv[a][b] - self.nu * grad[b]).abs());
                }
            }
            r = r.max(div.abs());
            let uv = u(x);
            let s = fv[0].abs().max(fv[1].abs()).max(uv[0].abs()).max(uv[1].abs()).max(p(x).abs());
            (r, s)
        }
    }
}

fn sin_sin() -> ScalarField {
    Arc::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin())
}

fn poisson_smooth(name: &'static str, kx: f64, ky: f64) -> ManufacturedCase {
    let u: VectorField = Arc::new(move |x| {
        [-kx * PI * (PI * x[0]).cos() * (PI * x[1]).sin(), -ky * PI * (PI * x[0]).sin() * (PI * x[1]).cos()]
    });
    let f: ScalarField = Arc::new(move |x| -(kx + ky) * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin());
    let mut c = ManufacturedCase::scalar(name, Equation::Poisson, sin_sin(), u, f);
    c.kappa = constant_tensor([[kx, 0.0], [0.0, ky]]);
    c.kappa_min = kx.min(ky);
    c.kappa_max = kx.max(ky);
    c
}

fn poisson_mixed() -> ManufacturedCase {
    let mut c = ManufacturedCase::scalar(
        "poisson-mixed",
        Equation::Poisson,
        Arc::new(|x| 1.0 + 2.0 * x[0] + 3.0 * x[1]),
        constant_vector([-2.0, -3.0]),
        constant_scalar(0.0),
    );
    c.neumann = Some(|x| (x[0] - 1.0).abs() < 1e-12);
    // u.n on x = 1
    c.p_neumann = constant_scalar(-2.0);
    c
}

fn poisson_interface() -> ManufacturedCase {
    let kappa_of = |x: Point| if x[0] < 0.5 { 1.0 } else { 10.0 };
    let mut c = ManufacturedCase::scalar(
        "poisson-interface",
        Equation::Poisson,
        Arc::new(move |x| (x[0] - 0.5) / kappa_of(x) * (PI * x[1]).sin()),
        Arc::new(|x| [-(PI * x[1]).sin(), -(x[0] - 0.5) * PI * (PI * x[1]).cos()]),
        Arc::new(|x| -PI * PI * (x[0] - 0.5) * (PI * x[1]).sin()),
    );
    c.regularity = Regularity::Interface;
    c.kappa = Arc::new(move |x| {
        let k = kappa_of(x);
        [[k, 0.0], [0.0, k]]
    });
    c.kappa_min = 1.0;
    c.kappa_max = 10.0;
    c
}

fn angle(x: Point) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 { t + 2.0 * PI } else { t }
}

fn poisson_lshape() -> ManufacturedCase {
    let alpha = 2.0 / 3.0;
    let mut c = ManufacturedCase::scalar(
        "poisson-lshape",
        Equation::Poisson,
        Arc::new(move |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            r.powf(alpha) * (alpha * angle(x)).sin()
        }),
        Arc::new(move |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if r == 0.0 {
                return [0.0, 0.0];
            }
            let t = angle(x);
            let s = alpha * r.powf(alpha - 1.0);
            [-s * ((alpha - 1.0) * t).sin(), -s * ((alpha - 1.0) * t).cos()]
        }),
        constant_scalar(0.0),
    );
    c.regularity = Regularity::CornerSingular { exponent: alpha };
    c.domain = Domain::LShape;
    c
}

fn cdr_smooth() -> ManufacturedCase {
    let u: VectorField =
        Arc::new(|x| [-PI * (PI * x[0]).cos() * (PI * x[1]).sin(), -PI * (PI * x[0]).sin() * (PI * x[1]).cos()]);
    let f: ScalarField = Arc::new(|x| {
        let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
        2.0 * PI * PI * sx * sy + PI * cx * sy + PI * sx * cy + sx * sy
    });
    let mut c = ManufacturedCase::scalar("cdr-smooth", Equation::Cdr, sin_sin(), u, f);
    c.beta = constant_vector([1.0, 1.0]);
    c.reaction = constant_scalar(1.0);
    c
}

// g(t) = t^2 (1 - t)^2 and its derivatives.
fn g0(t: f64) -> f64 {
    t * t * (1.0 - t) * (1.0 - t)
}
fn g1(t: f64) -> f64 {
    2.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}
fn g2(t: f64) -> f64 {
    2.0 - 12.0 * t + 12.0 * t * t
}
fn g3(t: f64) -> f64 {
    -12.0 + 24.0 * t
}

fn flow(name: &'static str, equation: Equation, beta: [[f64; 3]; 2]) -> ManufacturedCase {
    // beta(x) = (b00 + b01 x + b02 y, b10 + b11 x + b12 y)
    let bf = move |x: Point| {
        [beta[0][0] + beta[0][1] * x[0] + beta[0][2] * x[1], beta[1][0] + beta[1][1] * x[0] + beta[1][2] * x[1]]
    };
    let nu = 1.0;
    let u: VectorField = Arc::new(|x| [g0(x[0]) * g1(x[1]), -g1(x[0]) * g0(x[1])]);
    let grad = |x: Point| {
        [
            [g1(x[0]) * g1(x[1]), g0(x[0]) * g2(x[1])],
            [-g2(x[0]) * g0(x[1]), -g1(x[0]) * g1(x[1])],
        ]
    };
    let p: ScalarField = Arc::new(|x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let f_vec: VectorField = Arc::new(move |x| {
        let lap = [
            g2(x[0]) * g1(x[1]) + g0(x[0]) * g3(x[1]),
            -g3(x[0]) * g0(x[1]) - g1(x[0]) * g2(x[1]),
        ];
        let gp = [
            2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos(),
            -2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
        ];
        let gu = grad(x);
        let b = bf(x);
        [0, 1].map(|a| -nu * lap[a] + gp[a] + gu[a][0] * b[0] + gu[a][1] * b[1])
    });
    let sigma: TensorField = Arc::new(move |x| {
        let g = grad(x);
        [[nu * g[0][0], nu * g[0][1]], [nu * g[1][0], nu * g[1][1]]]
    });
    ManufacturedCase {
        name,
        equation,
        regularity: Regularity::Smooth,
        domain: Domain::UnitSquare,
        p,
        u,
        sigma: Some(sigma),
        kappa: identity_tensor(),
        kappa_min: 1.0,
        kappa_max: 1.0,
        beta: Arc::new(bf),
        div_beta: constant_scalar(beta[0][1] + beta[1][2]),
        reaction: constant_scalar(0.0),
        nu,
        f: constant_scalar(0.0),
        f_vec,
        neumann: None,
        p_neumann: constant_scalar(0.0),
    }
}

/// Every manufactured case, in a fixed order.
pub fn catalog() -> Vec<ManufacturedCase> {
    vec![
        poisson_smooth("poisson-smooth", 1.0, 1.0),
        poisson_smooth("poisson-anisotropic", 1.0, 10.0),
        poisson_mixed(),
        poisson_interface(),
        poisson_lshape(),
        cdr_smooth(),
        flow("stokes-smooth", Equation::Stokes, [[0.0; 3]; 2]),
        flow("oseen-uniform", Equation::Oseen, [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        flow("oseen-rotation", Equation::Oseen, [[0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
    ]
}

pub fn case_names() -> Vec<&'static str> {
    catalog().iter().map(|c| c.name).collect()
}

pub fn case_by_name(name: &str) -> Result<ManufacturedCase> {
    catalog().into_iter().find(|c| c.name == name).ok_or_else(|| {
        HdgError::Config(format!("unknown case `{name}`; available: {}", case_names().join(", ")))
    })
}
