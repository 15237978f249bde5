use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::field::SolutionField;
use crate::problem::Problem;
use crate::quadrature::GaussRule;
use crate::solver::{solve, SolveReport, SolverConfig};

const BISECTIONS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualProbe {
    /// max over probes of |H(N_h)(t, m) − N_h(t, m)|.
    pub sup: f64,
    pub worst_at: (f64, f64),
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub coarse: ResidualProbe,
    pub fine: ResidualProbe,
    /// coarse.sup / fine.sup.
    pub ratio: f64,
    pub coarse_report: SolveReport,
    pub fine_report: SolveReport,
}

/// The resting operator H applied to a computed field at single points,
/// with maps recomputed by root finding rather than read from tables and
/// the time integral split wherever the integrand loses smoothness.
struct Oracle<'a> {
    problem: &'a Problem,
    field: &'a SolutionField,
    rule: GaussRule,
}

/// Commitment data at a newborn maturity x.
struct Newborn {
    ginv: f64,
    dginv: f64,
    delta: f64,
    tau_delta: f64,
}

fn bisect(mut a: f64, mut b: f64, fa: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let positive = fa > 0.0;
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (a + b);
        if (f(mid)? > 0.0) == positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Roots of f(s) = level for every level strictly between f(a) and f(b),
/// assuming f is monotone on [a, b].
fn crossings(
    a: f64,
    b: f64,
    levels: &[f64],
    f: &dyn Fn(f64) -> Result<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    let (fa, fb) = (f(a)?, f(b)?);
    let (lo, hi) = (fa.min(fb), fa.max(fb));
    for &level in levels.iter().filter(|&&l| l > lo && l < hi) {
        let g = |s: f64| Ok(f(s)? - level);
        out.push(bisect(a, b, fa - level, &g)?);
    }
    Ok(())
}

impl<'a> Oracle<'a> {
    fn newborn(&self, x: f64) -> Result<Option<Newborn>> {
        let builder = self.problem.builder();
        let (ginv, dginv) = builder.g_inverse(x);
        if dginv == 0.0 {
            return Ok(None);
        }
        let delta = builder.theta(ginv)?;
        Ok(Some(Newborn {
            ginv,
            dginv,
            delta,
            tau_delta: self.problem.coefficients().tau(delta),
        }))
    }

    fn source(&self, s: f64, x: f64) -> Result<f64> {
        let Some(b) = self.newborn(x)? else {
            return Ok(0.0);
        };
        let xi = self.problem.proliferating_kernel();
        if s <= b.tau_delta {
            let origin = self.problem.flow().chi(-s, b.ginv)?;
            Ok(2.0
                * b.dginv
                * xi.eval(s, b.ginv)?
                * self.problem.data().gamma(origin, b.tau_delta - s))
        } else {
            let y = self.field.eval(s - b.tau_delta, b.delta)?;
            Ok(2.0
                * b.dginv
                * xi.eval(b.tau_delta, b.ginv)?
                * self.problem.coefficients().beta(b.delta, y)
                * y)
        }
    }

    fn integrand(&self, t: f64, m: f64, s: f64) -> Result<f64> {
        let x = self.problem.flow().chi(-(t - s), m)?;
        let k = self.problem.resting_kernel().eval(t - s, m)?;
        let y = self.field.eval(s, x)?;
        let loss = self.problem.coefficients().reintroduction.flux(x, y);
        Ok(k * (self.source(s, x)? - loss))
    }

    /// Points in (0, t) where the integrand for H(t, m) has a kink or jump.
    fn breakpoints(&self, t: f64, m: f64) -> Result<Vec<f64>> {
        let flow = self.problem.flow();
        let dt = self.field.dt();
        let nodes = self.field.maturities();
        let mut pts = vec![0.0, t];
        let steps = (t / dt).round() as usize;
        pts.extend((1..steps).map(|k| k as f64 * dt).filter(|&s| s < t));
        let foot = flow.chi(-t, m)?;
        let top = self.problem.maps().g_top;
        for &q in nodes.iter().chain(std::iter::once(&top)) {
            if q > foot && q < m {
                pts.push(t - flow.time_of_flight(q, m)?);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let x_of = |s: f64| flow.chi(-(t - s), m);
        let tau_d = |s: f64| -> Result<f64> {
            Ok(self
                .newborn(x_of(s)?)?
                .map_or(f64::INFINITY, |b| b.tau_delta))
        };
        let seam = |s: f64| -> Result<f64> { Ok(s - tau_d(s)?.min(1e300)) };
        let lag = |s: f64| -> Result<f64> { Ok(s - tau_d(s)?) };
        let delta =
            |s: f64| -> Result<f64> { Ok(self.newborn(x_of(s)?)?.map_or(0.0, |b| b.delta)) };
        let hist = self.field.t0();
        let times: Vec<f64> = (0..)
            .map(|k| hist + k as f64 * dt)
            .take_while(|&u| u <= t)
            .collect();

        let mut out = Vec::with_capacity(2 * pts.len());
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 1e-14 {
                continue;
            }
            out.push(a);
            let mid = 0.5 * (a + b);
            if x_of(mid)? >= top {
                continue;
            }
            let (sa, sb) = (seam(a)?, seam(b)?);
            let mut pieces = vec![a];
            if sa * sb < 0.0 {
                let r = bisect(a, b, sa, &seam)?;
                out.push(r);
                pieces.push(r);
            }
            pieces.push(b);
            for p in pieces.windows(2) {
                let (c, d) = (p[0], p[1]);
                if seam(0.5 * (c + d))? <= 0.0 {
                    continue;
                }
                crossings(c, d, &times, &lag, &mut out)?;
                crossings(c, d, nodes, &delta, &mut out)?;
            }
        }
        out.push(t);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        Ok(out)
    }

    fn apply(&self, t: f64, m: f64) -> Result<f64> {
        let p = self.problem;
        let transport = p.resting_kernel().eval(t, m)? * p.data().mu_bar(p.flow().chi(-t, m)?);
        if t <= 0.0 {
            return Ok(p.data().mu_bar(m));
        }
        let pts = self.breakpoints(t, m)?;
        let mut integral = 0.0;
        for w in pts.windows(2) {
            let mut err = None;
            integral += self
                .rule
                .integrate(w[0], w[1], |s| match self.integrand(t, m, s) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                });
            if let Some(e) = err {
                return Err(e);
            }
        }
        Ok(transport + integral)
    }
}

/// |H(N_h) − N_h| at the given points, which must be nodes of `field`.
pub fn residual_oracle(
    problem: &Problem,
    field: &SolutionField,
    points: &[(f64, f64)],
) -> Result<ResidualProbe> {
    let oracle = Oracle {
        problem,
        field,
        rule: GaussRule::new(6),
    };
    let values: Vec<(f64, (f64, f64))> = points
        .par_iter()
        .map(|&(t, m)| Ok(((oracle.apply(t, m)? - field.eval(t, m)?).abs(), (t, m))))
        .collect::<Result<_>>()?;
    let (sup, worst_at) =
        values
            .iter()
            .copied()
            .fold((0.0, (0.0, 0.0)), |a, b| if b.0 > a.0 { b } else { a });
    Ok(ResidualProbe {
        sup,
        worst_at,
        probes: points.len(),
    })
}

/// Probe points shared by a grid and its refinement: `times` evenly spaced
/// rows and about `count` maturity nodes.
fn shared_points(field: &SolutionField, times: usize, count: usize) -> Vec<(f64, f64)> {
    let first = (-field.t0() / field.dt()).round() as usize;
    let steps = field.rows() - 1 - first;
    let nodes = field.maturities();
    let stride = (nodes.len() / count).max(1);
    let ms: Vec<f64> = nodes
        .iter()
        .copied()
        .step_by(stride)
        .chain(std::iter::once(1.0))
        .collect();
    let mut pts = Vec::new();
    for k in 1..=times {
        let r = first + (steps * k) / times;
        for &m in &ms {
            pts.push((field.time(r), m));
        }
    }
    pts.dedup();
    pts
}

/// Solve on a grid and on its refinement (Δt and every cell halved) and
/// compare the oracle residuals at common nodes.
pub fn refinement_study(
    problem: &Problem,
    horizon: f64,
    config: &SolverConfig,
) -> Result<RefinementStudy> {
    let fine_config = config.refined(problem)?;
    let (coarse, fine) = rayon::join(
        || solve(problem, horizon, config),
        || solve(problem, horizon, &fine_config),
    );
    let (coarse, fine) = (coarse?, fine?);
    let pts = shared_points(&coarse.n, 5, 20);
    let c = residual_oracle(problem, &coarse.n, &pts)?;
    let f = residual_oracle(problem, &fine.n, &pts)?;
    Ok(RefinementStudy {
        ratio: c.sup / f.sup,
        coarse: c,
        fine: f,
        coarse_report: coarse.report,
        fine_report: fine.report,
    })
}
