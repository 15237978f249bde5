//! Windowed Picard iteration for the integrated resting density N and
//! direct quadrature for the proliferating density P.
//!
//! Integrals over s ∈ [0, t] run along the characteristic through (t, m)
//! with the trapezoid rule on the shared time grid; the source integrals
//! are split wherever the integrand switches branch (the seam s = τ(Δ(x))
//! or s = τ(Θ(x)), and the crossing x = g(1)).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SolutionField;
use crate::grid::MaturityGrid;
use crate::interp::locate;
use crate::problem::Problem;
use crate::quadrature::GaussRule;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub maturity_nodes: usize,
    pub smallest_cell: f64,
    /// Growth ratio of neighbouring cells near m = 0.
    pub grading: f64,
    /// Overrides `maturity_nodes`/`smallest_cell` when set.
    #[serde(skip)]
    pub maturity_grid: Option<MaturityGrid>,
    /// Defaults to min τ(Δ) / `steps_per_delay`.
    pub dt: Option<f64>,
    pub steps_per_delay: usize,
    /// Sup-norm change (relative to max(1, sup|N|)) that ends a window.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Target for the contraction estimate q when sizing windows.
    pub contraction_target: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            maturity_nodes: 200,
            smallest_cell: 1e-4,
            grading: crate::grid::DEFAULT_GRADING,
            maturity_grid: None,
            dt: None,
            steps_per_delay: 20,
            tolerance: 1e-12,
            max_iterations: 200,
            contraction_target: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<MaturityGrid> {
        match &self.maturity_grid {
            Some(g) => Ok(g.clone()),
            None => MaturityGrid::graded_with_ratio(
                self.maturity_nodes,
                self.smallest_cell,
                self.grading,
            ),
        }
    }

    pub fn time_step(&self, problem: &Problem) -> Result<f64> {
        let dt = match self.dt {
            Some(dt) => dt,
            None => {
                if self.steps_per_delay == 0 {
                    return Err(Error::param("grid.steps_per_delay", "must be positive"));
                }
                problem.maps().tau_delta_min / self.steps_per_delay as f64
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(
                "grid.dt",
                format!("must be positive, got {dt}"),
            ));
        }
        Ok(dt)
    }

    /// Δt and every maturity cell halved; coarse nodes are kept.
    pub fn refined(&self, problem: &Problem) -> Result<Self> {
        Ok(Self {
            maturity_grid: Some(self.grid()?.refined()),
            dt: Some(0.5 * self.time_step(problem)?),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
    pub radius: f64,
    pub lipschitz: f64,
    pub k_tilde: f64,
    /// K̃ (1 + ‖ζ‖) L(r) T_w.
    pub q: f64,
    pub iterations: usize,
    pub final_change: f64,
    /// Largest ‖N_{k+1} − N_k‖ / ‖N_k − N_{k−1}‖ seen above round-off.
    pub max_observed_ratio: Option<f64>,
    /// Delayed lookups reached into the window, so the source was
    /// re-evaluated every sweep.
    pub source_coupled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub dt: f64,
    pub horizon: f64,
    pub maturity_nodes: usize,
    pub history_rows: usize,
    pub windows: Vec<WindowRecord>,
    pub total_iterations: usize,
    pub final_radius: f64,
    /// max over nodes of the jump of the F source at its seam
    /// (zero for compatible data).
    pub seam_jump: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub n: SolutionField,
    pub p: SolutionField,
    pub report: SolveReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Zero,
    Init,
    Delay,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    F,
    G,
}

#[derive(Debug, Clone, Copy)]
struct Pt {
    s: f64,
    x: f64,
    /// K or ξ at lag t − s, times the H^a weight when present.
    kern: f64,
}

/// Extra pieces of the shifted operator H^a: the rate a and the lag table
/// E_k = exp(−∫₀^{kΔt} a(χ(−u, m)) du).
pub(crate) struct Shift<'a> {
    pub a: &'a (dyn Fn(f64) -> f64 + Sync),
    e: Vec<f64>,
    rule: GaussRule,
}

/// Lag tables along the characteristics through the maturity nodes.
pub(crate) struct Lattice<'p> {
    pub problem: &'p Problem,
    pub m: Vec<f64>,
    pub dt: f64,
    pub hist: usize,
    pub steps: usize,
    nj: usize,
    x: Vec<f64>,
    cell: Vec<usize>,
    w: Vec<f64>,
    kres: Vec<f64>,
    kpro: Vec<f64>,
    xhalf: Vec<f64>,
    /// time of flight from g(1) to m_j, NaN when m_j ≤ g(1).
    tof_top: Vec<f64>,
}

impl<'p> Lattice<'p> {
    pub fn new(
        problem: &'p Problem,
        m: Vec<f64>,
        dt: f64,
        hist: usize,
        steps: usize,
    ) -> Result<Self> {
        let nj = m.len();
        let flow = problem.flow();
        let entries: Vec<(f64, f64, f64, f64)> = (0..=steps)
            .into_par_iter()
            .flat_map_iter(|k| {
                let lag = k as f64 * dt;
                let m = &m;
                (0..nj).map(move |j| {
                    let mj = m[j];
                    let x = flow.chi(-lag, mj)?;
                    let kr = problem.resting_kernel().eval(lag, mj)?;
                    let kp = problem.proliferating_kernel().eval(lag, mj)?;
                    let xh = flow.chi(-(lag + 0.5 * dt), mj)?;
                    Ok((x, kr, kp, xh))
                })
            })
            .collect::<Result<_>>()?;
        let mut x = Vec::with_capacity(entries.len());
        let mut kres = Vec::with_capacity(entries.len());
        let mut kpro = Vec::with_capacity(entries.len());
        let mut xhalf = Vec::with_capacity(entries.len());
        for (a, b, c, d) in entries {
            x.push(a);
            kres.push(b);
            kpro.push(c);
            xhalf.push(d);
        }
        let (cell, w) = x.iter().map(|&v| locate(&m, v)).unzip();
        let top = problem.maps().g_top;
        let tof_top = m
            .iter()
            .map(|&mj| {
                if mj > top {
                    flow.time_of_flight(top, mj)
                } else {
                    Ok(f64::NAN)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            problem,
            m,
            dt,
            hist,
            steps,
            nj,
            x,
            cell,
            w,
            kres,
            kpro,
            xhalf,
            tof_top,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nj
    }

    #[inline]
    fn idx(&self, k: usize, j: usize) -> usize {
        k * self.nj + j
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    #[inline]
    pub fn row(&self, i: usize) -> usize {
        self.hist + i
    }

    #[inline]
    fn weight(&self, i: usize, l: usize) -> f64 {
        if l == 0 || l == i {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// The empty field on this lattice with history rows set to μ̄.
    pub fn empty_field(&self) -> Result<SolutionField> {
        let data = self.problem.data().clone();
        let mut f = SolutionField::zeros(
            -(self.hist as f64) * self.dt,
            self.dt,
            self.hist + self.steps + 1,
            self.m.clone(),
        )?
        .with_history(std::sync::Arc::new(move |m| data.mu_bar(m)));
        for r in 0..=self.hist {
            for (v, &mj) in f.row_mut(r).iter_mut().zip(&self.m) {
                *v = self.problem.data().mu_bar(mj);
            }
        }
        Ok(f)
    }

    /// K(t_i, m_j) μ̄(χ(−t_i, m_j)), weighted by E_i under a shift.
    pub fn transport(&self, i: usize, j: usize, shift: Option<&Shift>) -> f64 {
        let k = self.idx(i, j);
        let e = shift.map_or(1.0, |s| s.e[k]);
        e * self.kres[k] * self.problem.data().mu_bar(self.x[k])
    }

    /// Σ_l w_l K_{i−l} [a(x) N_l(x) − β(x, N_l(x)) N_l(x)] over `ls`.
    pub fn linear_sum(
        &self,
        i: usize,
        j: usize,
        field: &SolutionField,
        ls: std::ops::RangeInclusive<usize>,
        shift: Option<&Shift>,
    ) -> f64 {
        let beta = &self.problem.coefficients().reintroduction;
        let mut acc = 0.0;
        for l in ls {
            let k = self.idx(i - l, j);
            let x = self.x[k];
            let y = field.interp_cell(self.row(l), self.cell[k], self.w[k]);
            let mut term = -beta.flux(x, y);
            let mut kern = self.kres[k];
            if let Some(s) = shift {
                term += (s.a)(x) * y;
                kern *= s.e[k];
            }
            acc += self.weight(i, l) * kern * term;
        }
        acc
    }

    fn point(
        &self,
        i: usize,
        j: usize,
        s: f64,
        source: Source,
        shift: Option<&Shift>,
    ) -> Result<Pt> {
        let lag = (self.time(i) - s).max(0.0);
        let mj = self.m[j];
        let x = self.problem.flow().chi(-lag, mj)?;
        let mut kern = match source {
            Source::F => self.problem.resting_kernel().eval(lag, mj)?,
            Source::G => self.problem.proliferating_kernel().eval(lag, mj)?,
        };
        if let Some(sh) = shift {
            kern *= sh.weight_at(self, lag, j)?;
        }
        Ok(Pt { s, x, kern })
    }

    fn grid_point(
        &self,
        i: usize,
        j: usize,
        l: usize,
        source: Source,
        shift: Option<&Shift>,
    ) -> Pt {
        let k = self.idx(i - l, j);
        let mut kern = match source {
            Source::F => self.kres[k],
            Source::G => self.kpro[k],
        };
        if let Some(sh) = shift {
            kern *= sh.e[k];
        }
        Pt {
            s: self.time(l),
            x: self.x[k],
            kern,
        }
    }

    #[inline]
    fn seam(&self, source: Source, s: f64, x: f64) -> f64 {
        let maps = self.problem.maps();
        match source {
            Source::F => s - maps.tau_delta(x.min(maps.g_top)),
            Source::G => s - maps.tau_theta(x),
        }
    }

    fn branch(&self, source: Source, s: f64, x: f64) -> Branch {
        match source {
            Source::F if x > self.problem.maps().g_top => Branch::Zero,
            _ if self.seam(source, s, x) <= 0.0 => Branch::Init,
            _ => Branch::Delay,
        }
    }

    /// Integrand of the source term at a point, including the kernel
    /// factor; returns the value and the delayed time it looked up.
    fn integrand(
        &self,
        source: Source,
        branch: Branch,
        i: usize,
        j: usize,
        p: Pt,
        field: &SolutionField,
    ) -> Result<(f64, f64)> {
        let problem = self.problem;
        let maps = problem.maps();
        let coeffs = problem.coefficients();
        let data = problem.data();
        match (source, branch) {
            (_, Branch::Zero) => Ok((0.0, f64::NEG_INFINITY)),
            (Source::F, Branch::Init) => {
                let xc = p.x.min(maps.g_top);
                let (ginv, dginv) = maps.g_inverse(xc);
                if dginv == 0.0 {
                    return Ok((0.0, f64::NEG_INFINITY));
                }
                let age = (maps.tau_delta(xc) - p.s).max(0.0);
                let xi = problem.proliferating_kernel().eval(p.s, ginv)?;
                let origin = problem.flow().chi(-p.s, ginv)?;
                Ok((
                    p.kern * 2.0 * dginv * xi * data.gamma(origin, age),
                    f64::NEG_INFINITY,
                ))
            }
            (Source::F, Branch::Delay) => {
                let xc = p.x.min(maps.g_top);
                let td = p.s - maps.tau_delta(xc);
                let d = maps.delta(xc);
                let y = field.eval(td.max(field.t0()), d)?;
                Ok((p.kern * maps.zeta(xc) * coeffs.beta(d, y) * y, td))
            }
            (Source::G, Branch::Init) => {
                // ξ(t − s, m) ξ(s, x) = ξ(t, m) along the characteristic.
                let k = self.idx(i, j);
                let age = (maps.tau_theta(p.x) - p.s).max(0.0);
                let v = self.kpro[k] * maps.pi(p.x) * data.gamma(self.x[k], age);
                Ok((v, f64::NEG_INFINITY))
            }
            (Source::G, Branch::Delay) => {
                let tt = maps.tau_theta(p.x);
                let td = p.s - tt;
                let th = maps.theta(p.x);
                let y = field.eval(td.max(field.t0()), th)?;
                let xi = problem.proliferating_kernel().eval(tt, p.x)?;
                Ok((p.kern * maps.pi(p.x) * xi * coeffs.beta(th, y) * y, td))
            }
        }
    }

    /// ∫₀^{t_i} kernel × source along the characteristic through
    /// (t_i, m_j); also returns the latest delayed time looked up.
    fn source_integral(
        &self,
        source: Source,
        i: usize,
        j: usize,
        field: &SolutionField,
        shift: Option<&Shift>,
    ) -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut latest = f64::NEG_INFINITY;
        let ti = self.time(i);
        for l in 0..i {
            let a = self.grid_point(i, j, l, source, shift);
            let b = self.grid_point(i, j, l + 1, source, shift);
            let mut breaks: [f64; 2] = [f64::NAN; 2];
            let mut nb = 0;
            let (pa, pb) = (self.seam(source, a.s, a.x), self.seam(source, b.s, b.x));
            let relevant = !matches!(source, Source::F) || a.x <= self.problem.maps().g_top;
            if relevant && pa.abs() > 1e-12 && pb.abs() > 1e-12 && pa.signum() != pb.signum() {
                breaks[nb] = self.seam_root(source, i, j, a.s, b.s, pa)?;
                nb += 1;
            }
            if let Source::F = source {
                let sg = ti - self.tof_top[j];
                let margin = 1e-12 * self.dt;
                if sg > a.s + margin && sg < b.s - margin {
                    breaks[nb] = sg;
                    nb += 1;
                }
            }
            if nb == 0 {
                let xm = self.xhalf[self.idx(i - l - 1, j)];
                let br = self.branch(source, 0.5 * (a.s + b.s), xm);
                let (fa, da) = self.integrand(source, br, i, j, a, field)?;
                let (fb, db) = self.integrand(source, br, i, j, b, field)?;
                total += 0.5 * (b.s - a.s) * (fa + fb);
                latest = latest.max(da).max(db);
                continue;
            }
            let cuts = &mut breaks[..nb];
            cuts.sort_by(f64::total_cmp);
            let mut pts = Vec::with_capacity(nb + 2);
            pts.push(a);
            for &s in cuts.iter() {
                pts.push(self.point(i, j, s, source, shift)?);
            }
            pts.push(b);
            for w in pts.windows(2) {
                let (p0, p1) = (w[0], w[1]);
                let sm = 0.5 * (p0.s + p1.s);
                let xm = self.problem.flow().chi(-(ti - sm), self.m[j])?;
                let br = self.branch(source, sm, xm);
                let (f0, d0) = self.integrand(source, br, i, j, p0, field)?;
                let (f1, d1) = self.integrand(source, br, i, j, p1, field)?;
                total += 0.5 * (p1.s - p0.s) * (f0 + f1);
                latest = latest.max(d0).max(d1);
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite {
                t: ti,
                m: self.m[j],
            });
        }
        Ok((total, latest))
    }

    fn seam_root(
        &self,
        source: Source,
        i: usize,
        j: usize,
        mut lo: f64,
        mut hi: f64,
        plo: f64,
    ) -> Result<f64> {
        let ti = self.time(i);
        let mj = self.m[j];
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let x = self.problem.flow().chi(-(ti - mid), mj)?;
            let v = self.seam(source, mid, x);
            if v.signum() == plo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * ti.max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// One node of H(N) (or H^a(N) with a shift) from scratch.
    pub fn operator_node(
        &self,
        i: usize,
        j: usize,
        field: &SolutionField,
        shift: Option<&Shift>,
    ) -> Result<f64> {
        if i == 0 {
            return Ok(self.problem.data().mu_bar(self.m[j]));
        }
        let (src, _) = self.source_integral(Source::F, i, j, field, shift)?;
        Ok(self.transport(i, j, shift) + self.linear_sum(i, j, field, 0..=i, shift) + src)
    }

    /// P(t_i, m_j) given the converged N.
    pub fn proliferating_node(&self, i: usize, j: usize, n: &SolutionField) -> Result<f64> {
        let k = self.idx(i, j);
        let gbar = self.problem.gamma_bar(self.x[k]);
        if i == 0 {
            return Ok(gbar);
        }
        let beta = &self.problem.coefficients().reintroduction;
        let mut gain = 0.0;
        for l in 0..=i {
            let kl = self.idx(i - l, j);
            let y = n.interp_cell(self.row(l), self.cell[kl], self.w[kl]);
            gain += self.weight(i, l) * self.kpro[kl] * beta.flux(self.x[kl], y);
        }
        let (out, _) = self.source_integral(Source::G, i, j, n, None)?;
        let v = self.kpro[k] * gbar + gain - out;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                t: self.time(i),
                m: self.m[j],
            });
        }
        Ok(v)
    }
}

impl<'a> Shift<'a> {
    pub fn new(lattice: &Lattice, a: &'a (dyn Fn(f64) -> f64 + Sync)) -> Result<Self> {
        let rule = GaussRule::new(8);
        let nj = lattice.nj;
        let dt = lattice.dt;
        let flow = lattice.problem.flow();
        let cols: Vec<Vec<f64>> = (0..nj)
            .into_par_iter()
            .map(|j| {
                let mj = lattice.m[j];
                let mut col = Vec::with_capacity(lattice.steps + 1);
                let mut acc = 0.0;
                col.push(1.0);
                for k in 0..lattice.steps {
                    let lo = k as f64 * dt;
                    acc += rule.try_integrate(lo, lo + dt, |u| Ok(a(flow.chi(-u, mj)?)))?;
                    col.push((-acc).exp());
                }
                Ok(col)
            })
            .collect::<Result<_>>()?;
        let mut e = vec![0.0; (lattice.steps + 1) * nj];
        for (j, col) in cols.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                e[k * nj + j] = *v;
            }
        }
        Ok(Self { a, e, rule })
    }

    fn weight_at(&self, lattice: &Lattice, lag: f64, j: usize) -> Result<f64> {
        let k = ((lag / lattice.dt).floor() as usize).min(lattice.steps);
        let lo = k as f64 * lattice.dt;
        let mj = lattice.m[j];
        let flow = lattice.problem.flow();
        let rest = if lag > lo {
            self.rule
                .try_integrate(lo, lag, |u| Ok((self.a)(flow.chi(-u, mj)?)))?
        } else {
            0.0
        };
        Ok(self.e[k * lattice.nj + j] * (-rest).exp())
    }
}

enum WindowFailure {
    Radius,
    Diverged(f64),
    Cap(f64),
    Hard(Error),
}

impl From<Error> for WindowFailure {
    fn from(e: Error) -> Self {
        WindowFailure::Hard(e)
    }
}

/// Solve on [0, horizon] (rounded up to a whole number of steps).
pub fn solve(problem: &Problem, horizon: f64, config: &SolverConfig) -> Result<Solution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param(
            "run.horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    if !(config.tolerance > 0.0) || config.max_iterations == 0 {
        return Err(Error::param(
            "run.tolerance",
            "tolerance and iteration cap must be positive",
        ));
    }
    let grid = config.grid()?;
    let dt = config.time_step(problem)?;
    let maps = problem.maps();
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let hist = ((maps.tau_max / dt) - 1e-9).ceil().max(1.0) as usize;
    let lattice = Lattice::new(problem, grid.nodes().to_vec(), dt, hist, steps)?;
    let mut field = lattice.empty_field()?;
    let nj = lattice.nodes();

    let delay_steps = ((maps.tau_delta_min / dt) + 1e-9).floor().max(1.0) as usize;
    let mu_sup = grid
        .nodes()
        .iter()
        .fold(0.0f64, |a, &m| a.max(problem.data().mu_bar(m).abs()));
    let mut radius = mu_sup + 1.0;
    let mut windows = Vec::new();
    let mut total_iterations = 0;
    let mut w0 = 0;
    while w0 < steps {
        let mut cap_steps = delay_steps.min(steps - w0);
        loop {
            let (wsteps, k_tilde, lip) = plan_window(&lattice, radius, cap_steps, config);
            if wsteps == 0 {
                return Err(Error::WindowCollapse {
                    t: lattice.time(w0),
                    reason: format!(
                        "contraction estimate exceeds {} even for one step (L = {lip:e})",
                        config.contraction_target
                    ),
                });
            }
            match run_window(&lattice, &mut field, w0, wsteps, radius, config) {
                Ok((iterations, final_change, ratio, coupled)) => {
                    total_iterations += iterations;
                    let tw = wsteps as f64 * dt;
                    windows.push(WindowRecord {
                        start: lattice.time(w0),
                        end: lattice.time(w0 + wsteps),
                        steps: wsteps,
                        radius,
                        lipschitz: lip,
                        k_tilde,
                        q: k_tilde * (1.0 + maps.zeta_sup) * lip * tw,
                        iterations,
                        final_change,
                        max_observed_ratio: ratio,
                        source_coupled: coupled,
                    });
                    w0 += wsteps;
                    break;
                }
                Err(WindowFailure::Radius) => {
                    radius *= 2.0;
                    cap_steps = wsteps;
                }
                Err(WindowFailure::Diverged(change)) | Err(WindowFailure::Cap(change))
                    if wsteps > 1 =>
                {
                    let _ = change;
                    cap_steps = wsteps / 2;
                }
                Err(WindowFailure::Diverged(change)) => {
                    return Err(Error::WindowCollapse {
                        t: lattice.time(w0),
                        reason: format!("iterates diverge on a single step (change {change:e})"),
                    })
                }
                Err(WindowFailure::Cap(change)) => {
                    return Err(Error::IterationCap {
                        cap: config.max_iterations,
                        t: lattice.time(w0),
                        change,
                    })
                }
                Err(WindowFailure::Hard(e)) => return Err(e),
            }
        }
    }

    let p = proliferating_field(&lattice, &field)?;
    let seam_jump = seam_jump(problem, grid.nodes());
    Ok(Solution {
        n: field,
        p,
        report: SolveReport {
            dt,
            horizon: lattice.time(steps),
            maturity_nodes: nj,
            history_rows: hist,
            windows,
            total_iterations,
            final_radius: radius,
            seam_jump,
        },
    })
}

/// Window length (in steps) meeting both the delay bound and the
/// contraction target, with the K̃ and L(r) used.
fn plan_window(
    lattice: &Lattice,
    radius: f64,
    cap: usize,
    config: &SolverConfig,
) -> (usize, f64, f64) {
    let problem = lattice.problem;
    let lip = problem
        .coefficients()
        .reintroduction
        .lipschitz(radius, &lattice.m)
        .constant;
    let nj = lattice.nodes();
    let k_tilde = lattice.kres[..(cap + 1) * nj]
        .iter()
        .fold(1.0f64, |a, &k| a.max(k));
    let factor = k_tilde * (1.0 + problem.maps().zeta_sup) * lip;
    let steps = if factor > 0.0 {
        let t = config.contraction_target / factor;
        ((t / lattice.dt) + 1e-9).floor().min(cap as f64) as usize
    } else {
        cap
    };
    (steps, k_tilde, lip)
}

fn run_window(
    lattice: &Lattice,
    field: &mut SolutionField,
    w0: usize,
    steps: usize,
    radius: f64,
    config: &SolverConfig,
) -> std::result::Result<(usize, f64, Option<f64>, bool), WindowFailure> {
    let nj = lattice.nodes();
    let start = lattice.time(w0);
    let frozen: &SolutionField = field;
    let base: Vec<(f64, f64, f64)> = (0..steps * nj)
        .into_par_iter()
        .map(|q| {
            let (i, j) = (w0 + 1 + q / nj, q % nj);
            let (src, latest) = lattice.source_integral(Source::F, i, j, frozen, None)?;
            let fixed =
                lattice.transport(i, j, None) + lattice.linear_sum(i, j, frozen, 0..=w0, None);
            Ok((fixed, src, latest))
        })
        .collect::<Result<_>>()?;
    let coupled = base.iter().any(|b| b.2 > start + 1e-12);

    // Initial iterate: constant continuation of the last known row.
    let last = field.row(lattice.row(w0)).to_vec();
    for i in w0 + 1..=w0 + steps {
        field.row_mut(lattice.row(i)).copy_from_slice(&last);
    }
    let mut prev_change = f64::NAN;
    let mut max_ratio: Option<f64> = None;
    let mut growth = 0;
    for iteration in 1..=config.max_iterations {
        let current: &SolutionField = field;
        let next: Vec<f64> = (0..steps * nj)
            .into_par_iter()
            .map(|q| {
                let (i, j) = (w0 + 1 + q / nj, q % nj);
                let (fixed, src, _) = base[q];
                let src = if coupled {
                    lattice.source_integral(Source::F, i, j, current, None)?.0
                } else {
                    src
                };
                Ok(fixed + src + lattice.linear_sum(i, j, current, w0 + 1..=i, None))
            })
            .collect::<Result<_>>()?;
        let mut change = 0.0f64;
        let mut sup = 0.0f64;
        for (q, v) in next.iter().enumerate() {
            let (i, j) = (w0 + 1 + q / nj, q % nj);
            if !v.is_finite() {
                return Err(WindowFailure::Hard(Error::NonFinite {
                    t: lattice.time(i),
                    m: lattice.m[j],
                }));
            }
            change = change.max((v - field.value(lattice.row(i), j)).abs());
            sup = sup.max(v.abs());
        }
        for (ii, chunk) in next.chunks(nj).enumerate() {
            field
                .row_mut(lattice.row(w0 + 1 + ii))
                .copy_from_slice(chunk);
        }
        if sup > radius {
            return Err(WindowFailure::Radius);
        }
        let scale = sup.max(1.0);
        if prev_change.is_finite() && prev_change > 1e3 * config.tolerance * scale {
            let r = change / prev_change;
            max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
            if r > 1.0 {
                growth += 1;
                if growth >= 3 {
                    return Err(WindowFailure::Diverged(change));
                }
            } else {
                growth = 0;
            }
        }
        if change <= config.tolerance * scale {
            return Ok((iteration, change, max_ratio, coupled));
        }
        prev_change = change;
    }
    Err(WindowFailure::Cap(prev_change))
}

fn proliferating_field(lattice: &Lattice, n: &SolutionField) -> Result<SolutionField> {
    let nj = lattice.nodes();
    let rows = lattice.steps + 1;
    let values: Vec<f64> = (0..rows * nj)
        .into_par_iter()
        .map(|q| lattice.proliferating_node(q / nj, q % nj, n))
        .collect::<Result<_>>()?;
    SolutionField::new(0.0, lattice.dt, rows, lattice.m.clone(), values)
}

fn seam_jump(problem: &Problem, nodes: &[f64]) -> f64 {
    let maps = problem.maps();
    let data = problem.data();
    let coeffs = problem.coefficients();
    nodes
        .iter()
        .map(|&m| {
            let d = maps.delta(m);
            let mu = data.mu_bar(d);
            maps.zeta(m) * (data.gamma(d, 0.0) - coeffs.beta(d, mu) * mu).abs()
        })
        .fold(0.0, f64::max)
}

/// One application of the Picard operator H to a whole field (on its own
/// grid), every node computed from scratch.
pub fn picard_step(problem: &Problem, field: &SolutionField) -> Result<SolutionField> {
    let lattice = lattice_for(problem, field)?;
    apply_on_lattice(&lattice, field, None)
}

pub(crate) fn lattice_for<'p>(problem: &'p Problem, field: &SolutionField) -> Result<Lattice<'p>> {
    let dt = field.dt();
    let hist = (-field.t0() / dt).round() as usize;
    if hist as f64 * dt + 1e-9 * dt < problem.maps().tau_max || field.rows() <= hist {
        return Err(Error::param(
            "field",
            "needs history rows covering [−τ_max, 0] and at least the row t = 0",
        ));
    }
    let steps = field.rows() - hist - 1;
    Lattice::new(problem, field.maturities().to_vec(), dt, hist, steps)
}

pub(crate) fn apply_on_lattice(
    lattice: &Lattice,
    field: &SolutionField,
    shift: Option<&Shift>,
) -> Result<SolutionField> {
    let nj = lattice.nodes();
    let body: Vec<f64> = (0..(lattice.steps + 1) * nj)
        .into_par_iter()
        .map(|q| lattice.operator_node(q / nj, q % nj, field, shift))
        .collect::<Result<_>>()?;
    let mut out = lattice.empty_field()?;
    for (i, chunk) in body.chunks(nj).enumerate() {
        out.row_mut(lattice.row(i)).copy_from_slice(chunk);
    }
    Ok(out)
}

/// N⁰(t, m) = K(t, m) μ̄(χ(−t, m)) on the solver's grid: the transport
/// part alone, the usual first Picard iterate.
pub fn transport_field(
    problem: &Problem,
    horizon: f64,
    config: &SolverConfig,
) -> Result<SolutionField> {
    let grid = config.grid()?;
    let dt = config.time_step(problem)?;
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let hist = ((problem.maps().tau_max / dt) - 1e-9).ceil().max(1.0) as usize;
    let lattice = Lattice::new(problem, grid.nodes().to_vec(), dt, hist, steps)?;
    let mut f = lattice.empty_field()?;
    for i in 1..=steps {
        for j in 0..lattice.nodes() {
            let v = lattice.transport(i, j, None);
            f.row_mut(lattice.row(i))[j] = v;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        DivisionMap, InitialData, ModelCoefficients, Profile, Reintroduction, Velocity,
    };

    fn coefficients(beta0: f64) -> ModelCoefficients {
        ModelCoefficients {
            velocity: Velocity::linear(0.2).unwrap(),
            division_age: Profile::Constant(1.0),
            division_map: DivisionMap::linear(0.5).unwrap(),
            resting_loss: Profile::Constant(0.05),
            apoptosis: Profile::Constant(0.1),
            reintroduction: Reintroduction::hill(beta0, 1.0, 2.0).unwrap(),
        }
    }

    fn small() -> SolverConfig {
        SolverConfig {
            maturity_nodes: 60,
            smallest_cell: 1e-3,
            steps_per_delay: 10,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let c = coefficients(0.04);
        let p = Problem::new(c, InitialData::zero()).unwrap();
        let s = solve(&p, 3.0, &small()).unwrap();
        assert_eq!(s.n.sup(), 0.0);
        assert_eq!(s.p.sup(), 0.0);
    }

    #[test]
    fn no_reintroduction_is_pure_transport() {
        let c = coefficients(0.0);
        let data = InitialData::compatible("lin", &c, |m| 1.0 - m);
        let p = Problem::new(c, data).unwrap();
        let s = solve(&p, 3.0, &small()).unwrap();
        for r in 0..s.n.rows() {
            let t = s.n.time(r).max(0.0);
            for (j, &m) in s.n.maturities().iter().enumerate() {
                let exact = (-0.25 * t).exp() * (1.0 - m * (-0.2 * t).exp());
                let exact = if s.n.time(r) < 0.0 { 1.0 - m } else { exact };
                assert!((s.n.value(r, j) - exact).abs() < 1e-13, "t={t} m={m}");
            }
        }
        assert_eq!(s.p.sup(), 0.0);
        let t = transport_field(&p, 3.0, &small()).unwrap();
        assert!(t.distance(&s.n).unwrap() < 1e-13);
        assert!(picard_step(&p, &t).unwrap().distance(&t).unwrap() < 1e-13);
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let c = coefficients(0.04);
        let data = InitialData::compatible("c", &c, |m| 0.1 * (1.0 - m));
        let p = Problem::new(c, data).unwrap();
        let s = solve(&p, 3.0, &small()).unwrap();
        let h = picard_step(&p, &s.n).unwrap();
        assert!(h.distance(&s.n).unwrap() < 1e-11);
        assert!(s.report.seam_jump < 1e-12);
        assert!(s.report.windows.iter().all(|w| w.q < 1.0));
        assert!(s.n.min() >= 0.0 && s.p.min() >= 0.0);
        // N ≠ transport once cells re-enter and divide
        let t = transport_field(&p, 3.0, &small()).unwrap();
        assert!(t.distance(&s.n).unwrap() > 1e-6);
    }

    #[test]
    fn rejects_bad_runs() {
        let c = coefficients(0.04);
        let p = Problem::new(c, InitialData::zero()).unwrap();
        assert!(solve(&p, -1.0, &small()).is_err());
        let bad = SolverConfig {
            dt: Some(0.0),
            ..small()
        };
        assert!(solve(&p, 1.0, &bad).is_err());
    }

    #[test]
    fn refinement_keeps_nodes_and_halves_step() {
        let c = coefficients(0.04);
        let p = Problem::new(c, InitialData::zero()).unwrap();
        let cfg = small();
        let fine = cfg.refined(&p).unwrap();
        assert_eq!(
            fine.time_step(&p).unwrap(),
            0.5 * cfg.time_step(&p).unwrap()
        );
        assert_eq!(
            fine.grid().unwrap().len(),
            2 * cfg.grid().unwrap().len() - 1
        );
    }
}
