use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Arm, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{z_crit, EffectEstimate, Measure, Orientation};

pub const MMRM_MAX_ITER: usize = 200;
pub const MMRM_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceStructure {
    #[default]
    Unstructured,
    CompoundSymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmrmSettings {
    /// Separate baseline slope at each visit.
    pub baseline_by_visit: bool,
    pub alpha: f64,
    pub max_iter: usize,
}

impl Default for MmrmSettings {
    fn default() -> Self {
        MmrmSettings { baseline_by_visit: true, alpha: 0.05, max_iter: MMRM_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmrmContrast {
    pub visit: String,
    pub week: f64,
    /// Intervention minus comparator adjusted mean change.
    pub estimate: EffectEstimate,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmrmFit {
    pub scale_id: String,
    pub structure: CovarianceStructure,
    pub baseline_by_visit: bool,
    pub contrasts: Vec<MmrmContrast>,
    /// Estimated within-subject covariance over post-baseline visits.
    pub covariance: Vec<Vec<f64>>,
    pub reml_loglik: f64,
    pub loglik_history: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub n_subjects: usize,
    pub n_observations: usize,
}

struct Unit {
    intervention: bool,
    baseline: f64,
    /// (visit index, change from baseline)
    obs: Vec<(usize, f64)>,
}

struct Model {
    units: Vec<Unit>,
    visits: usize,
    structure: CovarianceStructure,
    by_visit: bool,
}

impl Model {
    fn n_fixed(&self) -> usize {
        if self.by_visit {
            3 * self.visits
        } else {
            2 * self.visits + 1
        }
    }

    fn n_obs(&self) -> usize {
        self.units.iter().map(|u| u.obs.len()).sum()
    }

    fn n_theta(&self) -> usize {
        match self.structure {
            CovarianceStructure::Unstructured => self.visits * (self.visits + 1) / 2,
            CovarianceStructure::CompoundSymmetry => 2,
        }
    }

    fn row(&self, u: &Unit, v: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_fixed()];
        x[v] = 1.0;
        if u.intervention {
            x[self.visits + v] = 1.0;
        }
        let b = if self.by_visit { 2 * self.visits + v } else { 2 * self.visits };
        x[b] = u.baseline;
        x
    }

    fn sigma(&self, theta: &[f64]) -> DMatrix<f64> {
        let q = self.visits;
        match self.structure {
            CovarianceStructure::Unstructured => {
                let mut l = DMatrix::zeros(q, q);
                let mut k = 0;
                for i in 0..q {
                    for j in 0..=i {
                        l[(i, j)] = if i == j { theta[k].exp() } else { theta[k] };
                        k += 1;
                    }
                }
                &l * l.transpose()
            }
            CovarianceStructure::CompoundSymmetry => {
                let var = theta[0].exp();
                let rho = cs_rho(theta[1], q);
                DMatrix::from_fn(q, q, |i, j| if i == j { var } else { var * rho })
            }
        }
    }

    /// REML log-likelihood with the fixed effects profiled out, plus the
    /// GLS coefficients and their covariance.
    fn reml(&self, theta: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = self.n_fixed();
        let sigma = self.sigma(theta);
        let mut a = DMatrix::zeros(p, p);
        let mut c = DVector::zeros(p);
        let (mut logdet, mut quad) = (0.0, 0.0);
        for u in &self.units {
            let k = u.obs.len();
            let s = DMatrix::from_fn(k, k, |i, j| sigma[(u.obs[i].0, u.obs[j].0)]);
            let chol = s.cholesky()?;
            logdet += 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let x = DMatrix::from_fn(k, p, |i, j| self.row(u, u.obs[i].0)[j]);
            let y = DVector::from_iterator(k, u.obs.iter().map(|o| o.1));
            let six = chol.solve(&x);
            let siy = chol.solve(&y);
            a += x.transpose() * &six;
            c += x.transpose() * &siy;
            quad += y.dot(&siy);
        }
        let chol_a = a.cholesky()?;
        let logdet_a = 2.0 * chol_a.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let beta = chol_a.solve(&c);
        let dof = (self.n_obs() - p) as f64;
        let ll = -0.5 * (logdet + logdet_a + quad - c.dot(&beta) + dof * (2.0 * std::f64::consts::PI).ln());
        ll.is_finite().then(|| (ll, beta, chol_a.inverse()))
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.reml(theta).map_or(f64::INFINITY, |r| -r.0)
    }

    fn gradient(&self, theta: &[f64]) -> DVector<f64> {
        let h = 1e-5;
        let mut g = DVector::zeros(theta.len());
        let mut t = theta.to_vec();
        for k in 0..theta.len() {
            t[k] = theta[k] + h;
            let up = self.objective(&t);
            t[k] = theta[k] - h;
            let down = self.objective(&t);
            t[k] = theta[k];
            g[k] = (up - down) / (2.0 * h);
        }
        g
    }

    fn start(&self) -> Vec<f64> {
        // per-visit variance of the change, no correlation
        let q = self.visits;
        let mut var = vec![0.0; q];
        for (v, slot) in var.iter_mut().enumerate() {
            let ys: Vec<f64> = self.units.iter().flat_map(|u| u.obs.iter()).filter(|o| o.0 == v).map(|o| o.1).collect();
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            let s = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / ys.len().max(2).saturating_sub(1) as f64;
            *slot = if s > 0.0 { s } else { 1.0 };
        }
        match self.structure {
            CovarianceStructure::Unstructured => {
                let mut theta = Vec::with_capacity(self.n_theta());
                for (i, vi) in var.iter().enumerate() {
                    theta.extend(std::iter::repeat_n(0.0, i));
                    theta.push(0.5 * vi.ln());
                }
                theta
            }
            CovarianceStructure::CompoundSymmetry => {
                let mean = var.iter().sum::<f64>() / q as f64;
                let lo = cs_lower(q);
                let p = -lo / (1.0 - lo);
                vec![mean.ln(), (p / (1.0 - p)).ln()]
            }
        }
    }
}

fn cs_lower(q: usize) -> f64 {
    -1.0 / (q as f64 - 1.0)
}

fn cs_rho(phi: f64, q: usize) -> f64 {
    let lo = cs_lower(q);
    lo + (1.0 - lo) / (1.0 + (-phi).exp())
}

struct Optimum {
    theta: Vec<f64>,
    history: Vec<f64>,
    iterations: usize,
    gradient_norm: f64,
}

/// BFGS on the negative REML log-likelihood with an Armijo backtracking
/// line search; accepted steps never lower the likelihood.
fn maximize(model: &Model, max_iter: usize) -> Result<Optimum> {
    let n = model.n_theta();
    let mut x = DVector::from_vec(model.start());
    let mut f = model.objective(x.as_slice());
    if !f.is_finite() {
        return Err(Error::DegenerateVariance("starting covariance is not positive definite".into()));
    }
    let mut g = model.gradient(x.as_slice());
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut history = vec![-f];
    let mut fresh = true;
    for iter in 1..=max_iter {
        let mut d = -(&h * &g);
        if d.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            fresh = true;
        }
        let slope = d.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &d * t;
            let fc = model.objective(cand.as_slice());
            if fc.is_finite() && fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            let gn = g.amax();
            if gn < 1e-3 {
                return Ok(Optimum { theta: x.as_slice().to_vec(), history, iterations: iter, gradient_norm: gn });
            }
            return Err(Error::NonConvergence { iterations: iter });
        };
        let g_new = model.gradient(x_new.as_slice());
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * yv.transpose() * rho;
            let right = &i - &yv * s.transpose() * rho;
            h = &left * &h * &right + &s * s.transpose() * rho;
            fresh = false;
        }
        let rel = (f - f_new).abs() / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(-f);
        let gn = g.amax();
        if (rel < MMRM_REL_TOL && gn < 1e-4) || gn < 1e-7 {
            return Ok(Optimum { theta: x.as_slice().to_vec(), history, iterations: iter, gradient_norm: gn });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter })
}

/// Mixed model for repeated measures on change from baseline:
/// visit-specific intercepts and arm effects, baseline as covariate
/// (per visit by default), and an unstructured or compound-symmetry
/// within-subject covariance, fitted by REML.
///
/// Subjects enter when they have a baseline value and at least one
/// post-baseline observation.
pub fn fit_mmrm(ds: &TrialDataset, scale_id: &str, structure: CovarianceStructure, settings: &MmrmSettings) -> Result<MmrmFit> {
    ds.scale(scale_id)?;
    let baseline = ds.baseline_visit()?.label.clone();
    let post = ds.post_baseline_visits()?;
    if post.len() < 2 {
        return Err(Error::InsufficientData("MMRM needs at least two post-baseline visits".into()));
    }
    let units: Vec<Unit> = ds
        .analysis_subjects()
        .filter_map(|s| {
            let b = s.score(scale_id, &baseline)?;
            let obs: Vec<(usize, f64)> = post
                .iter()
                .enumerate()
                .filter_map(|(v, visit)| s.score(scale_id, &visit.label).map(|y| (v, y - b)))
                .collect();
            (!obs.is_empty()).then_some(Unit { intervention: s.arm == Arm::Intervention, baseline: b, obs })
        })
        .collect();
    let model = Model { units, visits: post.len(), structure, by_visit: settings.baseline_by_visit };
    if structure == CovarianceStructure::Unstructured && model.units.len() < model.visits {
        return Err(Error::InsufficientData(format!(
            "{} subjects cannot support an unstructured covariance over {} visits",
            model.units.len(),
            model.visits
        )));
    }
    if model.n_obs() <= model.n_fixed() {
        return Err(Error::InsufficientData(format!(
            "{} observations for {} fixed effects",
            model.n_obs(),
            model.n_fixed()
        )));
    }
    let mut per_visit = vec![[0usize; 2]; model.visits];
    for u in &model.units {
        for &(v, _) in &u.obs {
            per_visit[v][usize::from(!u.intervention)] += 1;
        }
    }
    if let Some(v) = per_visit.iter().position(|c| c[0] == 0 || c[1] == 0) {
        return Err(Error::InsufficientData(format!("no observations in one arm at visit `{}`", post[v].label)));
    }

    let opt = maximize(&model, settings.max_iter)?;
    let (ll, beta, cov) = model
        .reml(&opt.theta)
        .ok_or_else(|| Error::DegenerateVariance("fitted covariance is singular".into()))?;
    let z = z_crit(settings.alpha);
    let contrasts = post
        .iter()
        .enumerate()
        .map(|(v, visit)| {
            let k = model.visits + v;
            let se = cov[(k, k)].max(0.0).sqrt();
            let point = beta[k];
            MmrmContrast {
                visit: visit.label.clone(),
                week: visit.week,
                estimate: EffectEstimate {
                    measure: Measure::MD,
                    point,
                    ci_low: point - z * se,
                    ci_high: point + z * se,
                    alpha: settings.alpha,
                    n_per_arm: per_visit[v],
                    orientation: Orientation::Raw,
                    continuity_corrected: false,
                },
                std_err: se,
            }
        })
        .collect();
    let sigma = model.sigma(&opt.theta);
    Ok(MmrmFit {
        scale_id: scale_id.to_string(),
        structure,
        baseline_by_visit: settings.baseline_by_visit,
        contrasts,
        covariance: (0..model.visits).map(|i| (0..model.visits).map(|j| sigma[(i, j)]).collect()).collect(),
        reml_loglik: ll,
        loglik_history: opt.history,
        iterations: opt.iterations,
        gradient_norm: opt.gradient_norm,
        n_subjects: model.units.len(),
        n_observations: model.n_obs(),
    })
}
