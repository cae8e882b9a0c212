mod common;

use std::sync::OnceLock;

use lmmfit::data::DataTable;
use lmmfit::inference::*;
use lmmfit::model::{BuildOptions, ModelSpec};
use lmmfit::optim::OptResult;
use lmmfit::pls::DevState;
use nalgebra::{DMatrix, DVector};

fn fm1() -> &'static FitResult {
    static FIT: OnceLock<FitResult> = OnceLock::new();
    FIT.get_or_init(|| lmer("Reaction ~ Days + (Days|Subject)", &common::sleepstudy(), true).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// A fit frozen at `theta` rather than optimized.
fn at_theta(spec: ModelSpec, theta: &[f64]) -> FitResult {
    let state = DevState::from_spec(&spec).unwrap();
    let opt = OptResult {
        x: theta.to_vec(),
        fval: f64::NAN,
        n_eval: 0,
        converged: true,
        boundary: vec![false; theta.len()],
        history: Vec::new(),
    };
    finalize_fit(state, opt, FitOptions::default()).unwrap()
}

#[test]
fn sleepstudy_summary_quantities() {
    let f = fm1();
    assert!(close(f.criterion(), 1743.6, 0.1), "{}", f.criterion());
    assert!(close(f.beta()[0], 251.405, 0.01) && close(f.beta()[1], 10.467, 0.01));
    let se = f.std_errors().unwrap();
    assert!(close(se[0], 6.825, 0.01) && close(se[1], 1.546, 0.01), "{se:?}");
    let t = f.t_values().unwrap();
    assert!(close(t[0], 36.84, 0.02) && close(t[1], 6.77, 0.02), "{t:?}");
    let v = f.vcov().unwrap();
    for (a, b) in v.iter().zip([46.575, -1.451, -1.451, 2.389]) {
        assert!(close(*a, b, 0.01), "{v}");
    }
    assert!(close(f.fixef_correlation().unwrap()[(1, 0)], -0.138, 0.005));
    let q = f.residual_quantiles();
    for (a, b) in q.iter().zip([-3.954, -0.463, 0.023, 0.463, 5.179]) {
        assert!(close(*a, b, 0.01), "{q:?}");
    }
    assert_eq!(f.df(), 6);
    assert!(close(f.sigma2(), f.state().pwrss() / f.state().deg_free(), 1e-9));
}

#[test]
fn variance_component_records() {
    let recs = fm1().varcorr().records();
    let vcov: Vec<f64> = recs.iter().map(|r| r.vcov).collect();
    let sdcor: Vec<f64> = recs.iter().map(|r| r.sdcor).collect();
    for (a, b) in vcov.iter().zip([612.090, 35.072, 9.604, 654.941]) {
        assert!(close(*a, b, 0.05), "{vcov:?}");
    }
    for (a, b) in sdcor.iter().zip([24.74045, 5.92213, 0.06555, 25.59182]) {
        assert!(close(*a, b, 0.005), "{sdcor:?}");
    }
    assert_eq!(recs[2].var1.as_deref(), Some("(Intercept)"));
    assert_eq!(recs[2].var2.as_deref(), Some("Days"));
    assert_eq!(recs[3].grp, "Residual");
    for t in &fm1().varcorr().terms {
        let m = DMatrix::from_fn(t.cov.len(), t.cov.len(), |i, j| t.cov[i][j]);
        assert!(m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-10));
    }
}

#[test]
fn identity_factor_gives_scaled_identity() {
    let spec =
        ModelSpec::from_formula("Reaction ~ Days + (Days|Subject)", &common::sleepstudy(), &BuildOptions::default())
            .unwrap();
    let f = at_theta(spec, &[1.0, 0.0, 1.0]);
    let t = &f.varcorr().terms[0];
    assert!(close(t.cov[0][0], f.sigma2(), 1e-9) && close(t.cov[1][1], f.sigma2(), 1e-9));
    assert_eq!(t.corr[1][0], 0.0);
}

#[test]
fn residuals_fitted_and_likelihood_summaries() {
    let f = fm1();
    let y = f.state().y();
    for ((r, m), y) in f.residuals(ResidualKind::Response).iter().zip(f.fitted()).zip(y) {
        assert_eq!(r + m, *y);
    }
    let ml = f.refit_ml().unwrap();
    assert!(!ml.reml());
    assert!(close(ml.deviance(), 1751.94, 0.05), "{}", ml.deviance());
    assert!(close(ml.aic(), 1764.0, 1.0) && close(ml.bic(), 1783.0, 1.0) && close(ml.log_lik(), -876.0, 1.0));
    assert!(close(ml.aic(), ml.deviance() + 12.0, 1e-9));
}

#[test]
fn ranef_shrinkage_and_conditional_mean_oracle() {
    let f = fm1();
    let re = &f.ranef()[0];
    assert_eq!(re.levels.len(), 18);
    for k in 0..2 {
        let mean: f64 = re.values.iter().map(|r| r[k]).sum::<f64>() / 18.0;
        assert!(mean.abs() < 0.5, "{mean}");
    }
    // û = V ΛᵀZᵀW(y − o − Xβ̂) with V = (ΛᵀZᵀWZΛ + I)⁻¹
    let spec = f.spec();
    let zl = spec.zt.to_dense().transpose() * spec.lambdat_at(f.theta()).to_dense().transpose();
    let v = (zl.tr_mul(&zl) + DMatrix::identity(spec.q(), spec.q())).try_inverse().unwrap();
    let r = DVector::from_column_slice(&spec.y) - &spec.x * DVector::from_column_slice(f.beta());
    let u = &v * zl.tr_mul(&r);
    for (a, b) in f.u().iter().zip(u.iter()) {
        assert!(close(*a, *b, 1e-8 * (1.0 + b.abs())));
    }
}

#[test]
fn conditional_variance_blocks_match_dense_inverse() {
    let c: Vec<f64> = (0..40).map(|k| ((k * 53 + 7) % 101) as f64 / 101.0).collect();
    for formula in ["y ~ x + (1|g)", "y ~ x + (x|g)"] {
        let spec = ModelSpec::from_formula(formula, &common::toy(10, 2, &c), &BuildOptions::default()).unwrap();
        let theta: Vec<f64> = spec.lower.iter().map(|&l| if l == 0.0 { 0.8 } else { 0.3 }).collect();
        let f = at_theta(spec, &theta);
        let spec = f.spec();
        let lam = spec.lambdat_at(&theta).to_dense().transpose();
        let zl = spec.zt.to_dense().transpose() * &lam;
        let v = (zl.tr_mul(&zl) + DMatrix::identity(spec.q(), spec.q())).try_inverse().unwrap();
        let full = &lam * v * lam.transpose() * f.sigma2();
        let blocks = f.cond_var().unwrap();
        let p = spec.terms[0].p;
        for (j, b) in blocks[0].iter().enumerate() {
            let want = full.view((j * p, j * p), (p, p));
            assert!((b - want).abs().max() < 1e-10, "{formula}: {b} vs {want}");
        }
    }
}

#[test]
fn zero_theta_has_zero_modes_and_variances() {
    let spec =
        ModelSpec::from_formula("Reaction ~ Days + (Days|Subject)", &common::sleepstudy(), &BuildOptions::default())
            .unwrap();
    let f = at_theta(spec, &[0.0, 0.0, 0.0]);
    assert!(f.ranef()[0].values.iter().flatten().all(|&v| v == 0.0));
    assert!(f.cond_var().unwrap()[0].iter().all(|b| b.iter().all(|&v| v == 0.0)));
    assert!(close(f.hat_trace().unwrap(), 2.0, 1e-10));
    assert!(f.criterion().is_finite());
}

#[test]
fn hat_matrix_against_dense_projection() {
    let c: Vec<f64> = (0..40).map(|k| ((k * 29 + 3) % 89) as f64 / 89.0).collect();
    let data = common::toy(10, 3, &c);
    let frame =
        lmmfit::model::FrameOptions { weights: Some("w".into()), offset: Some("o".into()), ..Default::default() };
    let spec = ModelSpec::from_formula("y ~ x + (x|g)", &data, &BuildOptions { reml: true, frame }).unwrap();
    for theta in [[0.6, 0.2, 0.5], [1.4, -0.3, 0.9]] {
        let f = at_theta(spec.clone(), &theta);
        let spec = f.spec();
        let n = spec.n();
        let w = DVector::from_iterator(n, spec.sqrt_w.iter().map(|s| s * s));
        let zl = spec.zt.to_dense().transpose() * spec.lambdat_at(&theta).to_dense().transpose();
        let (q, p) = (spec.q(), spec.p());
        let mut m = DMatrix::zeros(n, q + p);
        m.columns_mut(0, q).copy_from(&zl);
        m.columns_mut(q, p).copy_from(&spec.x);
        let mw = DMatrix::from_fn(n, q + p, |i, j| m[(i, j)] * w[i]);
        let mut a = m.tr_mul(&mw);
        for k in 0..q {
            a[(k, k)] += 1.0;
        }
        let h = &m * a.try_inverse().unwrap() * mw.transpose();
        let r = DVector::from_iterator(n, spec.y.iter().zip(&spec.offset).map(|(y, o)| y - o));
        let mu_o = DVector::from_iterator(n, f.fitted().iter().zip(&spec.offset).map(|(m, o)| m - o));
        assert!((&h * r - mu_o).amax() < 1e-8);
        let hat = f.hat().unwrap();
        for (a, b) in hat.diag().iter().zip(h.diagonal().iter()) {
            assert!(close(*a, *b, 1e-8));
        }
        let tr = hat.trace();
        assert!(close(tr, h.trace(), 1e-8));
        assert!(tr > p as f64 && tr < (p + q) as f64, "{tr}");
    }
}

pub fn poly2(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut l: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm = l.iter().map(|v| v * v).sum::<f64>().sqrt();
    l.iter_mut().for_each(|v| *v /= norm);
    let sq: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
    let sq_mean = sq.iter().sum::<f64>() / n;
    let dot: f64 = sq.iter().zip(&l).map(|(a, b)| (a - sq_mean) * b).sum();
    let mut qd: Vec<f64> = sq.iter().zip(&l).map(|(a, b)| a - sq_mean - dot * b).collect();
    let norm = qd.iter().map(|v| v * v).sum::<f64>().sqrt();
    qd.iter_mut().for_each(|v| *v /= norm);
    (l, qd)
}

#[test]
fn sequential_anova_with_orthogonal_polynomials() {
    let mut d = common::sleepstudy();
    let (p1, p2) = poly2(&d.numeric("Days").unwrap());
    d = d.with_numeric("p1", p1).unwrap().with_numeric("p2", p2).unwrap();
    let f = lmer("Reaction ~ p1 + p2 + (p1 + p2 | Subject)", &d, true).unwrap();
    let a = f.anova_seq();
    assert_eq!(a.len(), 2);
    assert!(close(a[0].f, 46.08, 0.5) && close(a[1].f, 0.66, 0.5), "{a:?}");
    assert!(close(a[0].sum_sq, 23874.0, 50.0) && close(a[1].sum_sq, 340.0, 5.0), "{a:?}");
    let t = f.t_values().unwrap();
    assert!(close(a[1].f, t[2] * t[2], 1e-6));
}

#[test]
fn single_term_anova() {
    let a = fm1().anova_seq();
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].term, "Days");
    assert_eq!(a[0].mean_sq, a[0].sum_sq);
    let t = fm1().t_values().unwrap()[1];
    assert!(close(a[0].f, t * t, 1e-6));
}

#[test]
fn likelihood_ratio_table() {
    let d = common::sleepstudy();
    let fm2 = lmer("Reaction ~ Days + (1|Subject) + (0+Days|Subject)", &d, true).unwrap();
    let fm3 = lmer("Reaction ~ Days + (1|Subject)", &d, true).unwrap();
    let t = anova_compare(&[("fm1", fm1()), ("fm2", &fm2), ("fm3", &fm3)]).unwrap();
    let names: Vec<&str> = t.iter().map(|r| r.model.as_str()).collect();
    assert_eq!(names, ["fm3", "fm2", "fm1"]);
    assert_eq!(t.iter().map(|r| r.df).collect::<Vec<_>>(), [4, 5, 6]);
    for (r, dev) in t.iter().zip([1794.0, 1752.0, 1752.0]) {
        assert!(close(r.deviance, dev, 1.0));
    }
    assert!(t.windows(2).all(|w| w[0].deviance >= w[1].deviance));
    assert!(close(t[1].chisq.unwrap(), 42.08, 0.2) && t[1].p.unwrap() < 1e-9);
    assert!(close(t[2].chisq.unwrap(), 0.06, 0.05) && close(t[2].p.unwrap(), 0.8, 0.05));
    assert!(t[0].chisq.is_none());

    let same = anova_compare(&[("a", fm1()), ("b", fm1())]).unwrap();
    assert_eq!(same[1].chisq, Some(0.0));
    assert_eq!(same[1].chi_df, Some(0));
    assert_eq!(same[1].p, None);
}

#[test]
fn refit_update_and_predict() {
    let f = fm1();
    let again = f.refit(f.state().y()).unwrap();
    for (a, b) in again.theta().iter().zip(f.theta()) {
        assert!(close(*a, *b, 1e-6));
    }
    let d = common::sleepstudy();
    let g = f.update(". ~ . - (Days|Subject) + (1|Subject)", &d).unwrap();
    assert_eq!(g.spec().original.to_string(), "Reaction ~ Days + (1 | Subject)");
    assert_eq!(g.spec().ntheta(), 1);

    let cond = f.predict(&d, true).unwrap();
    for (a, b) in cond.iter().zip(f.fitted()) {
        assert!(close(*a, *b, 1e-9));
    }
    let pop = f.predict(&d, false).unwrap();
    for (i, v) in pop.iter().enumerate() {
        assert!(close(*v, f.beta()[0] + f.beta()[1] * f.spec().x[(i, 1)], 1e-9));
    }
    let new = DataTable::new().with_numeric("Days", vec![1.0]).unwrap().with_categorical("Subject", &["999"]).unwrap();
    let err = f.predict(&new, true).unwrap_err().to_string();
    assert!(err.contains("999"), "{err}");
    assert!(f.predict(&new, false).is_ok());
}

#[test]
fn simulation_modes() {
    let f = fm1();
    let mut rng = replicate_rng(3, 0);
    let pop = f.simulate_one(&mut rng, SimulationMode::Population, 0.0);
    let xb = &f.spec().x * DVector::from_column_slice(f.beta());
    for (a, b) in pop.iter().zip(xb.iter()) {
        assert_eq!(a, b);
    }
    let with_u = f.simulate_one(&mut rng, SimulationMode::UseU, 0.0);
    for (a, b) in with_u.iter().zip(f.fitted()) {
        assert!(close(*a, *b, 1e-9));
    }
    let s1 = f.simulate(4, 11, SimulationMode::NewRe);
    let s2 = f.simulate(4, 11, SimulationMode::NewRe);
    assert_eq!(s1, s2);
    assert_eq!(s1.shape(), (180, 4));
}

#[test]
fn simulated_group_effects_have_model_variance() {
    let d = common::sleepstudy();
    let f = lmer("Reaction ~ Days + (1|Subject)", &d, true).unwrap();
    let want = f.sigma2() * f.theta()[0].powi(2);
    let codes = &f.spec().terms[0].codes;
    let first: Vec<usize> = (0..18).map(|g| codes.iter().position(|&c| c == g).unwrap()).collect();
    let xb = &f.spec().x * DVector::from_column_slice(f.beta());
    let mut vals = Vec::new();
    for j in 0..1000 {
        let y = f.simulate_one(&mut replicate_rng(5, j), SimulationMode::NewRe, 0.0);
        vals.extend(first.iter().map(|&i| y[i] - xb[i]));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / want - 1.0).abs() < 0.1, "{var} vs {want}");
}

#[test]
fn posterior_predictive_iqr() {
    let f = fm1();
    let iqr = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        quantile(&s, 0.75) - quantile(&s, 0.25)
    };
    let obs = iqr(f.state().y());
    let sims = f.simulate(1000, 20, SimulationMode::NewRe);
    let mut stats: Vec<f64> = sims.column_iter().map(|c| iqr(c.as_slice())).collect();
    stats.push(obs);
    let p = stats.iter().filter(|&&s| obs >= s).count() as f64 / stats.len() as f64;
    assert!(p > 0.5 && p < 0.95, "{p}");
}

#[test]
fn bootstrap_determinism_and_recovery() {
    let f = fm1();
    let a = f.bootstrap(40, 9, 1).unwrap();
    let b = f.bootstrap(40, 9, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.draws.len() + a.failures, 40);
    assert_eq!(a.names[1], "cor_Days.(Intercept)|Subject");
    let empty = f.bootstrap(0, 9, 2).unwrap();
    assert!(empty.draws.is_empty() && empty.failures == 0);
    // every parameter of most replicates lies within 3 bootstrap SDs of the estimate
    let est = params::theta_to_sdcor(f.spec(), f.theta(), f.sigma()).unwrap();
    let est: Vec<f64> = est.into_iter().chain(f.beta().iter().copied()).collect();
    for k in 0..est.len() {
        let col: Vec<f64> = a.draws.iter().map(|r| r[k]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0)).sqrt();
        let inside = col.iter().filter(|v| (*v - est[k]).abs() <= 3.0 * sd).count();
        assert!(inside as f64 >= 0.95 * col.len() as f64, "{}", a.names[k]);
    }
}

#[test]
fn profile_zeta_is_zero_at_estimate_and_monotone() {
    let pr = fm1().profile(&ProfileOptions::default()).unwrap();
    assert_eq!(pr.params.len(), 6);
    assert!(close(pr.cutoff, lmmfit::inference::dist::qchisq(0.95, 6.0).sqrt(), 1e-12));
    for p in &pr.params {
        let at = p.points.iter().find(|q| q.value == p.estimate).unwrap();
        assert_eq!(at.zeta, 0.0, "{}", p.name);
        assert!(p.points.windows(2).all(|w| w[1].zeta > w[0].zeta), "{}: {:?}", p.name, p.points);
    }
    let ci = pr.confint(0.95);
    let want = [
        (14.3815, 37.7160),
        (-0.4815, 0.6850),
        (3.8012, 8.7534),
        (22.8983, 28.8580),
        (237.6807, 265.1295),
        (7.3587, 13.5759),
    ];
    for (i, (lo, hi)) in ci.iter().zip(want) {
        assert!(close(i.lower.unwrap(), lo, 0.01) && close(i.upper.unwrap(), hi, 0.01), "{i:?}");
        assert!(!i.linear_fallback);
    }
}

#[test]
fn wald_and_profile_agree_for_the_slope() {
    let f = fm1();
    let wald = &f.confint_wald(0.95).unwrap()[1];
    let opts = ProfileOptions { which: vec!["Days".into()], ..Default::default() };
    let prof = f.profile(&opts).unwrap().confint(0.95).remove(0);
    let (ww, pw) = (wald.upper.unwrap() - wald.lower.unwrap(), prof.upper.unwrap() - prof.lower.unwrap());
    assert!((ww / pw - 1.0).abs() < 0.15, "{ww} vs {pw}");
    assert!(wald.lower.unwrap() > prof.lower.unwrap() - 0.5 && wald.upper.unwrap() < prof.upper.unwrap() + 0.5);
}

/// Balanced one-way layout with clearly positive between-group variance.
fn balanced_one_way() -> (DataTable, f64, f64, usize) {
    let a = 8;
    let n = 5;
    let effects = [3.1, -2.4, 0.7, 5.2, -4.0, 1.9, -0.6, -2.8];
    let mut y = Vec::new();
    let mut g = Vec::new();
    for i in 0..a {
        for j in 0..n {
            y.push(10.0 + effects[i] + ((i * 7 + j * 13) % 11) as f64 / 11.0 - 0.5);
            g.push(format!("L{i}"));
        }
    }
    let means: Vec<f64> = (0..a).map(|i| y[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let grand = means.iter().sum::<f64>() / a as f64;
    let s = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let d = DataTable::new().with_numeric("y", y).unwrap().with_categorical("g", &g).unwrap();
    (d, grand, s, a)
}

#[test]
fn balanced_one_way_intercept_profile_has_closed_form() {
    // with group means ȳᵢ and S = Σ(ȳᵢ − ȳ)², the ML profile is ζ² = a·ln(1 + a(μ − ȳ)²/S)
    let (d, grand, s, a) = balanced_one_way();
    let f = lmer("y ~ 1 + (1|g)", &d, false).unwrap();
    assert!(close(f.beta()[0], grand, 1e-9));
    let opts = ProfileOptions { which: vec!["(Intercept)".into()], ..Default::default() };
    let pr = f.profile(&opts).unwrap();
    let a = a as f64;
    for p in &pr.params[0].points {
        let dmu = p.value - grand;
        let want = dmu.signum() * (a * (1.0 + a * dmu * dmu / s).ln()).sqrt();
        assert!(close(p.zeta, want, 1e-3), "{} {} {}", p.value, p.zeta, want);
    }
    // Wald interval of the ML fit: ȳ ± z·√S / a
    let w = &f.confint_wald(0.95).unwrap()[0];
    let half = dist::qnorm(0.975) * s.sqrt() / a;
    assert!(close(w.lower.unwrap(), grand - half, 1e-3) && close(w.upper.unwrap(), grand + half, 1e-3), "{w:?}");
}

#[test]
fn profile_rejects_unknown_parameter() {
    let opts = ProfileOptions { which: vec!["nope".into()], ..Default::default() };
    assert!(fm1().profile(&opts).is_err());
}

#[test]
fn bootstrap_percentile_intervals() {
    let b = BootResult {
        nsim: 5,
        seed: 0,
        names: vec!["a".into()],
        draws: (1..=5).map(|v| vec![v as f64]).collect(),
        failures: 0,
    };
    let ci = b.confint(0.5);
    assert_eq!((ci[0].lower, ci[0].upper), (Some(2.0), Some(4.0)));
}

#[test]
fn model_without_fixed_effects() {
    let f = lmer("Reaction ~ 0 + (1|Subject)", &common::sleepstudy(), true).unwrap();
    assert!(f.beta().is_empty());
    assert_eq!(f.vcov().unwrap().shape(), (0, 0));
    assert_eq!(f.df(), 2);
}

#[test]
fn singular_fit_stays_finite() {
    // group effects exactly zero: the variance estimate sits on the boundary
    let g: Vec<String> = (0..30).map(|i| format!("g{}", i % 5)).collect();
    let y: Vec<f64> = (0..30).map(|i| ((i / 5) as f64 - 2.5) + if i % 2 == 0 { 0.3 } else { -0.3 }).collect();
    let d = DataTable::new().with_numeric("y", y).unwrap().with_categorical("g", &g).unwrap();
    let f = lmer("y ~ 1 + (1|g)", &d, true).unwrap();
    assert!(f.criterion().is_finite());
    assert!(f.theta()[0] < 1e-4);
    assert!(f.varcorr().terms[0].sd[0] < 1e-3);
}
