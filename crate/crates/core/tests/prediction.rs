use dichogeo::binomial::{
    default_binomial_init, fit_binomial, latent_approximation, BinomialFitOptions, IntegrationMode, LatentIntegrationSettings,
};
use dichogeo::geo::{
    cross_correlation, dichotomize, location_correlation, simulate_survey, to_prevalence_scale, Location, ModelParams,
    Outcomes, PrevalenceParams, SurveyDataset, SurveyDesign, Thresholds,
};
use dichogeo::linalg::Matrix;
use dichogeo::linear::{default_linear_init, fit_linear, LinearFitOptions, PrevalenceThreshold};
use dichogeo::predict::{
    draw_prevalence, exceedance_prob, krige, predict_from_field, predict_prevalence, prevalence_mean_exact, profile_mean,
    LatentField, PredictionOptions,
};
use dichogeo::scalar::norm_cdf;

fn five_points() -> SurveyDataset<f64> {
    let locs = vec![
        Location::new(0.0, 0.0, "a"),
        Location::new(0.4, 0.1, "b"),
        Location::new(0.2, 0.5, "c"),
        Location::new(0.9, 0.7, "d"),
        Location::new(0.6, 0.3, "e"),
    ];
    // two individuals at the first location
    let design = SurveyDesign::new(locs, vec![0, 0, 1, 2, 3, 4], vec![vec![1.0], vec![0.0], vec![0.5], vec![2.0], vec![1.5], vec![0.2]], None).unwrap();
    SurveyDataset::new(design, Outcomes::Continuous(vec![0.3, -0.4, 1.1, 0.2, -0.8, 0.6])).unwrap()
}

fn targets() -> Vec<Location<f64>> {
    vec![Location::new(0.1, 0.1, "t1"), Location::new(0.5, 0.5, "t2"), Location::new(0.4, 0.1, "t3")]
}

/// Gauss–Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap()).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for k in 0..2 * n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn dist(a: &Location<f64>, b: &Location<f64>) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

#[test]
fn kriging_matches_joint_precision_partition() {
    let ds = five_points();
    let p = ModelParams::new(0.2, vec![-0.3], 0.9, 0.4, 0.3).unwrap();
    let t = targets();
    let (mean, cov) = krige(&p, &ds, &t).unwrap();

    // joint vector (S at targets, Y); condition via the joint precision
    let locs = ds.locations();
    let lof = ds.location_of();
    let (g, n) = (t.len(), lof.len());
    let pt = |i: usize| -> Location<f64> { if i < g { t[i].clone() } else { locs[lof[i - g]].clone() } };
    let joint: Vec<Vec<f64>> = (0..g + n)
        .map(|i| {
            (0..g + n)
                .map(|j| {
                    let mut v = p.sigma2 * (-dist(&pt(i), &pt(j)) / p.phi).exp();
                    if i >= g && i == j {
                        v += p.tau2;
                    }
                    v
                })
                .collect()
        })
        .collect();
    let prec = invert(&joint);
    let lgg: Vec<Vec<f64>> = (0..g).map(|i| prec[i][..g].to_vec()).collect();
    let cond_cov = invert(&lgg);
    let y = ds.continuous().unwrap();
    let x = ds.design_matrix();
    let resid: Vec<f64> = (0..n).map(|k| y[k] - p.alpha - p.beta_gamma[0] * x[(k, 1)]).collect();
    let shift: Vec<f64> = (0..g).map(|j| (0..n).map(|k| prec[j][g + k] * resid[k]).sum()).collect();
    for i in 0..g {
        let m: f64 = -(0..g).map(|j| cond_cov[i][j] * shift[j]).sum::<f64>();
        assert!((mean[i] - m).abs() < 1e-8, "mean {i}: {} vs {m}", mean[i]);
        for j in 0..g {
            assert!((cov[(i, j)] - cond_cov[i][j]).abs() < 1e-8);
        }
    }

    // prevalence-scale field is −S/τ
    let (mt, ct) = LatentField::linear(&p, &ds).unwrap().at(&t).unwrap();
    for i in 0..g {
        assert!((mt[i] + mean[i] / p.tau()).abs() < 1e-12);
        assert!((ct[(i, i)] - cov[(i, i)] / p.tau2).abs() < 1e-12);
    }
}

#[test]
fn binomial_conditional_matches_gaussian_composition() {
    let ds = five_points();
    let bin = dichotomize(&ds, &Thresholds::Scalar(0.1)).unwrap();
    let p = PrevalenceParams::new(0.1, vec![0.4], 1.5, 0.3).unwrap();
    for mode in [IntegrationMode::Laplace, IntegrationMode::Ep] {
        let s = LatentIntegrationSettings::with_mode(mode);
        let lg = latent_approximation(&p, &bin, &s).unwrap();
        let locs = bin.locations();
        let kxx = location_correlation(locs, p.phi).unwrap().scale(p.sigma2_t);
        let a = lg.mean(&kxx);
        let v = lg.covariance(&kxx, &kxx);
        let t = targets();
        let kgx = cross_correlation(&t, locs, p.phi).unwrap().scale(p.sigma2_t);
        let kgg = location_correlation(&t, p.phi).unwrap().scale(p.sigma2_t);

        // s_g | s_x is Gaussian; integrate s_x over N(a, V)
        let kinv = invert(&(0..5).map(|i| kxx.row(i).to_vec()).collect::<Vec<_>>());
        let kinv = Matrix::from_rows(&kinv);
        let w = kgx.matmul(&kinv);
        let mean_o = w.matvec(&a);
        let cov_o = kgg.sub(&w.matmul(&kgx.transpose())).add(&w.matmul(&v).matmul(&w.transpose()));

        let (mean, cov) = LatentField::binomial(&p, &bin, &s).unwrap().at(&t).unwrap();
        for i in 0..t.len() {
            assert!((mean[i] - mean_o[i]).abs() < 1e-8, "{mode:?}");
            for j in 0..t.len() {
                assert!((cov[(i, j)] - cov_o[(i, j)]).abs() < 1e-8, "{mode:?}");
            }
        }
    }
}

#[test]
fn vanishing_field_gives_flat_prevalence() {
    let ds = five_points();
    let p = ModelParams::degenerate(0.2, vec![-0.3], 0.0, 0.4, 0.3).unwrap();
    let prev = to_prevalence_scale(&p, 0.5).unwrap();
    let field = LatentField::linear(&p, &ds).unwrap();
    let opts = PredictionOptions { n_cond_samples: 50, ..Default::default() };
    let out = predict_from_field(&prev, &[1.0], &field, &targets(), &opts).unwrap();
    let flat = norm_cdf(profile_mean(&prev, &[1.0]).unwrap());
    for v in out.prevalence_mean {
        assert!((v - flat).abs() < 1e-12);
    }
}

#[test]
fn far_field_prevalence_is_one_half_at_zero_mean() {
    let ds = five_points();
    let p = ModelParams::new(0.0, vec![0.0], 1.0, 1.0, 0.2).unwrap();
    let prev = PrevalenceParams::new(0.0, vec![0.0], 1.0, 0.2).unwrap();
    let field = LatentField::linear(&p, &ds).unwrap();
    let far = vec![Location::new(500.0, 500.0, "far"), Location::new(-500.0, 300.0, "far2")];
    let opts = PredictionOptions { n_cond_samples: 4000, seed: 9, ..Default::default() };
    let out = predict_from_field(&prev, &[0.0], &field, &far, &opts).unwrap();
    // far away S̃ ~ N(0, 1), so Φ(S̃) is uniform
    let se = (1.0f64 / 12.0 / 4000.0).sqrt();
    for v in &out.prevalence_mean {
        assert!((v - 0.5).abs() < 3.0 * se);
    }
    let (m, c) = field.at(&far).unwrap();
    let exact = prevalence_mean_exact(0.0, &m, &c.diag());
    assert!(exact.iter().all(|v| (v - 0.5).abs() < 1e-12));
}

#[test]
fn prevalence_rises_with_intercept_under_common_numbers() {
    let ds = five_points();
    let p = ModelParams::new(0.2, vec![-0.3], 0.9, 0.4, 0.3).unwrap();
    let field = LatentField::linear(&p, &ds).unwrap();
    let (m, c) = field.at(&targets()).unwrap();
    let lo = draw_prevalence(-0.2, &m, &c, 300, 5, 0);
    let hi = draw_prevalence(0.3, &m, &c, 300, 5, 0);
    for j in 0..m.len() {
        let a: f64 = (0..300).map(|r| lo[(r, j)]).sum();
        let b: f64 = (0..300).map(|r| hi[(r, j)]).sum();
        assert!(b > a);
    }
    let mut prev = vec![1.0; m.len()];
    for t in [0.05, 0.2, 0.4, 0.6, 0.95] {
        let e = exceedance_prob(&lo, t).unwrap();
        assert!(e.iter().zip(&prev).all(|(x, y)| x <= y));
        assert!(e.iter().all(|v| (0.0..=1.0).contains(v)));
        prev = e;
    }
}

#[test]
fn large_grids_are_split_into_tiles() {
    let ds = five_points();
    let p = ModelParams::new(0.2, vec![-0.3], 0.9, 0.4, 0.3).unwrap();
    let prev = to_prevalence_scale(&p, 0.5).unwrap();
    let field = LatentField::linear(&p, &ds).unwrap();
    let grid: Vec<Location<f64>> = (0..30).map(|i| Location::new(i as f64 / 30.0, 0.2, format!("g{i}"))).collect();
    let small = PredictionOptions { n_cond_samples: 200, tile_size: 7, exceedance_thresholds: vec![0.3], ..Default::default() };
    let out = predict_from_field(&prev, &[0.0], &field, &grid, &small).unwrap();
    assert_eq!(out.prevalence_mean.len(), 30);
    assert_eq!(out.exceedance[0].len(), 30);
    let again = predict_from_field(&prev, &[0.0], &field, &grid, &small).unwrap();
    assert_eq!(out.prevalence_mean, again.prevalence_mean);
    assert!(predict_from_field(&prev, &[0.0], &field, &grid, &PredictionOptions { tile_size: 2501, ..small.clone() }).is_err());
    assert!(predict_from_field(&prev, &[], &field, &grid, &small).is_err());
}

/// Both fitted models reach prevalence through the same sampler: fed the
/// conditional Gaussian of their own fit, it reproduces their output exactly.
#[test]
fn linear_and_binomial_paths_share_the_sampler() {
    let locs: Vec<Location<f64>> = (0..36).map(|k| Location::new((k % 6) as f64 / 5.0, (k / 6) as f64 / 5.0, format!("l{k}"))).collect();
    let design = SurveyDesign::replicated(locs, 3).unwrap();
    let truth = ModelParams::new(0.0, vec![], 1.0, 0.5, 0.3).unwrap();
    let cont = simulate_survey(&design, &truth, 17).unwrap();
    let bin = dichotomize(&cont, &Thresholds::Scalar(0.2)).unwrap();
    let settings = LatentIntegrationSettings::with_mode(IntegrationMode::Ep);
    let lin_fit = fit_linear(&cont, &default_linear_init(&cont).unwrap(), &LinearFitOptions { threshold: Some(PrevalenceThreshold::Common(0.2)), skip_info: true, ..Default::default() }).unwrap();
    let bin_fit = fit_binomial(&bin, &default_binomial_init(&bin).unwrap(), &settings, &BinomialFitOptions { skip_info: true, ..Default::default() }).unwrap();
    assert!(lin_fit.converged && bin_fit.converged);
    let grid = targets();
    let opts = PredictionOptions { n_cond_samples: 250, seed: 4, exceedance_thresholds: vec![0.3], ..Default::default() };
    for (fit, ds) in [(&lin_fit, &cont), (&bin_fit, &bin)] {
        let out = predict_prevalence(fit, ds, &grid, &[], &settings, &opts).unwrap();
        let (m, c) = LatentField::from_fit(fit, ds, &settings).unwrap().at(&grid).unwrap();
        let mu = profile_mean(fit.prevalence.as_ref().unwrap(), &[]).unwrap();
        let s = draw_prevalence(mu, &m, &c, 250, 4, 0);
        for j in 0..grid.len() {
            let mean = (0..250).map(|r| s[(r, j)]).sum::<f64>() / 250.0;
            assert_eq!(out.prevalence_mean[j], mean);
        }
        assert_eq!(out.exceedance[0], exceedance_prob(&s, 0.3).unwrap());
    }
}
