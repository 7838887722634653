//! Invariant suites, one per library area. Every check reports the measured
//! quantity and the limit it is held to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use stein_core::concentration::{concentration_lemma_check, identity_check, k_function};
use stein_core::dist::{
    convolve_bernoulli, convolve_power, kolmogorov_distance_to_normal, poisson_pmf, tv_distance,
    DEFAULT_TRUNCATION_EPS,
};
use stein_core::exchangeable::{
    antisymmetry_identity_check, coordinate_resample_pair, pair_bound, regression_check,
    remainder_identity_check, PairMode,
};
use stein_core::generator::{
    immigration_death_generator, poisson_equation_residual, recurrent_potential, solve_poisson_equation,
    stationarity_check, stein_identity_from_generator, truncated_immigration_death, two_state_chain,
};
use stein_core::point_process::{
    bernoulli_process_law, independent_identity_check, poisson_process_tv, process_bound,
    solve_process_stein, ConfigSpace,
};
use stein_core::stein_normal::{finite_difference_residual, solve_stein_normal, DensitySpec, Grid};
use stein_core::stein_poisson::{
    independent_bound, lecam_bound, magic_factor_bounds, poisson_op_apply, solve_stein_poisson,
};
use stein_core::{FiniteRv, Polynomial, Result, TestFunction};

use crate::config::SweepConfig;
use crate::table::{Cell, Row, Table};

pub const COLUMNS: [&str; 5] = ["suite", "check", "measured", "limit", "passed"];

type Suite = fn(&SweepConfig, &mut ChaCha8Rng) -> Result<Vec<Row>>;

pub const SUITES: [(&str, Suite); 9] = [
    ("poisson_certification", poisson_certification),
    ("stein_residuals", stein_residuals),
    ("magic_factors", magic_factors),
    ("exchangeable_pairs", exchangeable_pairs),
    ("concentration", concentration),
    ("generator_method", generator_method),
    ("point_process", point_process),
    ("berry_esseen_scaling", berry_esseen_scaling),
    ("cli_plumbing", cli_plumbing),
];

pub fn run_verify(cfg: &SweepConfig) -> Table {
    let mut t = Table::new("verify", COLUMNS.to_vec());
    let per_suite: Vec<Vec<Row>> = SUITES
        .par_iter()
        .enumerate()
        .map(|(k, (name, suite))| {
            // Each suite draws from its own stream so the pool cannot reorder draws.
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            suite(cfg, &mut rng).unwrap_or_else(|e| {
                let mut r = Row::new(vec![(*name).into(), "suite_error".into(), e.to_string().into(), Cell::Empty, false.into()]);
                r.failed = true;
                vec![r]
            })
        })
        .collect();
    let names = SUITES.iter().map(|s| s.0);
    for (name, rows) in names.zip(per_suite) {
        t.rows.extend(rows.into_iter().map(|mut r| {
            r.cells[0] = name.into();
            r
        }));
    }
    t
}

fn row(check: String, measured: f64, limit: f64, passed: bool) -> Row {
    let mut r = Row::new(vec![Cell::Empty, check.into(), measured.into(), limit.into(), passed.into()]);
    r.failed = !passed;
    r
}

fn at_most(check: impl Into<String>, measured: f64, limit: f64) -> Row {
    row(check.into(), measured, limit, measured <= limit)
}

fn at_least(check: impl Into<String>, measured: f64, limit: f64) -> Row {
    row(check.into(), measured, limit, measured >= limit)
}

fn above(check: impl Into<String>, measured: f64, limit: f64) -> Row {
    row(check.into(), measured, limit, measured > limit)
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

const CERT_N: [usize; 4] = [10, 50, 100, 200];
const CERT_P: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

fn poisson_certification(cfg: &SweepConfig, _: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut min_margin = f64::INFINITY;
    let mut factor_gap = 0.0f64;
    for n in CERT_N {
        for p in CERT_P {
            let probs = vec![p; n];
            let lambda = n as f64 * p;
            let exact = tv_distance(&convolve_bernoulli(&probs)?, &poisson_pmf(lambda, cfg.truncation_eps)?);
            let bound = independent_bound(&probs)?.bound;
            min_margin = min_margin.min(bound * cfg.bound_scale - exact.hi);
            factor_gap = factor_gap.max((8.0 * bound - lecam_bound(&probs)?).abs());
        }
    }
    let single = tv_distance(&convolve_bernoulli(&[0.1])?, &poisson_pmf(0.1, cfg.truncation_eps)?);
    Ok(vec![
        above("min_margin_over_grid", min_margin, 0.0),
        at_most("single_site_anchor_error", (single.mid() - 0.009_516_3).abs(), 1e-6),
        at_most("factor_eight_gap", factor_gap, 0.0),
    ])
}


fn poisson_window(lambda: f64) -> Result<usize> {
    Ok(poisson_pmf(lambda, DEFAULT_TRUNCATION_EPS)?.end() as usize + 1)
}

fn poisson_residual(h: &[f64], lambda: f64) -> Result<f64> {
    let sol = solve_stein_poisson(h, lambda)?;
    let pmf = poisson_pmf(lambda, 1e-16)?;
    let mean: f64 = pmf.iter().map(|(k, q)| q * h[(k as usize).min(h.len() - 1)]).sum();
    (0..h.len() - 1)
        .map(|w| Ok((poisson_op_apply(&sol, w)? - (h[w] - mean)).abs()))
        .try_fold(0.0f64, |m, r: Result<f64>| Ok(m.max(r?)))
}

fn stein_residuals(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.lambda {
        let len = poisson_window(lambda)?;
        let mut worst = 0.0f64;
        for _ in 0..500 {
            let h: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            worst = worst.max(poisson_residual(&h, lambda)?);
        }
        rows.push(at_most(format!("poisson_residual lambda={lambda}"), worst, 1e-12));
    }
    let family = [
        TestFunction::half_line(-1.0),
        TestFunction::half_line(0.0),
        TestFunction::half_line(1.5),
        TestFunction::new(f64::sin),
        TestFunction::new(|x: f64| x.abs().min(1.5)).with_jumps(vec![-1.5, 0.0, 1.5]),
    ];
    let normal = DensitySpec::standard_normal();
    let mut worst = 0.0f64;
    for h in &family {
        let sol = solve_stein_normal(h, &normal, &Grid::standard())?;
        worst = worst.max(finite_difference_residual(&sol).max_abs);
    }
    rows.push(at_most("normal_grid_residual", worst, 1e-8));
    Ok(rows)
}

fn magic_factors(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &lambda in &cfg.lambda {
        let len = poisson_window(lambda)?;
        let (diff_bound, sup_bound) = magic_factor_bounds(lambda)?;
        let (mut diff, mut sup) = (0.0f64, 0.0f64);
        for k in 0..1000 {
            // Half the draws are sign vectors, the extreme points of the unit ball.
            let h: Vec<f64> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random_range(-1.0..1.0);
                    if k % 2 == 0 { u.signum() } else { u }
                })
                .collect();
            let sol = solve_stein_poisson(&h, lambda)?;
            diff = diff.max(sol.diff_norm);
            sup = sup.max(sol.sup_norm);
        }
        rows.push(at_most(format!("diff_norm lambda={lambda}"), diff, diff_bound));
        rows.push(at_most(format!("sup_norm lambda={lambda}"), sup, sup_bound));
    }
    Ok(rows)
}

/// A centred two- or three-point variable.
fn centred_atoms(rng: &mut ChaCha8Rng) -> Result<FiniteRv> {
    let a: f64 = rng.random_range(-1.0..-0.1);
    let b: f64 = rng.random_range(0.1..1.0);
    if rng.random_bool(0.5) {
        return FiniteRv::new(vec![(a, b / (b - a)), (b, -a / (b - a))]);
    }
    let c: f64 = rng.random_range(a..b);
    let q = 0.2;
    let pa = (b * (1.0 - q) + q * c) / (b - a);
    FiniteRv::new(vec![(a, pa), (b, 1.0 - q - pa), (c, q)])
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> Polynomial {
    let d = rng.random_range(0..=max_degree);
    Polynomial::new((0..=d).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn exchangeable_pairs(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let (mut dev, mut lam_err, mut anti, mut rem) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut min_margin = f64::INFINITY;
    for n in 2..=8usize {
        let rvs = (0..n).map(|_| centred_atoms(rng)).collect::<Result<Vec<_>>>()?;
        let pl = coordinate_resample_pair(&rvs, PairMode::Exact)?;
        let r = regression_check(&pl)?;
        dev = dev.max(r.max_dev);
        lam_err = lam_err.max((r.lambda_hat - 1.0 / n as f64).abs());
        for _ in 0..20 {
            let (i, j) = (rng.random_range(0..4), rng.random_range(0..4));
            let (c, d): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let g = move |w: f64, v: f64| w.powi(i) * v.powi(j) + (c * w + d * v).sin();
            anti = anti.max(antisymmetry_identity_check(&pl, |w, v| g(w, v) - g(v, w))?.abs());
        }
        for degree in 0..=5 {
            let mut coeffs = vec![0.0; degree + 1];
            coeffs.iter_mut().for_each(|c| *c = rng.random_range(-1.0..1.0));
            rem = rem.max(remainder_identity_check(&pl, &Polynomial::new(coeffs))?.residual);
        }
        min_margin = min_margin.min(pair_bound(&pl)?.bound * cfg.bound_scale - pair_bound(&pl)?.exact.hi);
    }
    let anchor = pair_bound(&coordinate_resample_pair(&vec![FiniteRv::symmetric_sign(0.1); 100], PairMode::Exact)?)?;
    min_margin = min_margin.min(anchor.bound * cfg.bound_scale - anchor.exact.hi);
    Ok(vec![
        at_most("regression_deviation", dev, 1e-12),
        at_most("lambda_minus_inverse_n", lam_err, 1e-12),
        at_most("antisymmetric_expectation", anti, 1e-12),
        at_most("remainder_identity_residual", rem, 1e-10),
        at_least("min_pair_margin", min_margin, 0.0),
        at_most("anchor_bound_error", (anchor.bound - 0.3995).abs(), 1e-3),
        at_most("anchor_exact_error", (anchor.exact.hi - 0.0398).abs(), 1e-4),
    ])
}

/// Centred population with 2 to 5 atoms, scaled to variance `1/n`.
fn random_population(rng: &mut ChaCha8Rng, n: usize) -> Result<FiniteRv> {
    let k = rng.random_range(2..=5);
    let raw: Vec<(f64, f64)> = (0..k)
        .map(|i| (rng.random_range(-3.0..3.0) + i as f64 * 1e-3, rng.random_range(0.05..1.0)))
        .collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let mean: f64 = raw.iter().map(|a| a.0 * a.1).sum::<f64>() / total;
    let centred = FiniteRv::new(raw.iter().map(|&(v, w)| (v - mean, w / total)).collect())?;
    Ok(centred.scaled((centred.moment(2) * n as f64).sqrt().recip()))
}

fn concentration(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let (mut mass, mut moment, mut identity) = (0.0f64, 0.0f64, 0.0f64);
    let mut half = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let x = random_population(rng, n)?;
        let k = k_function(&x, n)?;
        mass = mass.max((k.integral() - 1.0).abs());
        moment = moment.max((k.abs_first_moment() - k.beta() / (2.0 * (n as f64).sqrt())).abs());
        half = half.min(k.mass_between(f64::NEG_INFINITY, k.beta() / (n as f64).sqrt()));
        let f = random_poly(rng, 4);
        identity = identity.max(identity_check(&x, n, |w| f.eval(w))?.residual);
    }
    let mut violations = 0usize;
    for _ in 0..20 {
        let n = rng.random_range(2..=10);
        let x = random_population(rng, n)?;
        for _ in 0..100 {
            let a: f64 = rng.random_range(-2.0..2.0);
            let width: f64 = rng.random_range(1e-3..1.5);
            let cert = concentration_lemma_check(&x, n, a, a + width)?;
            if !(cert.bound * cfg.bound_scale >= cert.exact.hi && cert.checks.iter().all(|c| c.holds)) {
                violations += 1;
            }
        }
    }
    Ok(vec![
        at_most("k_integral_error", mass, 1e-12),
        at_most("k_first_moment_error", moment, 1e-12),
        at_least("min_half_mass", half, 0.5 - 1e-12),
        at_most("identity_residual", identity, 1e-10),
        at_most("lemma_violations", violations as f64, 0.0),
    ])
}

fn standardised(rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<FiniteRv>> {
    let raw = (0..n).map(|_| centred_atoms(rng)).collect::<Result<Vec<_>>>()?;
    let var: f64 = raw.iter().map(|x| x.variance()).sum();
    Ok(raw.iter().map(|x| x.scaled(var.sqrt().recip())).collect())
}

fn generator_method(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut identity = 0.0f64;
    for n in 1..=5 {
        let rvs = standardised(rng, n)?;
        for _ in 0..4 {
            identity = identity.max(stein_identity_from_generator(&rvs, &random_poly(rng, 5))?.residual);
        }
    }
    let (mut solve, mut corr, mut stat) = (0.0f64, 0.0f64, 0.0f64);
    for &lambda in &cfg.lambda {
        let n = 30 + (4.0 * lambda) as usize;
        let q = immigration_death_generator(lambda, n)?;
        let h: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = solve_poisson_equation(&q, &h)?;
        solve = solve.max(poisson_equation_residual(&q, &f, &h)?);
        let g = recurrent_potential(&q, &h)?;
        let direct = solve_stein_poisson(&h, lambda)?;
        corr = corr.max(max_of((1..n.min(direct.window()).min(25)).map(|w| (g[w] - g[w - 1] - direct.values[w]).abs())));
        let test: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        stat = stat.max(stationarity_check(&q, &test)?);
    }
    let two = two_state_chain(1.0, 1.0)?;
    let f = solve_poisson_equation(&two, &[1.0, 0.0])?;
    let anchor = (f[0] - 0.25).abs().max((f[1] + 0.25).abs());
    Ok(vec![
        at_most("stein_identity_residual", identity, 1e-10),
        at_most("poisson_equation_residual", solve, 1e-10),
        at_most("two_state_anchor_error", anchor, 1e-14),
        at_most("potential_difference_vs_solver", corr, 1e-9),
        at_most("stationarity", stat, 1e-10),
    ])
}

fn point_process(cfg: &SweepConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut identity = 0.0f64;
    for n in 1..=6 {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let space = ConfigSpace::uniform(n, 2)?;
        let table: Vec<f64> = (0..space.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        identity = identity.max(independent_identity_check(&p, |e| table[space.index(e).unwrap_or(0)])?.residual);
    }
    let mut min_margin = f64::INFINITY;
    for n in [2, 4, 6] {
        for p in [0.05, 0.1, 0.2] {
            let cert = process_bound(&vec![p; n])?;
            min_margin = min_margin.min(cert.bound * cfg.bound_scale - cert.exact.hi);
        }
    }
    let mut reduction = 0.0f64;
    for p in [0.05, 0.1, 0.3, 0.7] {
        let process = poisson_process_tv(&bernoulli_process_law(&[p])?, &[p])?;
        let scalar = tv_distance(&convolve_bernoulli(&[p])?, &poisson_pmf(p, 1e-15)?);
        reduction = reduction.max((process.mid() - scalar.mid()).abs());
        reduction = reduction.max((process_bound(&[p])?.bound - independent_bound(&[p])?.bound).abs());
    }
    let h: Vec<f64> = (0..=20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sol = solve_process_stein(|e| h[e[0] as usize], &[1.3], 20)?;
    let chain = recurrent_potential(&truncated_immigration_death(1.3, 20)?, &h)?;
    reduction = reduction.max(max_of(sol.values().iter().zip(&chain).map(|(a, b)| (a - b).abs())));
    Ok(vec![
        at_most("identity_residual", identity, 1e-12),
        at_least("min_process_margin", min_margin, 0.0),
        at_most("single_site_reduction", reduction, 1e-10),
        at_most("process_solve_residual", sol.interior_residual(), 1e-8),
    ])
}

fn berry_esseen_scaling(_: &SweepConfig, _: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let scaled = [25usize, 100, 400]
        .iter()
        .map(|&n| {
            let x = FiniteRv::symmetric_sign((n as f64).sqrt().recip());
            let beta = k_function(&x, n)?.beta();
            Ok(kolmogorov_distance_to_normal(&convolve_power(&x, n)?) * (n as f64).sqrt() / beta)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = scaled.iter().sum::<f64>() / 3.0;
    let spread = max_of(scaled.iter().map(|s| (s - mean).abs() / mean));
    Ok(vec![at_most("relative_spread_of_scaled_distance", spread, 0.2)])
}

fn cli_plumbing(cfg: &SweepConfig, _: &mut ChaCha8Rng) -> Result<Vec<Row>> {
    let mut rejected = cfg.clone();
    rejected.truncation_eps = 1e-3;
    Ok(vec![at_most(
        "loose_truncation_accepted",
        rejected.validate().is_ok() as u8 as f64,
        0.0,
    )])
}
