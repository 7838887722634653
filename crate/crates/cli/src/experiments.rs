//! Certification sweeps and demos. Grid cells run in the rayon pool and are
//! collected in grid order, so the thread count never changes the output.

use rayon::prelude::*;

use stein_core::concentration::{concentration_lemma_check, k_function};
use stein_core::dist::{
    convolve_bernoulli, convolve_power, kolmogorov_distance_to_normal, poisson_pmf, tv_distance,
};
use stein_core::exchangeable::{coordinate_resample_pair, pair_bound, regression_check, PairMode};
use stein_core::point_process::process_bound;
use stein_core::stein_poisson::{independent_bound, lecam_bound};
use stein_core::{FiniteRv, Result};

use crate::config::{Experiment, SweepConfig};
use crate::table::{Cell, Row, Table};

/// Windows `[a, b]` used by the concentration demo.
pub const CONCENTRATION_WINDOWS: [(f64, f64); 3] = [(-0.1, 0.1), (0.0, 0.5), (-1.0, 1.0)];

pub fn run(cfg: &SweepConfig) -> Table {
    match cfg.experiment {
        Experiment::Verify => crate::verify::run_verify(cfg),
        Experiment::PoissonSweep => poisson_sweep(cfg),
        Experiment::NormalDemo => normal_demo(cfg),
        Experiment::PairDemo => pair_demo(cfg),
        Experiment::ProcessDemo => process_demo(cfg),
        Experiment::ConcentrationDemo => concentration_demo(cfg),
    }
}

fn grid(cfg: &SweepConfig) -> Vec<(usize, f64)> {
    cfg.n.iter().flat_map(|&n| cfg.p.iter().map(move |&p| (n, p))).collect()
}

fn rows<T: Sync>(cells: &[T], width: usize, f: impl Fn(&T) -> Result<Row> + Sync) -> Vec<Row> {
    cells
        .par_iter()
        .map(|c| f(c).unwrap_or_else(|e| Row::skip(&e, width)))
        .collect()
}

fn sign(n: usize) -> FiniteRv {
    FiniteRv::symmetric_sign((n as f64).sqrt().recip())
}

pub fn poisson_sweep(cfg: &SweepConfig) -> Table {
    let mut t = Table::new(
        "poisson_sweep",
        vec!["n", "p", "lambda", "exact_lo", "exact_hi", "stein_bound", "lecam_bound", "margin"],
    );
    let width = t.columns.len();
    t.rows = rows(&grid(cfg), width, |&(n, p)| {
        let probs = vec![p; n];
        let lambda = n as f64 * p;
        let exact = tv_distance(&convolve_bernoulli(&probs)?, &poisson_pmf(lambda, cfg.truncation_eps)?);
        let bound = independent_bound(&probs)?.bound * cfg.bound_scale;
        let lecam = lecam_bound(&probs).ok().map(|b| b * cfg.bound_scale);
        let margin = bound - exact.hi;
        Ok(Row::new(vec![
            n.into(),
            p.into(),
            lambda.into(),
            exact.lo.into(),
            exact.hi.into(),
            bound.into(),
            lecam.into(),
            margin.into(),
        ])
        .with_margin(margin))
    });
    t
}

pub fn normal_demo(cfg: &SweepConfig) -> Table {
    let mut t = Table::new(
        "normal_demo",
        vec![
            "n",
            "beta",
            "kolmogorov_exact",
            "scaled_kolmogorov",
            "pair_bound",
            "concentration_bound",
            "margin",
        ],
    );
    let width = t.columns.len();
    t.rows = rows(&cfg.n, width, |&n| {
        let x = sign(n);
        let beta = k_function(&x, n)?.beta();
        let exact = kolmogorov_distance_to_normal(&convolve_power(&x, n)?);
        let pair = pair_bound(&coordinate_resample_pair(&vec![x.clone(); n], PairMode::Exact)?)?;
        let step = (n as f64).sqrt().recip();
        let conc = concentration_lemma_check(&x, n, -step, step)?;
        let pair_b = pair.bound * cfg.bound_scale;
        let conc_b = conc.bound * cfg.bound_scale;
        let mut row = Row::new(vec![
            n.into(),
            beta.into(),
            exact.into(),
            (exact * (n as f64).sqrt() / beta).into(),
            pair_b.into(),
            conc_b.into(),
            (pair_b - pair.exact.hi).into(),
        ])
        .with_margin((pair_b - pair.exact.hi).min(conc_b - conc.exact.hi));
        row.failed = !conc.checks.iter().all(|c| c.holds);
        Ok(row)
    });
    let column = |j: usize| -> Vec<(f64, f64)> {
        t.rows
            .iter()
            .filter_map(|r| match (&r.cells[0], &r.cells[j]) {
                (Cell::Int(n), Cell::Num(y)) => Some((*n as f64, *y)),
                _ => None,
            })
            .collect()
    };
    t.series = vec![
        ("kolmogorov_exact", column(2)),
        ("pair_bound", column(4)),
        ("concentration_bound", column(5)),
    ];
    t
}

pub fn pair_demo(cfg: &SweepConfig) -> Table {
    let mut t = Table::new(
        "pair_demo",
        vec![
            "n",
            "lambda_hat",
            "regression_dev",
            "variance_term",
            "third_moment_term",
            "bound",
            "exact_kolmogorov",
            "margin",
        ],
    );
    let width = t.columns.len();
    t.rows = rows(&cfg.n, width, |&n| {
        let pl = coordinate_resample_pair(&vec![sign(n); n], PairMode::Exact)?;
        let reg = regression_check(&pl)?;
        let cert = pair_bound(&pl)?;
        let bound = cert.bound * cfg.bound_scale;
        let margin = bound - cert.exact.hi;
        Ok(Row::new(vec![
            n.into(),
            reg.lambda_hat.into(),
            reg.max_dev.into(),
            cert.component("variance_term").into(),
            cert.component("third_moment_term").into(),
            bound.into(),
            cert.exact.hi.into(),
            margin.into(),
        ])
        .with_margin(margin))
    });
    t
}

pub fn process_demo(cfg: &SweepConfig) -> Table {
    let mut t = Table::new(
        "process_demo",
        vec!["n", "p", "process_bound", "exact_lo", "exact_hi", "count_bound", "margin"],
    );
    let width = t.columns.len();
    t.rows = rows(&grid(cfg), width, |&(n, p)| {
        let probs = vec![p; n];
        let cert = process_bound(&probs)?;
        let bound = cert.bound * cfg.bound_scale;
        let lambda = n as f64 * p;
        let count_bound = if lambda > 0.0 { lambda.recip().min(1.0) * n as f64 * p * p } else { 0.0 };
        let margin = bound - cert.exact.hi;
        Ok(Row::new(vec![
            n.into(),
            p.into(),
            bound.into(),
            cert.exact.lo.into(),
            cert.exact.hi.into(),
            count_bound.into(),
            margin.into(),
        ])
        .with_margin(margin))
    });
    t
}

pub fn concentration_demo(cfg: &SweepConfig) -> Table {
    let mut t = Table::new(
        "concentration_demo",
        vec!["n", "a", "b", "beta", "exact", "bound", "margin", "chain_holds"],
    );
    let width = t.columns.len();
    let cells: Vec<(usize, f64, f64)> = cfg
        .n
        .iter()
        .flat_map(|&n| CONCENTRATION_WINDOWS.iter().map(move |&(a, b)| (n, a, b)))
        .collect();
    t.rows = rows(&cells, width, |&(n, a, b)| {
        let cert = concentration_lemma_check(&sign(n), n, a, b)?;
        let bound = cert.bound * cfg.bound_scale;
        let holds = cert.checks.iter().all(|c| c.holds);
        let mut row = Row::new(vec![
            n.into(),
            a.into(),
            b.into(),
            cert.component("beta").into(),
            cert.exact.hi.into(),
            bound.into(),
            (bound - cert.exact.hi).into(),
            holds.into(),
        ])
        .with_margin(bound - cert.exact.hi);
        row.failed = !holds;
        Ok(row)
    });
    t
}
