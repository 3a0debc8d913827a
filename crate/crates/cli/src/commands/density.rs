//! `density`: survival probabilities and per-channel click densities from
//! both lower levels on a linear or logarithmic time grid.

use lambda_shelve::{evolve_analytic_or_ode, AnalyticPropagator, Channel, Level, SurvivalCurve};

use super::Ctx;
use crate::config::GridSpacing;
use crate::output::{emit, Cell, Table};
use crate::svg::{line_chart, Series};
use crate::{AppError, Outcome};

/// `grid_points` values from `t_min` to `t_max` inclusive, spaced either
/// evenly or geometrically.
fn time_grid(t_min: f64, t_max: f64, n: usize, spacing: GridSpacing) -> Vec<f64> {
    let fractions = (0..n).map(|i| i as f64 / (n - 1) as f64);
    match spacing {
        GridSpacing::Linear => fractions.map(|f| t_min + (t_max - t_min) * f).collect(),
        GridSpacing::Log => {
            let (lo, hi) = (t_min.ln(), t_max.ln());
            fractions.map(|f| (lo + (hi - lo) * f).exp()).collect()
        }
    }
}

pub fn run(ctx: &Ctx) -> Result<Outcome, AppError> {
    let p = &ctx.cfg.params;
    let grid = time_grid(
        ctx.cfg.t_min,
        ctx.cfg.t_max,
        ctx.cfg.grid_points,
        ctx.cfg.grid,
    );

    // One root decomposition serves the whole grid; degenerate parameters
    // fall back to integrating each point from scratch.
    let curves = AnalyticPropagator::new(p).ok().map(|prop| {
        (
            SurvivalCurve::from_propagator(p, &prop, Level::One),
            SurvivalCurve::from_propagator(p, &prop, Level::Two),
        )
    });

    let mut table = Table::new(vec![
        "t",
        "p_survive_1",
        "p_survive_2",
        "w_blue_1",
        "w_red_1",
        "w_blue_2",
        "w_red_2",
    ]);
    let n = grid.len();
    let mut survive = (Vec::with_capacity(n), Vec::with_capacity(n));
    for &t in &grid {
        let (s1, s2, a0_sq_1, a0_sq_2) = match &curves {
            Some((one, two)) => (
                one.survival(t),
                two.survival(t),
                one.amplitude0(t).norm_sqr(),
                two.amplitude0(t).norm_sqr(),
            ),
            None => {
                let one = evolve_analytic_or_ode(p, Level::One, t)?;
                let two = evolve_analytic_or_ode(p, Level::Two, t)?;
                (
                    one.norm_sqr().clamp(0.0, 1.0),
                    two.norm_sqr().clamp(0.0, 1.0),
                    one.as_array()[0].norm_sqr(),
                    two.as_array()[0].norm_sqr(),
                )
            }
        };
        let g1 = p.gamma_of(Channel::Blue);
        let g2 = p.gamma_of(Channel::Red);
        table.push(vec![
            Cell::Float(t),
            Cell::Float(s1),
            Cell::Float(s2),
            Cell::Float(g1 * a0_sq_1),
            Cell::Float(g2 * a0_sq_1),
            Cell::Float(g1 * a0_sq_2),
            Cell::Float(g2 * a0_sq_2),
        ]);
        survive.0.push((t, s1));
        survive.1.push((t, s2));
    }

    if let Some(path) = &ctx.plot {
        // Charts use a log time axis whenever the grid allows it.
        let log_x = grid.iter().all(|&t| t > 0.0);
        let chart = line_chart(
            "no-count survival probability",
            "t",
            "probability",
            &[
                Series {
                    label: "from level 1".into(),
                    points: survive.0,
                },
                Series {
                    label: "from level 2".into(),
                    points: survive.1,
                },
            ],
            log_x,
            false,
        );
        std::fs::write(path, chart)?;
        eprintln!("wrote chart to {}", path.display());
    }
    emit(&table.render(ctx.format), ctx.out.as_deref())?;
    Ok(Outcome::Clean)
}
