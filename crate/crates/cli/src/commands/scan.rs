//! `scan`: sweep one parameter and tabulate the slow weight, the two time
//! scales of the waiting-time split, and the total emission probability.

use clap::{Args, ValueEnum};

use lambda_shelve::{emission_probability, short_long_split, SystemParams};

use super::Ctx;
use crate::output::{emit, Cell, Table};
use crate::svg::{line_chart, Series};
use crate::{AppError, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanParam {
    Omega1,
    Omega2,
    Delta1,
    Delta2,
    Gamma1,
    Gamma2,
}

impl ScanParam {
    fn name(self) -> &'static str {
        match self {
            ScanParam::Omega1 => "omega1",
            ScanParam::Omega2 => "omega2",
            ScanParam::Delta1 => "delta1",
            ScanParam::Delta2 => "delta2",
            ScanParam::Gamma1 => "gamma1",
            ScanParam::Gamma2 => "gamma2",
        }
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Parameter to sweep
    #[arg(long, value_enum)]
    pub param: ScanParam,
    /// First sweep value
    #[arg(long, allow_negative_numbers = true)]
    pub start: f64,
    /// Last sweep value (inclusive)
    #[arg(long, allow_negative_numbers = true)]
    pub stop: f64,
    /// Number of sweep points
    #[arg(long)]
    pub steps: usize,
    /// Geometric spacing (endpoints must be positive)
    #[arg(long)]
    pub log: bool,
}

fn with_value(p: &SystemParams, which: ScanParam, v: f64) -> Result<SystemParams, AppError> {
    let mut fields = [
        p.omega1(),
        p.omega2(),
        p.delta1(),
        p.delta2(),
        p.gamma1(),
        p.gamma2(),
    ];
    fields[which as usize] = v;
    SystemParams::new(
        fields[0], fields[1], fields[2], fields[3], fields[4], fields[5],
    )
    .map_err(|e| AppError::usage(format!("sweep value {v} for {}: {e}", which.name())))
}

pub fn run(ctx: &Ctx, args: &ScanArgs) -> Result<Outcome, AppError> {
    if args.steps < 2 {
        return Err(AppError::usage("scan needs at least two steps"));
    }
    if !(args.start.is_finite() && args.stop.is_finite()) {
        return Err(AppError::usage("scan endpoints must be finite"));
    }
    if args.log && (args.start <= 0.0 || args.stop <= 0.0) {
        return Err(AppError::usage("--log requires positive endpoints"));
    }

    let values: Vec<f64> = (0..args.steps)
        .map(|i| {
            let f = i as f64 / (args.steps - 1) as f64;
            if args.log {
                args.start * (args.stop / args.start).powf(f)
            } else {
                args.start + f * (args.stop - args.start)
            }
        })
        .collect();

    let mut table = Table::new(vec![
        "param",
        "value",
        "pi",
        "t_short",
        "t_long",
        "emission_probability",
    ]);
    let mut pi_points = Vec::new();
    let mut unsplit = 0usize;
    for &v in &values {
        let params = with_value(&ctx.cfg.params, args.param, v)?;
        let split = short_long_split(&params, ctx.cfg.initial).ok();
        let emission = emission_probability(&params, ctx.cfg.initial).ok();
        if split.is_none() {
            unsplit += 1;
        }
        if let Some(s) = &split {
            pi_points.push((v, s.pi));
        }
        let opt = |x: Option<f64>| x.map_or(Cell::Empty, Cell::Float);
        table.push(vec![
            Cell::Text(args.param.name().to_string()),
            Cell::Float(v),
            opt(split.as_ref().map(|s| s.pi)),
            opt(split.as_ref().map(|s| s.t_short)),
            opt(split.as_ref().map(|s| s.t_long)),
            opt(emission),
        ]);
    }
    if unsplit > 0 {
        eprintln!(
            "note: {unsplit} of {} sweep points have no short/long split \
             (equal detunings or a non-decaying slow root); cells left empty",
            values.len()
        );
    }

    if let Some(path) = &ctx.plot {
        // Charts use a log time axis whenever the sweep values allow it.
        let log_x = values.iter().all(|&v| v > 0.0);
        let positive = pi_points.iter().all(|&(_, y)| y > 0.0);
        let spread = match (
            pi_points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            pi_points.iter().map(|p| p.1).fold(0.0f64, f64::max),
        ) {
            (lo, hi) if lo > 0.0 => hi / lo,
            _ => 1.0,
        };
        let chart = line_chart(
            "slow-component weight",
            args.param.name(),
            "pi",
            &[Series {
                label: "pi".into(),
                points: pi_points,
            }],
            log_x,
            positive && spread > 50.0,
        );
        std::fs::write(path, chart)?;
        eprintln!("wrote chart to {}", path.display());
    }
    emit(&table.render(ctx.format), ctx.out.as_deref())?;
    Ok(Outcome::Clean)
}
