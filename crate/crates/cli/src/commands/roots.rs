//! `roots`: exact characteristic roots next to the perturbative
//! approximations, with the relative error of each pairing.

use lambda_shelve::{approx_roots, characteristic_roots, equal_detuning_roots, CoreError};

use super::Ctx;
use crate::output::{emit, Cell, Table};
use crate::{AppError, Outcome};

pub fn run(ctx: &Ctx) -> Result<Outcome, AppError> {
    ctx.reject_plot("roots")?;
    let p = &ctx.cfg.params;
    let exact = characteristic_roots(p).as_array();

    let approx = if p.omega1() == 0.0 && p.omega2() == 0.0 {
        // Uncoupled levels: the exact roots are already elementary, so a
        // perturbative column would only restate them.
        eprintln!(
            "note: both drives are off; the exact roots are closed-form and \
             the approximate columns are left empty"
        );
        None
    } else {
        match approx_roots(p) {
            Ok(ap) => {
                if !ap.in_regime {
                    eprintln!(
                        "note: parameters are outside the scale-separated regime; \
                     the approximate roots carry no accuracy guarantee"
                    );
                }
                Some(ap.roots.as_array())
            }
            Err(CoreError::EqualDetunings { .. }) => {
                eprintln!(
                    "note: equal detunings; the approximate columns hold the \
                 equal-detuning closed form instead of the perturbative one"
                );
                Some(equal_detuning_roots(p)?.as_array())
            }
            Err(CoreError::NumericalFailure { .. }) => {
                eprintln!(
                    "note: the perturbative formulas are singular for these \
                 parameters; approximate columns left empty"
                );
                None
            }
            Err(e) => return Err(e.into()),
        }
    };

    let mut table = Table::new(vec![
        "root_index",
        "re_exact",
        "im_exact",
        "re_approx",
        "im_approx",
        "rel_error",
    ]);
    let mut used = [false; 3];
    for (i, e) in exact.iter().enumerate() {
        let mut row = vec![
            Cell::Int(i as u64 + 1),
            Cell::Float(e.re),
            Cell::Float(e.im),
        ];
        match &approx {
            Some(ap) => {
                // Pair greedily with the nearest unused approximate root.
                let mut best: Option<(usize, f64)> = None;
                for (j, a) in ap.iter().enumerate() {
                    if used[j] {
                        continue;
                    }
                    let d = (a - e).norm();
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((j, d));
                    }
                }
                let (j, d) = best.expect("three approximate roots");
                used[j] = true;
                let rel = if d == 0.0 {
                    0.0
                } else {
                    d / e.norm().max(f64::MIN_POSITIVE)
                };
                row.extend([
                    Cell::Float(ap[j].re),
                    Cell::Float(ap[j].im),
                    Cell::Float(rel),
                ]);
            }
            None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
        }
        table.push(row);
    }
    emit(&table.render(ctx.format), ctx.out.as_deref())?;
    Ok(Outcome::Clean)
}
