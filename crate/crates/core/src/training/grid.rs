//! Learning-rate grid search over the `{1,3,5,7,9} × 10^e` ladder, extended
//! past whichever border holds the best value until the optimum is interior.

use crate::error::{Error, Result};

/// Initial finetuning grid.
pub const FINETUNE_GRID: [f64; 5] = [1e-5, 3e-5, 5e-5, 7e-5, 9e-5];
/// Initial masking grid.
pub const MASK_GRID: [f64; 7] = [7e-5, 1e-4, 3e-4, 5e-4, 7e-4, 9e-4, 1e-3];

const MANTISSAS: [u32; 5] = [1, 3, 5, 7, 9];

fn ladder_position(lr: f64) -> Result<(u32, i32)> {
    let e = lr.log10().floor() as i32;
    let m = (lr / 10f64.powi(e)).round() as u32;
    // log10 can land just below an integer for exact powers of ten.
    let (m, e) = if m == 10 { (1, e + 1) } else { (m, e) };
    if !MANTISSAS.contains(&m) {
        return Err(Error::Config(format!("{lr} is not on the 1/3/5/7/9 ladder")));
    }
    Ok((m, e))
}

fn ladder_value(m: u32, e: i32) -> f64 {
    format!("{m}e{e}").parse().expect("valid literal")
}

/// The next value above `lr` on the ladder.
pub fn ladder_up(lr: f64) -> Result<f64> {
    let (m, e) = ladder_position(lr)?;
    let i = MANTISSAS.iter().position(|&x| x == m).expect("on ladder");
    Ok(match MANTISSAS.get(i + 1) {
        Some(&next) => ladder_value(next, e),
        None => ladder_value(1, e + 1),
    })
}

/// The next value below `lr` on the ladder.
pub fn ladder_down(lr: f64) -> Result<f64> {
    let (m, e) = ladder_position(lr)?;
    let i = MANTISSAS.iter().position(|&x| x == m).expect("on ladder");
    Ok(if i == 0 {
        ladder_value(9, e - 1)
    } else {
        ladder_value(MANTISSAS[i - 1], e)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best_lr: f64,
    pub best_metric: f64,
    /// `(lr, metric)` sorted by lr.
    pub table: Vec<(f64, f64)>,
    pub extensions: usize,
    /// True when the extension budget ran out with the best value still on a border.
    pub hit_limit: bool,
}

/// Evaluates `objective` (higher is better) on `grid`, extending the grid one
/// ladder step at a time in the direction of a border optimum. Ties go to the
/// smaller learning rate.
pub fn lr_grid_search(
    grid: &[f64],
    max_extensions: usize,
    mut objective: impl FnMut(f64) -> Result<f64>,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty learning-rate grid".into()));
    }
    let mut table: Vec<(f64, f64)> = Vec::new();
    for &lr in grid {
        table.push((lr, objective(lr)?));
    }
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut extensions = 0;
    loop {
        let best = best_index(&table);
        let at_low = best == 0 && table.len() > 1;
        let at_high = best == table.len() - 1;
        if !(at_low || at_high) || table.len() == 1 && extensions >= max_extensions {
            break;
        }
        if extensions >= max_extensions {
            let (best_lr, best_metric) = table[best];
            return Ok(GridResult {
                best_lr,
                best_metric,
                table,
                extensions,
                hit_limit: true,
            });
        }
        let lr = if at_high {
            ladder_up(table[table.len() - 1].0)?
        } else {
            ladder_down(table[0].0)?
        };
        let metric = objective(lr)?;
        if at_high {
            table.push((lr, metric));
        } else {
            table.insert(0, (lr, metric));
        }
        extensions += 1;
    }
    let (best_lr, best_metric) = table[best_index(&table)];
    Ok(GridResult {
        best_lr,
        best_metric,
        table,
        extensions,
        hit_limit: false,
    })
}

fn best_index(table: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, &(_, m)) in table.iter().enumerate() {
        if m > table[best].1 {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_steps() {
        assert_eq!(ladder_up(9e-5).unwrap(), 1e-4);
        assert_eq!(ladder_up(1e-4).unwrap(), 3e-4);
        assert_eq!(ladder_down(1e-5).unwrap(), 9e-6);
        assert_eq!(ladder_down(7e-5).unwrap(), 5e-5);
        assert_eq!(ladder_up(1e-3).unwrap(), 3e-3);
        assert!(ladder_up(2e-5).is_err());
    }

    #[test]
    fn interior_optimum_needs_no_extension() {
        let r = lr_grid_search(&FINETUNE_GRID, 10, |lr| Ok(-(lr - 5e-5).abs())).unwrap();
        assert_eq!(r.best_lr, 5e-5);
        assert_eq!(r.extensions, 0);
        assert_eq!(r.table.len(), 5);
    }

    #[test]
    fn monotone_objective_extends_upward_until_interior() {
        // Peak at 3e-4: the grid must climb past 9e-5, 1e-4, 3e-4 to 5e-4.
        let r = lr_grid_search(&FINETUNE_GRID, 10, |lr| Ok(-(lr.ln() - 3e-4f64.ln()).abs())).unwrap();
        assert_eq!(r.best_lr, 3e-4);
        assert_eq!(r.extensions, 3);
        assert_eq!(r.table.last().unwrap().0, 5e-4);
        assert!(!r.hit_limit);
    }

    #[test]
    fn extends_downward_too() {
        let r = lr_grid_search(&FINETUNE_GRID, 10, |lr| Ok(-lr)).unwrap();
        assert!(r.hit_limit);
        assert_eq!(
            r.table[0].0,
            ladder_down(FINETUNE_GRID[0])
                .map(|x| {
                    let mut v = x;
                    for _ in 1..10 {
                        v = ladder_down(v).unwrap();
                    }
                    v
                })
                .unwrap()
        );
    }
}
