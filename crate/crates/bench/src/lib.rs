//! Fixtures shared by the benchmarks.

use boussinesq::soliton::soliton_sum;
use boussinesq::{FieldState, Grid, SolitonFamily};

/// Two-soliton state at `t = 0` on the default grid for `horizon`.
pub fn two_soliton_state(horizon: f64) -> (SolitonFamily, FieldState) {
    let f = SolitonFamily::new(1.0, &[(-0.5, -10.0), (0.5, 10.0)]).expect("valid family");
    let g: Grid = f.default_grid(horizon).expect("grid");
    let s = soliton_sum(&f, &g, 0.0).expect("sum");
    (f, s)
}
