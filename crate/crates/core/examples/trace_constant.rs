//! Boundary-to-interior trace constant of polynomials of bounded degree.
//!
//! `cargo run --release --example trace_constant`

use bergcurv::family::{egg, product_disk};
use bergcurv::jets::Dims;
use bergcurv::linalg::c;
use bergcurv::positivity::trace_constant;
use bergcurv::quadrature::Resolution;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let res = Resolution::default_for(1);
    let t = [c(0.0, 0.0)];
    for (label, fam) in [("disk R=1", product_disk(d, 1.0)), ("disk R=2", product_disk(d, 2.0)), ("egg", egg(d))] {
        let deltas: Vec<String> = (0..=6).map(|deg| trace_constant(&fam, &t, deg, res).map(|tc| format!("{:.6}", tc.delta))).collect::<Result<_, _>>()?;
        println!("{label:<9} δ_0..δ_6: {}", deltas.join(" "));
    }
    Ok(())
}
