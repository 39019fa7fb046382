//! Family diagnostics and the tangency identities of the lifted vector fields.
//!
//! `cargo run --release --example boundary_identities`

use std::collections::BTreeMap;

use bergcurv::family::{family_by_name, v_field_residual, validate_family, FAMILY_NAMES};
use bergcurv::jets::Dims;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bergcurv::error::Result<()> {
    let d = Dims::new(1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in FAMILY_NAMES {
        let fam = family_by_name(name, d, &BTreeMap::new())?;
        let rep = validate_family(&fam, 200, 1);
        let t = fam.sample_t(&mut rng);
        let v = v_field_residual(&fam, &t, &fam.boundary_samples(&t, 200, 3)?)?;
        println!(
            "{name:<18} valid {:<5} strict {:<5} min H0 {:+.3e}  |V(ρ)| {:.1e}  |V̄V(ρ)| {:.1e}",
            rep.valid(),
            rep.strict(),
            rep.h0_min,
            v.v,
            v.vv
        );
    }
    Ok(())
}
