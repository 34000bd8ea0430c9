//! Fixtures shared by the benchmarks.

use ctecs::circuit::{random_family_instance, InstanceParams};
use ctecs::fourier::build_low_degree_table;
use ctecs::{seed, CoefficientSource, CtEcsDecomposition, Family, FourierTable};

pub const MASTER: u64 = 7;

pub fn instance(family: Family, n: usize) -> CtEcsDecomposition {
    let mut rng = seed::stream(MASTER, "bench", n as u64);
    random_family_instance(family, n, &InstanceParams::default(), &mut rng).expect("instance")
}

/// Exact degree-`c` table of a seeded IQP instance, attenuated at rate `eps`.
pub fn damped_table(n: usize, c: usize, eps: f64) -> FourierTable {
    let d = instance(Family::Iqp, n);
    let (table, _) = build_low_degree_table(&d, c, &CoefficientSource::exact(), 1 << 20).expect("table");
    table.attenuate(eps).expect("attenuate")
}
