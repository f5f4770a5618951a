//! Print the Hyperband bracket plan for a few settings of R and eta.

use mfes_hb::scheduler::{bracket_schedule, iteration_resource};
use mfes_hb::{Budget, HBParams};

fn main() -> mfes_hb::Result<()> {
    for (r, eta) in [(9.0, 3.0), (27.0, 3.0), (81.0, 3.0)] {
        let params = HBParams::new(r, eta, Budget::ResourceUnits(1.0));
        println!("R={r} eta={eta} levels {:?}", params.levels());
        for plan in bracket_schedule(&params)? {
            let rungs: Vec<String> = plan.rungs.iter().map(|g| format!("{}@{}", g.n, g.resource)).collect();
            println!("  s={} n1={:<3} {}", plan.s, plan.n1, rungs.join(" "));
        }
        println!("  one iteration uses {} units", iteration_resource(&params)?);
    }
    Ok(())
}
