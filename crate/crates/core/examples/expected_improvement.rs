//! Expected improvement for a few Gaussian predictions against an incumbent.

use mfes_hb::acquisition::expected_improvement;

fn main() {
    let best = 0.0;
    println!("incumbent {best}");
    println!("{:>6} {:>6} {:>10}", "mean", "std", "EI");
    for mean in [-1.0, 0.0, 0.5, 2.0] {
        for std in [0.1, 0.5, 1.0] {
            println!("{mean:>6} {std:>6} {:>10.5}", expected_improvement(mean, std, best));
        }
    }
}
