//! Builds the canonical collision pairs for both fusion strategies and shows
//! that the aggregator without the `ε` term cannot tell them apart while the
//! `ε`-augmented aggregator can.
//!
//! ```text
//! cargo run --example check_theorems -- [epsilon]
//! ```

use conjoint::theory::{build_collision_pair, epsilon_grid, epsilon_sweep, verify_separation, CollisionKind};

fn main() -> conjoint::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    for kind in [CollisionKind::Theorem1, CollisionKind::Theorem2] {
        let pair = build_collision_pair(kind, (2, 5))?;
        let plain = verify_separation(&pair, epsilon, false)?;
        let augmented = verify_separation(&pair, epsilon, true)?;
        println!("{kind} ({} fusion), multiset sizes 2 and 5", pair.spec.strategy);
        println!("  without eps: h1 = {:?}, h2 = {:?}", plain.h_first, plain.h_second);
        println!("  with eps:    h1 = {:?}, h2 = {:?}", augmented.h_first, augmented.h_second);
        println!(
            "  difference {:?}, predicted {:?}, {}",
            augmented.difference,
            augmented.predicted,
            if augmented.passed() { "separated" } else { "NOT separated" }
        );
        let norms: Vec<String> = epsilon_sweep(&pair, &epsilon_grid())?
            .iter()
            .map(|r| format!("{:.3}", r.difference_norm()))
            .collect();
        println!("  |h1 - h2| for eps = 0.1..0.9: {}", norms.join(" "));
    }
    Ok(())
}
