//! Locates the two smoothness constants of the softplus conditioner:
//! the supremum of -(log softplus)'' (how smooth the entropic regularizer
//! can be) and the supremum of softplus * softplus'' (the per-coordinate
//! factor in the energy smoothness statistic).
//!
//! ```text
//! cargo run --release --example softplus_constants
//! ```

use bbvi_lab::theory;

fn main() {
    let (entropy_smoothness, energy_factor) = theory::softplus_constants();
    println!("softplus entropy smoothness constant: {entropy_smoothness:.8}");
    println!("softplus energy smoothness factor:    {energy_factor:.8}");
    println!(
        "exp entropy smoothness constant:      {:.8}",
        theory::exp_entropy_smoothness()
    );
    println!();
    println!("The identity conditioner keeps the energy strongly convex but");
    println!("makes the entropy non-smooth near the domain boundary; softplus");
    println!("trades that for a smooth entropy (constant above) at the cost");
    println!("of a flat optimization landscape at small scales.");
}
