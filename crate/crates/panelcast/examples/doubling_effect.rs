//! Interpreting indicator coefficients from a log-log model: the exact
//! effect of doubling the indicator is 2^b - 1, which differs from reading
//! the coefficient itself as the effect.
//!
//! Run with: cargo run --example doubling_effect

use panelcast::forecast::DoublingEffect;

fn main() {
    println!(
        "{:>8} {:>14} {:>16}",
        "coeff", "exact 2^b - 1", "coeff-as-effect"
    );
    for b in [0.0, 0.05, 0.06, 0.08, 0.25, 0.5, 1.0, -0.05] {
        let effect = DoublingEffect::of(b);
        println!(
            "{:>8.2} {:>13.2}% {:>15.2}%",
            b,
            effect.exact * 100.0,
            effect.approximate * 100.0
        );
    }
    println!();
    println!("{}", DoublingEffect::of(0.05).describe());
}
