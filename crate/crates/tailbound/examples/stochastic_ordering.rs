//! The survival ordering behind the bracketing method: the lower bound
//! chain, the model chain, and the upper bound chain, stationary survival
//! curves side by side.
//!
//!     cargo run --release --example stochastic_ordering

use serde_json::json;
use tailbound::{models, sandwich};

fn main() {
    let params = json!({"beta_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                        "gamma_law": {"constant": 1.0}});
    let family = models::family("ricker_w", &params).unwrap();
    let bounds = models::bounds_from_model("ricker_w", &params, 8.0).unwrap();

    let rep = sandwich::ordering_check(&family, &bounds, 60_000, 200, 12, 5).unwrap();
    println!("stochastic Ricker conjugate chain, 60k stationary draws per curve\n");
    println!(
        "{:>10} {:>12} {:>12} {:>12}   ordered",
        "t", "P(F > t)", "P(model > t)", "P(G > t)"
    );
    for row in &rep.rows {
        println!(
            "{:>10.3} {:>12.5} {:>12.5} {:>12.5}   {}",
            row.t, row.survival_lower_chain, row.survival_model, row.survival_upper_chain, row.ordered
        );
    }
    println!("\nall ordered within 3 pooled SE: {}", rep.all_ordered);
}
