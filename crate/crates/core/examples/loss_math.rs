//! Clean-latent recovery, soft-mask convergence and the analytic loss
//! gradients checked against central differences.
//!
//! cargo run --release --example loss_math -- [SEED]

use emberforge::diffusion::run_loss_check;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let r = run_loss_check(seed)?;
    println!("identity: {} samples, max error {:.2e}", r.identity.samples, r.identity.max_abs_error);
    for g in &r.gradients {
        println!("grad {:<6} {} coords ({} skipped), max rel {:.2e}", g.term, g.checked, g.skipped, g.max_rel_error);
    }
    for (k, d) in r.soft_mask_convergence.k.iter().zip(&r.soft_mask_convergence.max_deviation) {
        println!("k = {k:<8} max |soft - hard| = {d:.3e}");
    }
    println!("passed: {}", r.passed);
    Ok(())
}
