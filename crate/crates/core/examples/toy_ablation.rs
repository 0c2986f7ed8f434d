//! Trains the toy denoiser with and without the segmentation term and
//! compares held-out Dice.
//!
//! cargo run --release --example toy_ablation -- [STEPS]

use emberforge::diffusion::{toy_train, ToyTrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let mut wins = 0;
    for seed in 0..5 {
        let base = ToyTrainConfig { steps, seed, ..Default::default() };
        let a = toy_train(&ToyTrainConfig { lambda: 0.0, ..base.clone() })?;
        let b = toy_train(&ToyTrainConfig { lambda: 0.1, ..base })?;
        wins += (b.held_out_dice_loss < a.held_out_dice_loss) as u32;
        println!(
            "seed {seed}: dice loss λ=0 {:.4}  λ=0.1 {:.4}  hard dice {:.4} / {:.4}",
            a.held_out_dice_loss, b.held_out_dice_loss, a.held_out_hard_dice, b.held_out_hard_dice
        );
    }
    println!("λ=0.1 better in {wins}/5");
    Ok(())
}
