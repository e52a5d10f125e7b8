//! Toy group-relative policy optimisation with privileged routing.

use tierbench::rlsim::{greedy_accuracy, toy_prompts, train, ToyPolicy, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TrainConfig { steps: 40, ..TrainConfig::default() };
    let prompts = toy_prompts(cfg.prompts, cfg.buckets);
    println!("untrained greedy accuracy {:.2}", greedy_accuracy(&ToyPolicy::with_hints(cfg.hint_strength), &prompts));
    let (policy, logs) = train(&cfg)?;
    for l in logs.iter().step_by(5) {
        println!(
            "step {:>2}: reward {:.3} privileged {:.2} zero-advantage {:.2} diagnostic accuracy {:.3}",
            l.step, l.mean_reward, l.fraction_privileged, l.fraction_zero_advantage, l.diagnostic_accuracy
        );
    }
    println!("trained greedy accuracy {:.2}", greedy_accuracy(&policy, &prompts));
    Ok(())
}
