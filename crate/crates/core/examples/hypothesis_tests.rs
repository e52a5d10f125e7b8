//! Binomial tests against chance, paired McNemar tests and Holm adjustment.

use tierbench::stats::{binomial_test, holm, mcnemar_counts, proportion_ci, CiMethod, McNemarMode, Sidedness};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = binomial_test(39, 120, 0.25, Sidedness::Greater)?;
    println!("39/120 vs chance: p = {:.4}", b.p);
    for method in [CiMethod::Wilson, CiMethod::ClopperPearson, CiMethod::Normal] {
        let ci = proportion_ci(39, 120, 0.95, method)?;
        println!("{method:?}: [{:.4}, {:.4}]", ci.low, ci.high);
    }
    let discordant = [(38, 14), (32, 13), (20, 17)];
    let mut ps = Vec::new();
    for (b, c) in discordant {
        let exact = mcnemar_counts(b, c, McNemarMode::Exact);
        let cc = mcnemar_counts(b, c, McNemarMode::ContinuityCorrected);
        println!("b={b} c={c}: exact p {:.5}, corrected chi2 {:.3} p {:.5}", exact.p, cc.statistic.unwrap_or(0.0), cc.p);
        ps.push(exact.p);
    }
    println!("Holm-adjusted {:?}", holm(&ps));
    Ok(())
}
