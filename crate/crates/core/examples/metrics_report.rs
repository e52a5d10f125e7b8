//! Accuracy, macro-F1, headroom and error profile from a confusion grid.

use tierbench::metrics::{confusion, error_profile, evaluate, prediction_entropy, CiSpec};
use tierbench::stats::CiMethod;
use tierbench::Tier;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // rows are true tiers, columns predicted tiers
    let grid = [[6, 10, 14, 0], [3, 18, 9, 0], [2, 13, 15, 0], [3, 8, 19, 0]];
    let (mut preds, mut truths) = (Vec::new(), Vec::new());
    for (r, row) in grid.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            preds.extend(std::iter::repeat_n(Tier::from_index(c), n));
            truths.extend(std::iter::repeat_n(Tier::from_index(r), n));
        }
    }
    let ci = CiSpec { method: CiMethod::Wilson, level: 0.95, draws: 2000, seed: 1 };
    let report = evaluate(&preds, &truths, 0.25, Some(&ci))?;
    println!("accuracy {:.1}%  macro-F1 {:.3}  headroom {:.1}%", report.accuracy * 100.0, report.macro_f1, report.headroom * 100.0);
    if let Some(ci) = &report.ci {
        println!("95% Wilson interval [{:.3}, {:.3}]", ci.low, ci.high);
    }
    let cm = confusion(&preds, &truths)?;
    println!("predicted counts {:?}", cm.predicted_counts());
    println!("prediction entropy {:.3} bits", prediction_entropy(&cm.predicted_counts())?);
    println!("{:#?}", error_profile(&preds, &truths)?);
    Ok(())
}
