// Classification metrics, seed aggregation and the paired t-test.

use lcv::corpus::Label;
use lcv::eval::{aggregate_runs, compute_metrics, mean_std, paired_t_test, MetricReport, TTestResult};

fn labels(bits: &[u8]) -> Vec<Label> {
    bits.iter().map(|&b| if b == 1 { Label::Misinfo } else { Label::Real }).collect()
}

pub fn metrics() -> Result<(MetricReport, TTestResult), Box<dyn std::error::Error>> {
    let truth = labels(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 0]);
    let preds = labels(&[1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1]);
    let report = compute_metrics(&preds, &truth)?;
    println!(
        "macro-F1 {:.4}  accuracy {:.4}  F1 real {:.4}  F1 misinfo {:.4}",
        report.macro_f1, report.accuracy, report.f1_real, report.f1_misinfo
    );
    println!("confusion (rows true, cols predicted): {:?}", report.confusion);

    let seeds = [0.7864, 0.8869, 0.8123];
    let ms = mean_std(&seeds)?;
    println!("seed macro-F1 {:.4} ± {:.4}", ms.mean, ms.std);

    let agg = aggregate_runs(&[report.clone(), report.clone()])?;
    println!("aggregate over {} identical runs: std {:.1}", agg.runs, agg.macro_f1.std);

    let t = paired_t_test(&[0.81, 0.79, 0.84], &[0.78, 0.77, 0.80])?;
    println!("paired t = {:.4}, p = {:.4}, dof {}", t.t, t.p, t.dof);
    Ok((report, t))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    metrics()?;
    Ok(())
}
