use std::path::PathBuf;

use clap::Args;

use plainpose::error::{Error, Result};
use plainpose::eval::coco::{load_gt, load_predictions};
use plainpose::eval::{ap_ar, pckh};
use plainpose::schema::Schema;

#[derive(Args)]
pub struct EvalArgs {
    /// Ground-truth JSON (COCO keypoint format).
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions JSON (COCO results format).
    #[arg(long)]
    pub pred: PathBuf,
    /// Schema name or path.
    #[arg(long)]
    pub schema: String,
    /// oks-ap | pckh.
    #[arg(long, default_value = "oks-ap")]
    pub metric: String,
    /// PCKh tolerance as a fraction of head size.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Emit JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let schema = Schema::resolve(&args.schema)?;
    let gt = load_gt(&args.gt, &schema)?;
    let preds = load_predictions(&args.pred, &schema)?;
    match args.metric.as_str() {
        "oks-ap" => {
            let report = ap_ar(&preds, &gt.annotations, schema.sigmas()?);
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("{:<8}{:>8}", "metric", "value");
                let row = |name: &str, v: f64| {
                    if v < 0.0 {
                        println!("{name:<8}{:>8}", "n/a");
                    } else {
                        println!("{name:<8}{:>8.1}", v * 100.0);
                    }
                };
                row("AP", report.ap);
                row("AP50", report.ap50);
                row("AP75", report.ap75);
                row("AP_M", report.ap_m);
                row("AP_L", report.ap_l);
                row("AR", report.ar);
                row("AR50", report.ar50);
                row("AR75", report.ar75);
            }
        }
        "pckh" => {
            let report = pckh(&preds, &gt.annotations, &schema, args.alpha)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("{:<16}{:>8}", "joint", "pckh");
                for (name, v) in &report.per_joint {
                    println!("{name:<16}{:>8.1}", v * 100.0);
                }
                println!("{:<16}{:>8.1}", "mean", report.mean * 100.0);
                println!(
                    "({} instances evaluated, {} skipped)",
                    report.evaluated_instances, report.skipped_instances
                );
            }
        }
        other => {
            return Err(Error::InvalidConfig {
                detail: format!("unknown metric: {other}"),
            });
        }
    }
    Ok(())
}
