use clap::Args;

use plainpose::config::{parse_hw, AttentionMode, DecoderKind};
use plainpose::cost::cost_report;
use plainpose::error::Result;

use super::{group_digits, human};

#[derive(Args)]
pub struct CostArgs {
    /// Preset name (vitpose-b, vitpose-l, vitpose-h, toy-s, toy-m).
    #[arg(long)]
    pub preset: String,
    /// Input resolution HxW, e.g. 256x192.
    #[arg(long)]
    pub input: Option<String>,
    /// Patch-embedding stride (8 for 1/8 features).
    #[arg(long)]
    pub stride: Option<usize>,
    /// full | window | window_shift | window_pool | window_shift_pool | interleaved.
    #[arg(long)]
    pub attention: Option<String>,
    /// Window size HxW, e.g. 8x8 or 16x12.
    #[arg(long)]
    pub window: Option<String>,
    /// classic | simple.
    #[arg(long)]
    pub decoder: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Emit the full report as JSON instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Include the per-layer breakdown in the table output.
    #[arg(long)]
    pub per_layer: bool,
}

pub fn run(args: CostArgs) -> Result<()> {
    let mut cfg = plainpose::config::preset(&args.preset)?;
    if let Some(s) = &args.input {
        cfg.encoder.input_hw = parse_hw(s)?;
    }
    if let Some(v) = args.stride {
        cfg.encoder.patch_stride = v;
    }
    if let Some(s) = &args.attention {
        cfg.encoder.attention = AttentionMode::parse(s)?;
    }
    if let Some(s) = &args.window {
        cfg.encoder.window_hw = parse_hw(s)?;
    }
    if let Some(s) = &args.decoder {
        cfg.decoder = match s.as_str() {
            "classic" => DecoderKind::Classic,
            "simple" => DecoderKind::Simple,
            other => {
                return Err(plainpose::Error::InvalidConfig {
                    detail: format!("unknown decoder: {other}"),
                });
            }
        };
    }
    for warning in cfg.validate()? {
        eprintln!("warning: {}", warning.0);
    }
    let report = cost_report(&cfg, args.batch);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let (h, w) = cfg.encoder.input_hw;
    println!(
        "{} @ {}x{}, stride {}, attention {}, decoder {:?}",
        args.preset,
        h,
        w,
        cfg.encoder.patch_stride,
        cfg.encoder.attention.name(),
        cfg.decoder
    );
    let row = |name: &str, v: u64| println!("{name:<28}{:>18}  ({})", group_digits(v), human(v));
    row("params (backbone)", report.params);
    row("params (decoders)", report.decoder_params);
    row("params (total)", report.total_params);
    row("flops  (backbone, MACs)", report.flops);
    row("flops  (decoders, MACs)", report.decoder_flops);
    row("flops  (total, MACs)", report.total_flops);
    row("flops  (minor ops)", report.minor_flops);
    row("activations (elements)", report.activation_elems);
    println!(
        "{:<28}{:>18}  ({}, batch {})",
        "activation memory (bytes)",
        group_digits(report.activation_bytes),
        human(report.activation_bytes),
        report.batch
    );
    if args.per_layer {
        println!("\n{:<28}{:>16}{:>18}{:>14}", "layer", "params", "flops", "act elems");
        for l in &report.per_layer {
            println!(
                "{:<28}{:>16}{:>18}{:>14}",
                l.name,
                group_digits(l.params),
                group_digits(l.flops),
                group_digits(l.activation_elems)
            );
        }
    }
    Ok(())
}
