//! Experiment harness behind the `tcgemm` binary. Every subcommand writes
//! one CSV table; rows come out in a fixed order so output is byte-stable.

use std::io::Write;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{
    dyadic_decimal, empirical_underflow, exhaustive_length_distribution, relative_residual,
    UnderflowCurve,
};
use crate::fpkit::RoundingMode;
use crate::gemm_lab::{compare_terminal_rounding, delta_term_ablation, gemm, mean, GemmScheme, RunFlags};
use crate::genmat::{InputDist, Type2Variant};
use crate::mma_emu::MmaConfig;
use crate::split::SplitScheme;

#[derive(Debug, Parser)]
#[command(name = "tcgemm", version, about = "Mixed-precision GEMM accuracy lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact distribution of the mantissa length kept by an FP16 split.
    SplitStats {
        #[arg(long, default_value = "rn")]
        rounding: RoundingMode,
        #[command(flatten)]
        out: OutArg,
    },
    /// Closed-form and sampled underflow rates of the split residual.
    Underflow {
        #[arg(long, default_value_t = -30, allow_hyphen_values = true)]
        e_min: i32,
        #[arg(long, default_value_t = 14, allow_hyphen_values = true)]
        e_max: i32,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rounding of the split conversions.
        #[arg(long, default_value = "rz")]
        rounding: RoundingMode,
        #[command(flatten)]
        out: OutArg,
    },
    /// Relative residual of GEMM schemes against the FP64 reference.
    GemmAccuracy {
        #[command(flatten)]
        common: GemmArgs,
        #[arg(long, value_delimiter = ',', default_value = "fp32_simt,corrected3_halfhalf")]
        scheme: Vec<GemmScheme>,
    },
    /// Four-term in-unit accumulation with write-back RN versus RZ.
    RoundingAblation {
        #[command(flatten)]
        common: GemmArgs,
    },
    /// Corrected scheme with and without the ΔA·ΔB term.
    AblateDelta {
        #[command(flatten)]
        common: GemmArgs,
        /// `halfhalf` or `tf32`.
        #[arg(long, default_value = "halfhalf")]
        split: String,
    },
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    #[arg(long, value_delimiter = ',', default_value = "16")]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    k: Vec<usize>,
    /// `urand:lo,hi`, `exprand:a,b` or `type:1..4`.
    #[arg(long, default_value = "urand:-1,1", allow_hyphen_values = true)]
    dist: InputDist,
    /// Partner band of `type:2`: `list` or `caption`.
    #[arg(long, default_value = "list")]
    type2_variant: Type2Variant,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 16)]
    block_k: usize,
    #[arg(long, default_value_t = 25)]
    acc_bits: u32,
    #[command(flatten)]
    out: OutArg,
}

impl GemmArgs {
    fn sizes(&self) -> Vec<(usize, usize, usize)> {
        let mut sizes = Vec::new();
        for &m in &self.m {
            for &n in &self.n {
                for &k in &self.k {
                    sizes.push((m, n, k));
                }
            }
        }
        sizes.sort_unstable();
        sizes.dedup();
        sizes
    }

    fn cfg(&self) -> anyhow::Result<MmaConfig> {
        let cfg = MmaConfig::default()
            .with_block_k(self.block_k)
            .with_acc_bits(self.acc_bits);
        cfg.validate()?;
        Ok(cfg)
    }

    fn dist(&self) -> InputDist {
        self.dist.with_type2_variant(self.type2_variant)
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.m.iter().chain(&self.n).chain(&self.k).any(|&d| d == 0) {
            bail!("matrix dimensions must be positive");
        }
        Ok(())
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new().flexible(true).from_writer(w)
}

pub fn run(cli: &Cli, w: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::SplitStats { rounding, .. } => split_stats(*rounding, w),
        Command::Underflow {
            e_min,
            e_max,
            samples,
            seed,
            rounding,
            ..
        } => underflow(*e_min, *e_max, *samples, *seed, *rounding, w),
        Command::GemmAccuracy { common, scheme } => gemm_accuracy(common, scheme, w),
        Command::RoundingAblation { common } => rounding_ablation(common, w),
        Command::AblateDelta { common, split } => ablate_delta(common, split, w),
    }
}

impl Cli {
    pub fn out_path(&self) -> Option<&std::path::Path> {
        let out = match &self.command {
            Command::SplitStats { out, .. } | Command::Underflow { out, .. } => out,
            Command::GemmAccuracy { common, .. }
            | Command::RoundingAblation { common }
            | Command::AblateDelta { common, .. } => &common.out,
        };
        out.out.as_deref()
    }
}

/// Parses `args` (program name first) and returns the CSV as a string.
pub fn run_to_string<I, S>(args: I) -> anyhow::Result<String>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let mut buf = Vec::new();
    run(&cli, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

fn split_stats(rounding: RoundingMode, w: &mut dyn Write) -> anyhow::Result<()> {
    let dist = exhaustive_length_distribution(rounding);
    let mut out = csv_writer(w);
    out.write_record(["length", "prob_num", "prob_den"])?;
    for (len, p) in dist.probabilities.iter().rev() {
        out.write_record([len.to_string(), p.numer().to_string(), p.denom().to_string()])?;
    }
    out.write_record(["expectation".to_string(), dyadic_decimal(dist.expectation)])?;
    out.flush()?;
    Ok(())
}

fn underflow(
    e_min: i32,
    e_max: i32,
    samples: u64,
    seed: u64,
    rounding: RoundingMode,
    w: &mut dyn Write,
) -> anyhow::Result<()> {
    if e_min > e_max {
        bail!("--e-min ({e_min}) must not exceed --e-max ({e_max})");
    }
    let curve = UnderflowCurve::theory(e_min, e_max);
    let rates = curve
        .points
        .par_iter()
        .map(|p| empirical_underflow(p.e_v, samples, seed, rounding))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = csv_writer(w);
    out.write_record(["e_v", "p_u_theory", "p_ugu_theory", "p_u_emp", "p_ugu_emp", "samples"])?;
    for (p, (u, ugu)) in curve.points.iter().zip(rates) {
        out.write_record([
            p.e_v.to_string(),
            dyadic_decimal(p.p_u),
            dyadic_decimal(p.p_u_plus_gu),
            fmt_f64(u),
            fmt_f64(ugu),
            samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn gemm_accuracy(args: &GemmArgs, schemes: &[GemmScheme], w: &mut dyn Write) -> anyhow::Result<()> {
    args.check()?;
    if schemes.is_empty() {
        bail!("at least one scheme is required");
    }
    let cfg = args.cfg()?;
    let dist = args.dist();
    let cells: Vec<_> = args
        .sizes()
        .into_iter()
        .flat_map(|size| args.seeds.iter().map(move |&seed| (size, seed)))
        .collect();
    // One row of results per (size, seed), one entry per scheme.
    let results = cells
        .par_iter()
        .map(|&((m, n, k), seed)| -> anyhow::Result<Vec<(f64, RunFlags)>> {
            let (a, b) = dist.pair(m, n, k, seed)?;
            let reference = gemm(&a, &b, GemmScheme::Fp64Ref, &cfg)?.output;
            schemes
                .iter()
                .map(|&s| {
                    let run = gemm(&a, &b, s, &cfg)
                        .with_context(|| format!("scheme {s} at {m}x{n}x{k}, seed {seed}"))?;
                    Ok((relative_residual(&run.output, &reference)?, run.flags))
                })
                .collect()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut out = csv_writer(w);
    out.write_record(["m", "n", "k", "scheme", "seed", "residual", "flags"])?;
    let per_size = args.seeds.len();
    for (chunk, cells) in results.chunks(per_size).zip(cells.chunks(per_size)) {
        let (m, n, k) = cells[0].0;
        for (si, scheme) in schemes.iter().enumerate() {
            let mut union = RunFlags::default();
            let mut residuals = Vec::new();
            for (row, &(_, seed)) in chunk.iter().zip(cells) {
                let (res, flags) = row[si];
                union.saw_overflow |= flags.saw_overflow;
                union.saw_out_of_range |= flags.saw_out_of_range;
                residuals.push(res);
                out.write_record([
                    m.to_string(),
                    n.to_string(),
                    k.to_string(),
                    scheme.to_string(),
                    seed.to_string(),
                    fmt_f64(res),
                    flags.to_string(),
                ])?;
            }
            out.write_record([
                m.to_string(),
                n.to_string(),
                k.to_string(),
                scheme.to_string(),
                "avg".to_string(),
                fmt_f64(mean(&residuals)),
                union.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn seed_label(seed: Option<u64>) -> String {
    seed.map_or_else(|| "avg".to_string(), |s| s.to_string())
}

fn rounding_ablation(args: &GemmArgs, w: &mut dyn Write) -> anyhow::Result<()> {
    args.check()?;
    let rows = compare_terminal_rounding(&args.sizes(), &args.dist(), &args.seeds, &args.cfg()?)?;
    let mut out = csv_writer(w);
    out.write_record(["m", "n", "k", "seed", "residual_rn", "residual_rz", "residual_fp32"])?;
    for r in rows {
        out.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            seed_label(r.seed),
            fmt_f64(r.residual_rn),
            fmt_f64(r.residual_rz),
            fmt_f64(r.residual_fp32),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn ablate_delta(args: &GemmArgs, split: &str, w: &mut dyn Write) -> anyhow::Result<()> {
    args.check()?;
    let split = match split {
        "halfhalf" => SplitScheme::HALFHALF,
        "tf32" => SplitScheme::TF32TF32,
        other => bail!("unknown split {other:?}; expected halfhalf or tf32"),
    };
    let cfg = args.cfg()?;
    let dist = args.dist();
    let mut out = csv_writer(w);
    out.write_record(["m", "n", "k", "seed", "residual_3term", "residual_4term", "max_ulp_diff"])?;
    for (m, n, k) in args.sizes() {
        let rows = args
            .seeds
            .par_iter()
            .map(|&seed| -> anyhow::Result<(u64, f64, f64, u64)> {
                let (a, b) = dist.pair(m, n, k, seed)?;
                let reference = gemm(&a, &b, GemmScheme::Fp64Ref, &cfg)?.output;
                let r = delta_term_ablation(&a, &b, split, &cfg)?;
                Ok((
                    seed,
                    relative_residual(&r.three_term, &reference)?,
                    relative_residual(&r.four_term, &reference)?,
                    r.max_ulp_diff,
                ))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        for &(seed, r3, r4, ulps) in &rows {
            out.write_record([
                m.to_string(),
                n.to_string(),
                k.to_string(),
                seed.to_string(),
                fmt_f64(r3),
                fmt_f64(r4),
                ulps.to_string(),
            ])?;
        }
        let col = |f: fn(&(u64, f64, f64, u64)) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>());
        out.write_record([
            m.to_string(),
            n.to_string(),
            k.to_string(),
            "avg".to_string(),
            fmt_f64(col(|r| r.1)),
            fmt_f64(col(|r| r.2)),
            rows.iter().map(|r| r.3).max().unwrap_or(0).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
